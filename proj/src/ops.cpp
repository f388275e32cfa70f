#include "mixtea/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mixtea::ops {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_string() + " vs " +
                     b.value().shape_string());
  }
}

void require_column(const Var& v, const char* op) {
  if (v.cols() != 1) throw ShapeError(std::string(op) + ": expected a column vector");
}

// Accumulates `g` into v's gradient when v participates in differentiation.
void accumulate(Tape& t, const Var& v, const Tensor& g) {
  if (!t.requires_grad(v)) return;
  auto buf = t.grad_buffer(v).data();
  const auto src = g.data();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += src[i];
}

template <typename F>
Var elementwise(Var x, const char* op, F f) {
  Tensor out(x.rows(), x.cols());
  const auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f.value(in[i]);
  return x.tape().record(
      std::move(out), {x},
      [x, f](Tape& t, const Tensor&, const Tensor& g) {
        if (!t.requires_grad(x)) return;
        auto& gx = t.grad_buffer(x);
        const auto in = x.value().data();
        auto d = gx.data();
        const auto gd = g.data();
        for (std::size_t i = 0; i < in.size(); ++i) d[i] += gd[i] * f.derivative(in[i]);
      },
      op);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tensor out = mixtea::matmul(a.value(), b.value());
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Tensor&, const Tensor& g) {
        if (t.requires_grad(a)) accumulate(t, a, mixtea::matmul(g, b.value().transposed()));
        if (t.requires_grad(b)) accumulate(t, b, mixtea::matmul(a.value().transposed(), g));
      },
      "matmul");
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Tensor&, const Tensor& g) {
        accumulate(t, a, g);
        accumulate(t, b, g);
      },
      "add");
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const auto bd = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Tensor&, const Tensor& g) {
        accumulate(t, a, g);
        if (!t.requires_grad(b)) return;
        auto d = t.grad_buffer(b).data();
        const auto gd = g.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gd[i];
      },
      "sub");
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  return x.tape().record(
      std::move(out), {x},
      [x, factor](Tape& t, const Tensor&, const Tensor& g) {
        if (!t.requires_grad(x)) return;
        auto d = t.grad_buffer(x).data();
        const auto gd = g.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * gd[i];
      },
      "scale");
}

Var add_scalar(Var x, double value) {
  Tensor out = x.value();
  for (double& v : out.data()) v += value;
  return x.tape().record(
      std::move(out), {x},
      [x](Tape& t, const Tensor&, const Tensor& g) { accumulate(t, x, g); }, "add_scalar");
}

Var sum(Var x) {
  return x.tape().record(
      Tensor::scalar(x.value().sum()), {x},
      [x](Tape& t, const Tensor&, const Tensor& g) {
        if (!t.requires_grad(x)) return;
        const double s = g.item();
        for (double& v : t.grad_buffer(x).data()) v += s;
      },
      "sum");
}

Var relu(Var x) {
  struct F {
    double value(double v) const { return v > 0.0 ? v : 0.0; }
    double derivative(double v) const { return v > 0.0 ? 1.0 : 0.0; }
  };
  return elementwise(x, "relu", F{});
}

Var elu(Var x) {
  struct F {
    double value(double v) const { return v > 0.0 ? v : std::expm1(v); }
    double derivative(double v) const { return v > 0.0 ? 1.0 : std::exp(v); }
  };
  return elementwise(x, "elu", F{});
}

Var leaky_relu(Var x, double negative_slope) {
  struct F {
    double slope;
    double value(double v) const { return v > 0.0 ? v : slope * v; }
    double derivative(double v) const { return v > 0.0 ? 1.0 : slope; }
  };
  return elementwise(x, "leaky_relu", F{negative_slope});
}

Var concat_columns(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_columns: no inputs");
  const auto rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_columns: row count mismatch");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.row(r).begin(), v.cols(), out.row(r).begin() + offset);
    }
    offset += v.cols();
  }

  std::vector<Var> inputs(parts.begin(), parts.end());
  auto backward = [inputs](Tape& t, const Tensor&, const Tensor& g) {
    std::size_t off = 0;
    for (const auto& p : inputs) {
      const auto pc = p.cols();
      if (t.requires_grad(p)) {
        auto& gp = t.grad_buffer(p);
        for (std::size_t r = 0; r < gp.rows(); ++r) {
          const auto src = g.row(r).subspan(off, pc);
          auto dst = gp.row(r);
          for (std::size_t c = 0; c < pc; ++c) dst[c] += src[c];
        }
      }
      off += pc;
    }
  };

  return parts.front().tape().record(std::move(out), parts, std::move(backward), "concat_columns");
}

Var gather_rows(Var x, std::vector<std::size_t> ids) {
  Tensor out = mixtea::gather_rows(x.value(), ids);
  return x.tape().record(
      std::move(out), {x},
      [x, ids = std::move(ids)](Tape& t, const Tensor&, const Tensor& g) {
        if (!t.requires_grad(x)) return;
        auto& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          auto dst = gx.row(ids[i]);
          const auto src = g.row(i);
          for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
      },
      "gather_rows");
}

Var segment_mean(Var values, const Segments& segments) {
  const auto& v = values.value();
  const auto n = segments.count();
  Tensor out(n, v.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto cnt = segments.size(i);
    if (cnt == 0) continue;
    auto o = out.row(i);
    for (std::size_t e = segments.begin(i); e < segments.end(i); ++e) {
      const auto idx = segments.indices[e];
      if (idx >= v.rows()) throw ShapeError("segment_mean: row id out of range");
      const auto src = v.row(idx);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += src[c];
    }
    const double inv = 1.0 / static_cast<double>(cnt);
    for (double& x : o) x *= inv;
  }
  const Segments* seg = &segments;
  return values.tape().record(
      std::move(out), {values},
      [values, seg](Tape& t, const Tensor&, const Tensor& g) {
        if (!t.requires_grad(values)) return;
        auto& gv = t.grad_buffer(values);
        for (std::size_t i = 0; i < seg->count(); ++i) {
          const auto cnt = seg->size(i);
          if (cnt == 0) continue;
          const double inv = 1.0 / static_cast<double>(cnt);
          const auto src = g.row(i);
          for (std::size_t e = seg->begin(i); e < seg->end(i); ++e) {
            auto dst = gv.row(seg->indices[e]);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += inv * src[c];
          }
        }
      },
      "segment_mean");
}

Var row_l2_distance(Var a, Var b) {
  require_same_shape(a, b, "row_l2_distance");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double sq = 0.0;
    const auto ar = av.row(r);
    const auto br = bv.row(r);
    for (std::size_t c = 0; c < ar.size(); ++c) {
      const double d = ar[c] - br[c];
      sq += d * d;
    }
    out(r, 0) = std::sqrt(sq);
  }
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Tensor& dist, const Tensor& g) {
        const auto& av = a.value();
        const auto& bv = b.value();
        Tensor* ga = t.requires_grad(a) ? &t.grad_buffer(a) : nullptr;
        Tensor* gb = t.requires_grad(b) ? &t.grad_buffer(b) : nullptr;
        for (std::size_t r = 0; r < av.rows(); ++r) {
          const double d = dist(r, 0);
          if (d == 0.0) continue;
          const double coef = g(r, 0) / d;
          const auto ar = av.row(r);
          const auto br = bv.row(r);
          for (std::size_t c = 0; c < ar.size(); ++c) {
            const double diff = coef * (ar[c] - br[c]);
            if (ga) (*ga)(r, c) += diff;
            if (gb) (*gb)(r, c) -= diff;
          }
        }
      },
      "row_l2_distance");
}

Var cosine_sim_matrix(Var a, Var b) {
  Tensor out = mixtea::cosine_similarity(a.value(), b.value());
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, const Tensor&, const Tensor& g) {
        const Tensor an = row_normalized(a.value());
        const Tensor bn = row_normalized(b.value());
        // d/dx of x/|x| applied to upstream u: (u - (u.xn) xn) / |x|
        auto project = [](const Tensor& raw, const Tensor& unit, Tensor upstream) {
          for (std::size_t r = 0; r < raw.rows(); ++r) {
            const auto x = raw.row(r);
            const auto n = unit.row(r);
            auto u = upstream.row(r);
            double norm = 0.0, dot = 0.0;
            for (std::size_t c = 0; c < x.size(); ++c) {
              norm += x[c] * x[c];
              dot += u[c] * n[c];
            }
            const double inv = 1.0 / std::sqrt(norm);
            for (std::size_t c = 0; c < x.size(); ++c) u[c] = (u[c] - dot * n[c]) * inv;
          }
          return upstream;
        };
        if (t.requires_grad(a)) accumulate(t, a, project(a.value(), an, mixtea::matmul(g, bn)));
        if (t.requires_grad(b)) {
          accumulate(t, b, project(b.value(), bn, mixtea::matmul(g.transposed(), an)));
        }
      },
      "cosine_sim_matrix");
}

Var row_softmax(Var x, double temperature) {
  Tensor out = mixtea::row_softmax(x.value(), temperature);
  return x.tape().record(
      std::move(out), {x},
      [x, temperature](Tape& t, const Tensor& y, const Tensor& g) {
        if (!t.requires_grad(x)) return;
        auto& gx = t.grad_buffer(x);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          const auto yr = y.row(r);
          const auto gr = g.row(r);
          double dot = 0.0;
          for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
          auto dst = gx.row(r);
          for (std::size_t c = 0; c < yr.size(); ++c) dst[c] += yr[c] * (gr[c] - dot) / temperature;
        }
      },
      "row_softmax");
}

Var scale_by_entry(Var x, Var weights, std::size_t index) {
  if (index >= weights.value().size()) throw ShapeError("scale_by_entry: index out of range");
  const double w = weights.value().data()[index];
  Tensor out = x.value();
  for (double& v : out.data()) v *= w;
  return x.tape().record(
      std::move(out), {x, weights},
      [x, weights, index](Tape& t, const Tensor&, const Tensor& g) {
        const double w = weights.value().data()[index];
        const auto gd = g.data();
        if (t.requires_grad(x)) {
          auto d = t.grad_buffer(x).data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += w * gd[i];
        }
        if (t.requires_grad(weights)) {
          const auto xd = x.value().data();
          double s = 0.0;
          for (std::size_t i = 0; i < xd.size(); ++i) s += gd[i] * xd[i];
          t.grad_buffer(weights).data()[index] += s;
        }
      },
      "scale_by_entry");
}

Var pair_attention_logits(Var z, Var a, const Segments& adjacency) {
  const auto& zv = z.value();
  const auto d = zv.cols();
  if (a.rows() != 2 * d || a.cols() != 1) {
    throw ShapeError("pair_attention_logits: attention vector must be " + std::to_string(2 * d) +
                     "x1, got " + a.value().shape_string());
  }
  if (adjacency.count() != zv.rows()) throw ShapeError("pair_attention_logits: segment count");
  // Per-node halves: s_i = a[:d].z_i, u_j = a[d:].z_j.
  const auto av = a.value().data();
  std::vector<double> self_score(zv.rows()), other_score(zv.rows());
  for (std::size_t i = 0; i < zv.rows(); ++i) {
    const auto zi = zv.row(i);
    double s = 0.0, u = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      s += av[c] * zi[c];
      u += av[d + c] * zi[c];
    }
    self_score[i] = s;
    other_score[i] = u;
  }
  Tensor out(adjacency.indices.size(), 1);
  for (std::size_t i = 0; i < adjacency.count(); ++i) {
    for (std::size_t e = adjacency.begin(i); e < adjacency.end(i); ++e) {
      const auto j = adjacency.indices[e];
      if (j >= zv.rows()) throw ShapeError("pair_attention_logits: neighbor id out of range");
      out(e, 0) = self_score[i] + other_score[j];
    }
  }
  const Segments* adj = &adjacency;
  return z.tape().record(
      std::move(out), {z, a},
      [z, a, adj](Tape& t, const Tensor&, const Tensor& g) {
        const auto& zv = z.value();
        const auto d = zv.cols();
        // Collapse edge gradients onto the two per-node scores first.
        std::vector<double> g_self(zv.rows(), 0.0), g_other(zv.rows(), 0.0);
        for (std::size_t i = 0; i < adj->count(); ++i) {
          for (std::size_t e = adj->begin(i); e < adj->end(i); ++e) {
            g_self[i] += g(e, 0);
            g_other[adj->indices[e]] += g(e, 0);
          }
        }
        if (t.requires_grad(z)) {
          const auto av = a.value().data();
          auto& gz = t.grad_buffer(z);
          for (std::size_t i = 0; i < zv.rows(); ++i) {
            auto dst = gz.row(i);
            for (std::size_t c = 0; c < d; ++c) dst[c] += g_self[i] * av[c] + g_other[i] * av[d + c];
          }
        }
        if (t.requires_grad(a)) {
          auto ga = t.grad_buffer(a).data();
          for (std::size_t i = 0; i < zv.rows(); ++i) {
            const auto zi = zv.row(i);
            for (std::size_t c = 0; c < d; ++c) {
              ga[c] += g_self[i] * zi[c];
              ga[d + c] += g_other[i] * zi[c];
            }
          }
        }
      },
      "pair_attention_logits");
}

Var segment_softmax(Var scores, const Segments& segments) {
  require_column(scores, "segment_softmax");
  if (scores.rows() != segments.indices.size()) throw ShapeError("segment_softmax: edge count");
  const auto& s = scores.value();
  Tensor out(s.rows(), 1);
  for (std::size_t i = 0; i < segments.count(); ++i) {
    const auto b = segments.begin(i), e = segments.end(i);
    if (b == e) continue;
    double mx = s(b, 0);
    for (auto k = b + 1; k < e; ++k) mx = std::max(mx, s(k, 0));
    double z = 0.0;
    for (auto k = b; k < e; ++k) {
      out(k, 0) = std::exp(s(k, 0) - mx);
      z += out(k, 0);
    }
    for (auto k = b; k < e; ++k) out(k, 0) /= z;
  }
  const Segments* seg = &segments;
  return scores.tape().record(
      std::move(out), {scores},
      [scores, seg](Tape& t, const Tensor& y, const Tensor& g) {
        if (!t.requires_grad(scores)) return;
        auto& gs = t.grad_buffer(scores);
        for (std::size_t i = 0; i < seg->count(); ++i) {
          double dot = 0.0;
          for (auto k = seg->begin(i); k < seg->end(i); ++k) dot += y(k, 0) * g(k, 0);
          for (auto k = seg->begin(i); k < seg->end(i); ++k) gs(k, 0) += y(k, 0) * (g(k, 0) - dot);
        }
      },
      "segment_softmax");
}

Var segment_weighted_sum(Var weights, Var values, const Segments& segments) {
  require_column(weights, "segment_weighted_sum");
  if (weights.rows() != segments.indices.size()) {
    throw ShapeError("segment_weighted_sum: edge count");
  }
  const auto& w = weights.value();
  const auto& v = values.value();
  Tensor out(segments.count(), v.cols());
  for (std::size_t i = 0; i < segments.count(); ++i) {
    auto o = out.row(i);
    for (auto e = segments.begin(i); e < segments.end(i); ++e) {
      const auto j = segments.indices[e];
      if (j >= v.rows()) throw ShapeError("segment_weighted_sum: row id out of range");
      const double we = w(e, 0);
      const auto src = v.row(j);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += we * src[c];
    }
  }
  const Segments* seg = &segments;
  return weights.tape().record(
      std::move(out), {weights, values},
      [weights, values, seg](Tape& t, const Tensor&, const Tensor& g) {
        const auto& w = weights.value();
        const auto& v = values.value();
        Tensor* gw = t.requires_grad(weights) ? &t.grad_buffer(weights) : nullptr;
        Tensor* gv = t.requires_grad(values) ? &t.grad_buffer(values) : nullptr;
        for (std::size_t i = 0; i < seg->count(); ++i) {
          const auto gi = g.row(i);
          for (auto e = seg->begin(i); e < seg->end(i); ++e) {
            const auto j = seg->indices[e];
            const auto vj = v.row(j);
            if (gw) {
              double dot = 0.0;
              for (std::size_t c = 0; c < gi.size(); ++c) dot += gi[c] * vj[c];
              (*gw)(e, 0) += dot;
            }
            if (gv) {
              const double we = w(e, 0);
              auto dst = gv->row(j);
              for (std::size_t c = 0; c < gi.size(); ++c) dst[c] += we * gi[c];
            }
          }
        }
      },
      "segment_weighted_sum");
}

Var softmax_cross_entropy(Var logits, const Tensor& targets, double temperature) {
  if (!logits.value().same_shape(targets)) {
    throw ShapeError("softmax_cross_entropy: shape mismatch " + logits.value().shape_string() +
                     " vs " + targets.shape_string());
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax temperature must be > 0");
  const auto& x = logits.value();
  double loss = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    const auto tr = targets.row(r);
    double mx = *std::max_element(xr.begin(), xr.end());
    double z = 0.0;
    for (double v : xr) z += std::exp((v - mx) / temperature);
    const double lse = std::log(z);
    for (std::size_t c = 0; c < xr.size(); ++c) {
      if (tr[c] == 0.0) continue;
      loss -= tr[c] * ((xr[c] - mx) / temperature - lse);
    }
  }
  return logits.tape().record(
      Tensor::scalar(loss), {logits},
      [logits, targets, temperature](Tape& t, const Tensor&, const Tensor& g) {
        if (!t.requires_grad(logits)) return;
        const Tensor p = mixtea::row_softmax(logits.value(), temperature);
        auto& gx = t.grad_buffer(logits);
        const double scale = g.item() / temperature;
        for (std::size_t r = 0; r < p.rows(); ++r) {
          const auto pr = p.row(r);
          const auto tr = targets.row(r);
          double mass = 0.0;
          for (double v : tr) mass += v;
          auto dst = gx.row(r);
          for (std::size_t c = 0; c < pr.size(); ++c) dst[c] += scale * (pr[c] * mass - tr[c]);
        }
      },
      "softmax_cross_entropy");
}

}  // namespace mixtea::ops
