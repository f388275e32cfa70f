#include "mixtea/pseudo_map.hpp"

#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "mixtea/ops.hpp"

namespace mixtea {

VoteWeight::VoteWeight(double beta) : beta_(beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("vote weight must lie in [0, 1], got " + std::to_string(beta));
  }
}

Tensor one_hot_argmax(const Tensor& similarity) {
  Tensor out(similarity.rows(), similarity.cols());
  if (similarity.cols() == 0) return out;
  for (std::size_t r = 0; r < similarity.rows(); ++r) {
    const auto row = similarity.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out(r, best) = 1.0;
  }
  return out;
}

Tensor bdv_fuse(const Tensor& sim_source_to_target, const Tensor& sim_target_to_source,
                VoteWeight weight) {
  if (sim_source_to_target.rows() != sim_target_to_source.cols() ||
      sim_source_to_target.cols() != sim_target_to_source.rows()) {
    throw ShapeError("bdv_fuse: " + sim_source_to_target.shape_string() + " and " +
                     sim_target_to_source.shape_string() + " are not transposed shapes");
  }
  const double beta = weight.beta();
  Tensor fused(sim_source_to_target.rows(), sim_source_to_target.cols());
  const Tensor forward = one_hot_argmax(sim_source_to_target);
  const Tensor backward = one_hot_argmax(sim_target_to_source);
  for (std::size_t i = 0; i < fused.rows(); ++i) {
    for (std::size_t j = 0; j < fused.cols(); ++j) {
      const bool f = forward(i, j) != 0.0;
      const bool b = backward(j, i) != 0.0;
      // Mutual votes are pinned to 1 rather than beta + (1 - beta) to avoid rounding drift.
      fused(i, j) = (f && b) ? 1.0 : f ? beta : b ? 1.0 - beta : 0.0;
    }
  }
  return fused;
}

VoteWeight update_beta(double hit1_source_to_target, double hit1_target_to_source) {
  if (hit1_source_to_target < 0.0 || hit1_target_to_source < 0.0) {
    throw std::invalid_argument("hit rates must be non-negative");
  }
  const double total = hit1_source_to_target + hit1_target_to_source;
  if (total == 0.0) return VoteWeight(0.5);
  return VoteWeight(hit1_source_to_target / total);
}

Tensor mdr_rectify(const Tensor& pseudo) {
  // Denominator summed from P_ij outward over the other nonzeros of row i and
  // column j; keeps P~ <= P exact under rounding for fused vote matrices.
  std::vector<std::vector<std::size_t>> row_nz(pseudo.rows()), col_nz(pseudo.cols());
  for (std::size_t i = 0; i < pseudo.rows(); ++i) {
    for (std::size_t j = 0; j < pseudo.cols(); ++j) {
      const double p = pseudo(i, j);
      if (p < 0.0 || p > 1.0) throw std::invalid_argument("mdr_rectify: entry outside [0, 1]");
      if (p != 0.0) {
        row_nz[i].push_back(j);
        col_nz[j].push_back(i);
      }
    }
  }
  Tensor out(pseudo.rows(), pseudo.cols());
  for (std::size_t i = 0; i < pseudo.rows(); ++i) {
    if (row_nz[i].empty()) {
      throw std::invalid_argument("mdr_rectify: row " + std::to_string(i) + " has zero mass");
    }
    for (auto j : row_nz[i]) {
      const double p = pseudo(i, j);
      double denom = p;
      for (auto k : row_nz[i]) {
        if (k != j) denom += pseudo(i, k);
      }
      for (auto k : col_nz[j]) {
        if (k != i) denom += pseudo(k, j);
      }
      out(i, j) = p / denom;
    }
  }
  return out;
}

Var pseudo_loss(Var student_similarity, const Tensor& rectified, double student_temperature,
                double target_temperature) {
  if (!student_similarity.value().same_shape(rectified)) {
    throw ShapeError("pseudo_loss: student " + student_similarity.value().shape_string() +
                     " vs pseudo " + rectified.shape_string());
  }
  return ops::softmax_cross_entropy(student_similarity, row_softmax(rectified, target_temperature),
                                    student_temperature);
}

std::vector<EntityMapping> threshold_self_training(const Tensor& similarity, double threshold,
                                                   std::span<const EntityId> row_ids,
                                                   std::span<const EntityId> col_ids) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("self-training threshold must lie in (0, 1]");
  }
  if (row_ids.size() != similarity.rows() || col_ids.size() != similarity.cols()) {
    throw ShapeError("threshold_self_training: id lists do not match matrix shape");
  }
  std::vector<EntityMapping> out;
  if (similarity.cols() == 0) return out;
  const Tensor picks = one_hot_argmax(similarity);
  for (std::size_t i = 0; i < similarity.rows(); ++i) {
    for (std::size_t j = 0; j < similarity.cols(); ++j) {
      if (picks(i, j) != 0.0 && similarity(i, j) > threshold) out.push_back({row_ids[i], col_ids[j]});
    }
  }
  return out;
}

void write_pseudo_dump(std::ostream& out, const Tensor& pseudo) {
  const auto old_precision = out.precision(17);
  for (std::size_t i = 0; i < pseudo.rows(); ++i) {
    for (std::size_t j = 0; j < pseudo.cols(); ++j) {
      if (pseudo(i, j) != 0.0) out << i << '\t' << j << '\t' << pseudo(i, j) << '\n';
    }
  }
  out.precision(old_precision);
}

}  // namespace mixtea
