#include "mixtea/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "mixtea/adam.hpp"
#include "mixtea/eval.hpp"
#include "mixtea/ops.hpp"
#include "mixtea/pseudo_map.hpp"

namespace mixtea {

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::mixtea: return "mixtea";
    case TrainMode::supervised_only: return "supervised_only";
    case TrainMode::self_training_baseline: return "self_training_baseline";
  }
  return "?";
}

TrainMode parse_mode(std::string_view name) {
  if (name == "mixtea") return TrainMode::mixtea;
  if (name == "supervised_only") return TrainMode::supervised_only;
  if (name == "self_training_baseline") return TrainMode::self_training_baseline;
  throw std::invalid_argument("unknown mode: " + std::string(name));
}

void TrainConfig::validate() const {
  if (!(margin > 0.0)) throw std::invalid_argument("margin must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (neg_samples == 0) throw std::invalid_argument("neg_samples must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(lambda_max >= 0.0)) throw std::invalid_argument("lambda_max must be >= 0");
  if (!(student_temperature > 0.0) || !(target_temperature > 0.0)) {
    throw std::invalid_argument("temperatures must be > 0");
  }
  if (pseudo_interval == 0) throw std::invalid_argument("pseudo_interval must be >= 1");
  if (neg_refresh_interval == 0) throw std::invalid_argument("neg_refresh_interval must be >= 1");
  if (mode == TrainMode::self_training_baseline &&
      !(self_training_threshold > 0.0 && self_training_threshold <= 1.0)) {
    throw std::invalid_argument("self-training threshold must lie in (0, 1]");
  }
}

namespace {

// Indices of the `count` rows of `unit` most cosine-similar to row `anchor`
// (excluding it), ties by lower index. `unit` rows are L2-normalised.
std::vector<std::size_t> nearest_rows(const Tensor& unit, std::size_t anchor, std::size_t count,
                                      std::vector<double>& scratch) {
  const auto n = unit.rows();
  scratch.assign(n, 0.0);
  const auto a = unit.row(anchor);
  for (std::size_t j = 0; j < n; ++j) {
    const auto b = unit.row(j);
    double dot = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) dot += a[c] * b[c];
    scratch[j] = dot;
  }
  std::vector<std::size_t> order;
  order.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != anchor) order.push_back(j);
  }
  const auto keep = std::min(count, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t x, std::size_t y) {
                      return scratch[x] != scratch[y] ? scratch[x] > scratch[y] : x < y;
                    });
  order.resize(keep);
  return order;
}

void draw_from(const std::vector<std::size_t>& pool, std::size_t k, std::mt19937_64& rng,
               std::vector<EntityId>& out) {
  if (pool.empty()) throw std::invalid_argument("negative sampling needs at least two entities per KG");
  if (pool.size() >= k) {
    // Partial Fisher-Yates: k distinct picks.
    std::vector<std::size_t> bag = pool;
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, bag.size() - 1);
      std::swap(bag[i], bag[pick(rng)]);
      out.push_back(static_cast<EntityId>(bag[i]));
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < k; ++i) out.push_back(static_cast<EntityId>(pool[pick(rng)]));
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed ^ (0x9E3779B97F4A7C15ULL + (salt << 6) + (salt >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

NegativeSet sample_negatives(const Tensor& embeddings, std::size_t source_count,
                             std::span<const EntityMapping> positives, std::size_t k,
                             std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("sample_negatives: k must be >= 1");
  if (source_count > embeddings.rows()) throw ShapeError("sample_negatives: source count");
  const auto truncation = static_cast<std::size_t>(std::ceil(1.25 * static_cast<double>(k)));

  std::vector<std::size_t> src_rows(source_count), tgt_rows(embeddings.rows() - source_count);
  std::iota(src_rows.begin(), src_rows.end(), std::size_t{0});
  std::iota(tgt_rows.begin(), tgt_rows.end(), source_count);
  const Tensor src_unit = row_normalized(gather_rows(embeddings, src_rows));
  const Tensor tgt_unit = row_normalized(gather_rows(embeddings, tgt_rows));

  NegativeSet out;
  out.per_positive = k;
  out.target_negatives.reserve(positives.size() * k);
  out.source_negatives.reserve(positives.size() * k);
  std::mt19937_64 rng(seed);
  std::vector<double> scratch;
  for (const auto& p : positives) {
    if (p.source >= src_unit.rows() || p.target >= tgt_unit.rows()) {
      throw ShapeError("sample_negatives: positive references an unknown entity");
    }
    draw_from(nearest_rows(tgt_unit, p.target, truncation, scratch), k, rng, out.target_negatives);
    draw_from(nearest_rows(src_unit, p.source, truncation, scratch), k, rng, out.source_negatives);
  }
  return out;
}

Var margin_loss(Var embeddings, std::size_t source_count, std::span<const EntityMapping> positives,
                const NegativeSet& negatives, double margin) {
  const auto k = negatives.per_positive;
  if (negatives.target_negatives.size() != positives.size() * k ||
      negatives.source_negatives.size() != positives.size() * k) {
    throw ShapeError("margin_loss: negative set does not match positives");
  }
  std::vector<std::size_t> pos_src, pos_tgt;
  for (const auto& p : positives) {
    pos_src.push_back(p.source);
    pos_tgt.push_back(source_count + p.target);
  }
  const Var pos_dist =
      ops::row_l2_distance(ops::gather_rows(embeddings, pos_src), ops::gather_rows(embeddings, pos_tgt));

  // Negative pair n of positive p: first the k (e_s, t') pairs, then the k (s', e_t) pairs.
  std::vector<std::size_t> owner, neg_src, neg_tgt;
  owner.reserve(2 * k * positives.size());
  for (std::size_t p = 0; p < positives.size(); ++p) {
    for (std::size_t i = 0; i < k; ++i) {
      owner.push_back(p);
      neg_src.push_back(positives[p].source);
      neg_tgt.push_back(source_count + negatives.target_negatives[p * k + i]);
    }
    for (std::size_t i = 0; i < k; ++i) {
      owner.push_back(p);
      neg_src.push_back(negatives.source_negatives[p * k + i]);
      neg_tgt.push_back(source_count + positives[p].target);
    }
  }
  const Var neg_dist =
      ops::row_l2_distance(ops::gather_rows(embeddings, neg_src), ops::gather_rows(embeddings, neg_tgt));
  const Var expanded = ops::gather_rows(pos_dist, std::move(owner));
  return ops::sum(ops::relu(ops::add_scalar(ops::sub(expanded, neg_dist), margin)));
}

void ema_update(ModelParams& teacher, const ModelParams& student, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  auto tea = teacher.tensors();
  const auto stu = student.tensors();
  if (tea.size() != stu.size()) throw ShapeError("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < tea.size(); ++i) {
    if (!tea[i]->same_shape(*stu[i])) {
      throw ShapeError("ema_update: shape mismatch for " + teacher.names()[i]);
    }
    auto t = tea[i]->data();
    const auto s = stu[i]->data();
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = momentum * t[k] + (1.0 - momentum) * s[k];
  }
}

double ramp_up(std::size_t epoch, std::size_t ramp_epochs, double lambda_max) {
  if (ramp_epochs == 0) return lambda_max;
  const double t = std::min(static_cast<double>(epoch) / static_cast<double>(ramp_epochs), 1.0);
  const double gap = 1.0 - t;
  return lambda_max * std::exp(-5.0 * gap * gap);
}

EncoderConfig effective_encoder(EncoderConfig encoder, const TrainConfig& config) {
  if (config.ablations.no_rel) encoder.use_relations = false;
  return encoder;
}

namespace {

std::vector<std::size_t> global_rows(std::span<const EntityId> ids, std::size_t offset) {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (auto id : ids) rows.push_back(offset + id);
  return rows;
}

}  // namespace

TrainResult train(const AlignmentDataset& dataset, const EncoderConfig& encoder_config,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.train.empty()) throw std::invalid_argument("training split is empty");

  TrainResult result;
  result.encoder = effective_encoder(encoder_config, config);
  const auto& enc = result.encoder;
  enc.validate();
  const auto& index = dataset.index;
  const auto ns = dataset.source_count();

  result.student = init_params(enc, index.entity_count, index.relation_count, config.seed);
  result.teacher = result.student;
  auto student_tensors = result.student.tensors();
  AdamOptions adam_options;
  adam_options.lr = config.lr;
  AdamState adam(adam_options, student_tensors);

  const bool pseudo_loss_on = config.uses_pseudo_loss();
  const bool self_training = config.mode == TrainMode::self_training_baseline;
  const auto unl_src_rows = global_rows(dataset.unlabeled_source, 0);
  const auto unl_tgt_rows = global_rows(dataset.unlabeled_target, ns);
  const bool has_unlabeled = !unl_src_rows.empty() && !unl_tgt_rows.empty();
  const bool has_valid = !dataset.valid.empty();

  std::vector<EntityMapping> positives = dataset.train;
  NegativeSet negatives;
  bool positives_changed = true;
  VoteWeight vote;
  double last_st = 0.0, last_ts = 0.0;
  Tensor rectified;

  double best_valid = -1.0;
  std::size_t stale_validations = 0;
  ModelParams best_student;

  Tape tape;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    tape.clear();
    const auto bound = bind_params(tape, result.student, true);
    const Var embeddings = encode(bound, enc, index);

    if (self_training && has_unlabeled && epoch > 0 && epoch % config.pseudo_interval == 0) {
      const Tensor sim = cosine_similarity(gather_rows(embeddings.value(), unl_src_rows),
                                           gather_rows(embeddings.value(), unl_tgt_rows));
      positives = dataset.train;
      const auto extra = threshold_self_training(sim, config.self_training_threshold,
                                                 dataset.unlabeled_source, dataset.unlabeled_target);
      positives.insert(positives.end(), extra.begin(), extra.end());
      positives_changed = true;
    }
    if (positives_changed || epoch % config.neg_refresh_interval == 0) {
      negatives = sample_negatives(embeddings.value(), ns, positives, config.neg_samples,
                                   mix_seed(config.seed, epoch));
      positives_changed = false;
    }

    EpochRecord record;
    record.epoch = epoch;
    // A zero beta would leave rows without mass; keep the forward vote alive.
    record.beta = config.ablations.no_bdv ? 1.0 : std::max(vote.beta(), 1e-6);
    Var loss = margin_loss(embeddings, ns, positives, negatives, config.margin);
    record.loss_a = loss.value().item();

    if (pseudo_loss_on && has_unlabeled) {
      if (rectified.empty() || epoch % config.pseudo_interval == 0) {
        const Tensor teacher_emb = encode(result.teacher, enc, index);
        const Tensor sim = cosine_similarity(gather_rows(teacher_emb, unl_src_rows),
                                             gather_rows(teacher_emb, unl_tgt_rows));
        result.last_pseudo = bdv_fuse(sim, sim.transposed(), VoteWeight(record.beta));
        rectified = config.ablations.no_mdr ? result.last_pseudo : mdr_rectify(result.last_pseudo);
        result.last_rectified = rectified;
      }
      const Var student_sim = ops::cosine_sim_matrix(ops::gather_rows(embeddings, unl_src_rows),
                                                     ops::gather_rows(embeddings, unl_tgt_rows));
      const Var lu = pseudo_loss(student_sim, rectified, config.student_temperature,
                                 config.target_temperature);
      record.loss_u = lu.value().item();
      record.lambda = ramp_up(epoch, config.ramp_epochs, config.lambda_max);
      loss = ops::add(loss, ops::scale(lu, record.lambda));
    }

    if (!std::isfinite(loss.value().item())) {
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
    }
    tape.backward(loss);
    std::vector<Tensor> grads;
    for (const auto& v : bound.all()) grads.push_back(tape.grad(v));
    adam_step(student_tensors, grads, adam);
    ema_update(result.teacher, result.student, config.momentum);

    const bool validate_now = has_valid && config.validation_interval > 0 &&
                              (epoch + 1) % config.validation_interval == 0;
    if (validate_now) {
      const ModelParams& judged = config.mode == TrainMode::mixtea ? result.teacher : result.student;
      const Tensor emb = encode(judged, enc, index);
      last_st = evaluate_embeddings(emb, dataset, Split::valid, Direction::source_to_target).hits1;
      last_ts = evaluate_embeddings(emb, dataset, Split::valid, Direction::target_to_source).hits1;
      vote = update_beta(last_st, last_ts);
    }
    record.valid_hit1_st = last_st;
    record.valid_hit1_ts = last_ts;
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (validate_now && config.patience > 0) {
      const double score =
          config.mode == TrainMode::mixtea
              ? evaluate(result.student, enc, dataset, Split::valid, Direction::source_to_target).hits1
              : last_st;
      if (score > best_valid) {
        best_valid = score;
        best_student = result.student;
        stale_validations = 0;
      } else if (++stale_validations >= config.patience) {
        result.student = best_student;
        break;
      }
    }
  }
  return result;
}

}  // namespace mixtea
