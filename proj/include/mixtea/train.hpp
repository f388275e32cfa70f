#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mixtea/encoder.hpp"
#include "mixtea/kg.hpp"
#include "mixtea/tape.hpp"
#include "mixtea/tensor.hpp"

namespace mixtea {

enum class TrainMode { mixtea, supervised_only, self_training_baseline };

std::string_view to_string(TrainMode mode);
TrainMode parse_mode(std::string_view name);

struct Ablations {
  bool no_rel = false;  // drop relation features
  bool no_lu = false;   // drop the pseudo-mapping loss
  bool no_bdv = false;  // source->target votes only (beta = 1)
  bool no_mdr = false;  // skip rectification
};

struct TrainConfig {
  TrainMode mode = TrainMode::mixtea;
  double margin = 2.0;
  double momentum = 0.9;
  std::size_t neg_samples = 10;
  double lambda_max = 1.0;
  std::size_t ramp_epochs = 50;
  std::size_t epochs = 200;
  double lr = 0.005;
  std::uint64_t seed = 1;
  std::size_t validation_interval = 10;
  std::size_t neg_refresh_interval = 10;
  // Epochs between pseudo-mapping regenerations (teacher votes, or the
  // self-training baseline's thresholded pairs).
  std::size_t pseudo_interval = 1;
  double student_temperature = 1.0;
  double target_temperature = 1.0;
  double self_training_threshold = 0.9;
  // Validations without improvement of student valid Hits@1 before stopping; 0 disables.
  std::size_t patience = 0;
  Ablations ablations;

  void validate() const;
  bool uses_pseudo_loss() const { return mode == TrainMode::mixtea && !ablations.no_lu; }
};

// k corrupted pairs per positive on each side, laid out positive-major.
struct NegativeSet {
  std::size_t per_positive = 0;
  std::vector<EntityId> target_negatives;  // replaces e_t, target-KG local ids
  std::vector<EntityId> source_negatives;  // replaces e_s, source-KG local ids
};

// Draws, for each positive, k entities from the ceil(1.25 k) cosine-nearest
// neighbours of the positive's entity on the same side (the entity itself excluded).
NegativeSet sample_negatives(const Tensor& embeddings, std::size_t source_count,
                             std::span<const EntityMapping> positives, std::size_t k,
                             std::uint64_t seed);

// sum over (positive, negative) of [ |h_s - h_t| + margin - |h_s' - h_t'| ]_+.
Var margin_loss(Var embeddings, std::size_t source_count, std::span<const EntityMapping> positives,
                const NegativeSet& negatives, double margin);

void ema_update(ModelParams& teacher, const ModelParams& student, double momentum);

double ramp_up(std::size_t epoch, std::size_t ramp_epochs, double lambda_max);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_a = 0.0;
  double loss_u = 0.0;
  double lambda = 0.0;
  double beta = 0.5;
  double valid_hit1_st = 0.0;
  double valid_hit1_ts = 0.0;
};

struct TrainResult {
  EncoderConfig encoder;
  ModelParams student;
  ModelParams teacher;
  std::vector<EpochRecord> history;
  // Most recent teacher pseudo-mapping matrices (empty unless generated).
  Tensor last_pseudo;
  Tensor last_rectified;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Effective encoder settings after applying the ablations.
EncoderConfig effective_encoder(EncoderConfig encoder, const TrainConfig& config);

TrainResult train(const AlignmentDataset& dataset, const EncoderConfig& encoder,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace mixtea
