#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixtea/kg.hpp"
#include "mixtea/tape.hpp"
#include "mixtea/tensor.hpp"

namespace mixtea {

struct EncoderConfig {
  std::size_t entity_dim = 256;
  std::size_t relation_dim = 128;
  std::size_t layers = 2;
  // false drops the outward/inward relation features from the fusion set.
  bool use_relations = true;

  void validate() const;
  // |K|: one slot per GAT layer plus r+ and r- when relations are used.
  std::size_t fusion_slots() const { return layers + (use_relations ? 2 : 0); }
  std::size_t output_width() const {
    return layers * entity_dim + (use_relations ? 2 * relation_dim : 0);
  }
};

// Trainable arrays of one encoder. Student and teacher each own a copy.
struct ModelParams {
  Tensor entity_emb;                 // entities x d_e
  Tensor relation_emb;               // relations x d_r
  std::vector<Tensor> gat_weight;    // per layer, d_e x d_e
  std::vector<Tensor> attn_vector;   // per layer, 2 d_e x 1
  Tensor fusion_logits;              // 1 x |K|

  // Stable order used by the optimizer, EMA and checkpoints.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> names() const;
};

ModelParams init_params(const EncoderConfig& config, std::size_t entity_count,
                        std::size_t relation_count, std::uint64_t seed);

// Checks every shape against the config and graph sizes; throws ShapeError naming the tensor.
void validate_params(const ModelParams& params, const EncoderConfig& config,
                     std::size_t entity_count, std::size_t relation_count);

struct BoundParams {
  Var entity_emb;
  Var relation_emb;
  std::vector<Var> gat_weight;
  std::vector<Var> attn_vector;
  Var fusion_logits;

  // Same order as ModelParams::tensors().
  std::vector<Var> all() const;
};

// Places the parameters on `tape`, as gradient-receiving leaves when `trainable`.
BoundParams bind_params(Tape& tape, const ModelParams& params, bool trainable);

inline constexpr double kAttentionSlope = 0.2;

// alpha_ij over each neighbor segment, one entry per adjacency edge.
Var attention_weights(Var h_prev, const Segments& neighbors, Var weight, Var attn);

// h_i = ELU(sum_j alpha_ij W h_j).
Var gat_layer(Var h_prev, const Segments& neighbors, Var weight, Var attn);

// Mean outward (first) and inward (second) relation embeddings per entity.
std::pair<Var, Var> relation_features(Var relation_emb, const GraphIndex& index);

// Concatenation of softmax(w)_k * features[k].
Var fuse(std::span<const Var> features, Var fusion_logits);

Var encode(const BoundParams& params, const EncoderConfig& config, const GraphIndex& index);

// Forward-only convenience.
Tensor encode(const ModelParams& params, const EncoderConfig& config, const GraphIndex& index);

}  // namespace mixtea
