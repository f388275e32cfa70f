#include "mixtea/encoder.hpp"

#include "mixtea/ops.hpp"

namespace mixtea {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t slot) {
  // splitmix64 finaliser
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (slot + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void expect_shape(const Tensor& t, std::size_t rows, std::size_t cols, const std::string& name) {
  if (t.rows() != rows || t.cols() != cols) {
    throw ShapeError("parameter " + name + " has shape " + t.shape_string() + ", expected " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (entity_dim == 0 || relation_dim == 0) throw std::invalid_argument("embedding dims must be > 0");
  if (layers == 0) throw std::invalid_argument("encoder needs at least one GAT layer");
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out{&entity_emb, &relation_emb};
  for (auto& w : gat_weight) out.push_back(&w);
  for (auto& a : attn_vector) out.push_back(&a);
  out.push_back(&fusion_logits);
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out{&entity_emb, &relation_emb};
  for (const auto& w : gat_weight) out.push_back(&w);
  for (const auto& a : attn_vector) out.push_back(&a);
  out.push_back(&fusion_logits);
  return out;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out{"entity_emb", "relation_emb"};
  for (std::size_t l = 0; l < gat_weight.size(); ++l) out.push_back("gat_weight." + std::to_string(l));
  for (std::size_t l = 0; l < attn_vector.size(); ++l) out.push_back("attn_vector." + std::to_string(l));
  out.emplace_back("fusion_logits");
  return out;
}

ModelParams init_params(const EncoderConfig& config, std::size_t entity_count,
                        std::size_t relation_count, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  const auto d = config.entity_dim;
  p.entity_emb = xavier_init(entity_count, d, derive_seed(seed, 0));
  p.relation_emb = xavier_init(relation_count, config.relation_dim, derive_seed(seed, 1));
  for (std::size_t l = 0; l < config.layers; ++l) {
    p.gat_weight.push_back(xavier_init(d, d, derive_seed(seed, 2 + 2 * l)));
    p.attn_vector.push_back(xavier_init(2 * d, 1, derive_seed(seed, 3 + 2 * l)));
  }
  p.fusion_logits = Tensor(1, config.fusion_slots());
  return p;
}

void validate_params(const ModelParams& params, const EncoderConfig& config,
                     std::size_t entity_count, std::size_t relation_count) {
  const auto d = config.entity_dim;
  expect_shape(params.entity_emb, entity_count, d, "entity_emb");
  expect_shape(params.relation_emb, relation_count, config.relation_dim, "relation_emb");
  if (params.gat_weight.size() != config.layers || params.attn_vector.size() != config.layers) {
    throw ShapeError("parameter set has " + std::to_string(params.gat_weight.size()) +
                     " GAT layers, expected " + std::to_string(config.layers));
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    expect_shape(params.gat_weight[l], d, d, "gat_weight." + std::to_string(l));
    expect_shape(params.attn_vector[l], 2 * d, 1, "attn_vector." + std::to_string(l));
  }
  expect_shape(params.fusion_logits, 1, config.fusion_slots(), "fusion_logits");
}

std::vector<Var> BoundParams::all() const {
  std::vector<Var> out{entity_emb, relation_emb};
  out.insert(out.end(), gat_weight.begin(), gat_weight.end());
  out.insert(out.end(), attn_vector.begin(), attn_vector.end());
  out.push_back(fusion_logits);
  return out;
}

BoundParams bind_params(Tape& tape, const ModelParams& params, bool trainable) {
  auto leaf = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  BoundParams b;
  b.entity_emb = leaf(params.entity_emb);
  b.relation_emb = leaf(params.relation_emb);
  for (const auto& w : params.gat_weight) b.gat_weight.push_back(leaf(w));
  for (const auto& a : params.attn_vector) b.attn_vector.push_back(leaf(a));
  b.fusion_logits = leaf(params.fusion_logits);
  return b;
}

namespace {

Var attention_from_projection(Var z, const Segments& neighbors, Var attn) {
  const Var logits = ops::leaky_relu(ops::pair_attention_logits(z, attn, neighbors), kAttentionSlope);
  return ops::segment_softmax(logits, neighbors);
}

}  // namespace

Var attention_weights(Var h_prev, const Segments& neighbors, Var weight, Var attn) {
  return attention_from_projection(ops::matmul(h_prev, weight), neighbors, attn);
}

Var gat_layer(Var h_prev, const Segments& neighbors, Var weight, Var attn) {
  for (std::size_t i = 0; i < neighbors.count(); ++i) {
    if (neighbors.size(i) == 0) {
      throw std::logic_error("gat_layer: entity " + std::to_string(i) + " has no neighbors");
    }
  }
  const Var z = ops::matmul(h_prev, weight);
  const Var alpha = attention_from_projection(z, neighbors, attn);
  return ops::elu(ops::segment_weighted_sum(alpha, z, neighbors));
}

std::pair<Var, Var> relation_features(Var relation_emb, const GraphIndex& index) {
  return {ops::segment_mean(relation_emb, index.out_relations),
          ops::segment_mean(relation_emb, index.in_relations)};
}

Var fuse(std::span<const Var> features, Var fusion_logits) {
  if (features.size() != fusion_logits.value().size()) {
    throw ShapeError("fuse: " + std::to_string(features.size()) + " features but " +
                     std::to_string(fusion_logits.value().size()) + " fusion logits");
  }
  const Var weights = ops::row_softmax(fusion_logits, 1.0);
  std::vector<Var> scaled;
  scaled.reserve(features.size());
  for (std::size_t k = 0; k < features.size(); ++k) {
    scaled.push_back(ops::scale_by_entry(features[k], weights, k));
  }
  return ops::concat_columns(scaled);
}

Var encode(const BoundParams& params, const EncoderConfig& config, const GraphIndex& index) {
  if (params.entity_emb.rows() != index.entity_count) {
    throw ShapeError("encode: entity_emb rows " + std::to_string(params.entity_emb.rows()) +
                     " != entity count " + std::to_string(index.entity_count));
  }
  std::vector<Var> features;
  Var h = params.entity_emb;
  for (std::size_t l = 0; l < config.layers; ++l) {
    h = gat_layer(h, index.neighbors, params.gat_weight.at(l), params.attn_vector.at(l));
    features.push_back(h);
  }
  if (config.use_relations) {
    auto [out_rel, in_rel] = relation_features(params.relation_emb, index);
    features.push_back(out_rel);
    features.push_back(in_rel);
  }
  return fuse(features, params.fusion_logits);
}

Tensor encode(const ModelParams& params, const EncoderConfig& config, const GraphIndex& index) {
  Tape tape;
  const auto bound = bind_params(tape, params, false);
  return encode(bound, config, index).value();
}

}  // namespace mixtea
