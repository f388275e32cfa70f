#pragma once

// Shared fixtures for the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mixtea/kg.hpp"
#include "mixtea/ops.hpp"
#include "mixtea/tape.hpp"
#include "mixtea/tensor.hpp"

namespace testing_support {

using mixtea::Tape;
using mixtea::Tensor;
using mixtea::Var;

// Uniform entries in [lo, hi] with magnitude at least `min_abs`, so kinked ops
// (relu, hinge, distance at zero) are probed away from their kinks.
inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0, double min_abs = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(rows, cols);
  for (auto& v : t.data()) {
    do {
      v = dist(rng);
    } while (std::abs(v) < min_abs);
  }
  return t;
}

// Builds a scalar loss from leaves bound on the tape.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Compares tape gradients against central differences for every entry of every
// input. Relative error is |analytic - numeric| / max(1, |analytic|).
inline GradCheck check_gradients(const LossBuilder& build, std::vector<Tensor> inputs,
                                 double h = 1e-5) {
  auto evaluate = [&](const std::vector<Tensor>& values) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& v : values) leaves.push_back(tape.parameter(v));
    return build(tape, leaves).value().item();
  };

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& v : inputs) leaves.push_back(tape.parameter(v));
  const Var loss = build(tape, leaves);
  tape.backward(loss);
  std::vector<Tensor> analytic;
  for (const auto& leaf : leaves) analytic.push_back(tape.grad(leaf));

  GradCheck result;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    for (std::size_t e = 0; e < inputs[p].size(); ++e) {
      const double saved = inputs[p].data()[e];
      inputs[p].data()[e] = saved + h;
      const double up = evaluate(inputs);
      inputs[p].data()[e] = saved - h;
      const double down = evaluate(inputs);
      inputs[p].data()[e] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p].data()[e];
      result.max_rel_error =
          std::max(result.max_rel_error, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
      ++result.checked;
    }
  }
  return result;
}

// Reduces a matrix node to a scalar with fixed uneven weights: r^T X c.
inline Var weighted_total(Var x, std::uint64_t seed = 99) {
  auto& tape = x.tape();
  const Var left = tape.constant(random_tensor(1, x.rows(), seed, 0.5, 1.5));
  const Var right = tape.constant(random_tensor(x.cols(), 1, seed + 1, -1.5, 1.5, 0.2));
  return mixtea::ops::matmul(mixtea::ops::matmul(left, x), right);
}

// KnowledgeGraph over entities "<prefix>0".."<prefix>{n-1}" in id order.
inline mixtea::KnowledgeGraph make_kg(const std::string& name, const std::string& prefix,
                                      std::size_t entities, std::vector<mixtea::Triple> triples,
                                      std::size_t relation_count) {
  mixtea::ParsedTriples parsed;
  for (std::size_t i = 0; i < entities; ++i) parsed.entities.intern(prefix + std::to_string(i));
  parsed.triples = std::move(triples);
  return mixtea::build_knowledge_graph(name, std::move(parsed), relation_count);
}

inline mixtea::UriTable make_relations(std::size_t count) {
  mixtea::UriTable table;
  for (std::size_t r = 0; r < count; ++r) table.intern("r" + std::to_string(r));
  return table;
}

// Source: a ring with chords. Target: the same graph with entity i renamed
// perm[i]. Links (i, perm[i]) are split roughly 20/10/70 in id order.
inline mixtea::AlignmentDataset make_twin_dataset(std::size_t n, std::size_t relations,
                                                  std::vector<std::size_t> perm = {}) {
  if (perm.empty()) {
    perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  }
  std::vector<mixtea::Triple> src;
  for (std::size_t i = 0; i < n; ++i) {
    src.push_back({static_cast<mixtea::EntityId>(i), static_cast<mixtea::RelationId>(i % relations),
                   static_cast<mixtea::EntityId>((i + 1) % n)});
    if (i % 3 == 0 && n > 3) {
      src.push_back({static_cast<mixtea::EntityId>(i),
                     static_cast<mixtea::RelationId>((i + 1) % relations),
                     static_cast<mixtea::EntityId>((i + 2) % n)});
    }
  }
  std::vector<mixtea::Triple> tgt;
  for (const auto& t : src) {
    tgt.push_back({static_cast<mixtea::EntityId>(perm[t.head]), t.relation,
                   static_cast<mixtea::EntityId>(perm[t.tail])});
  }
  std::vector<mixtea::EntityMapping> links;
  for (std::size_t i = 0; i < n; ++i) {
    links.push_back({static_cast<mixtea::EntityId>(i), static_cast<mixtea::EntityId>(perm[i])});
  }
  const std::size_t n_train = std::max<std::size_t>(1, n / 5);
  const std::size_t n_valid = std::max<std::size_t>(1, n / 10);
  std::vector<mixtea::EntityMapping> train(links.begin(), links.begin() + n_train);
  std::vector<mixtea::EntityMapping> valid(links.begin() + n_train,
                                           links.begin() + n_train + n_valid);
  std::vector<mixtea::EntityMapping> test(links.begin() + n_train + n_valid, links.end());
  return mixtea::assemble_dataset(make_kg("source", "s", n, src, relations),
                                  make_kg("target", "t", n, tgt, relations),
                                  make_relations(relations), train, valid, test);
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mixtea_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing_support
