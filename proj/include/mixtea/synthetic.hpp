#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

namespace mixtea {

struct SyntheticOptions {
  std::size_t entities = 100;
  std::size_t relations = 10;
  double avg_degree = 5.0;
  std::uint64_t seed = 1;
  double train_ratio = 0.2;
  double valid_ratio = 0.1;
  std::size_t folds = 5;
};

// Writes an OpenEA-layout dataset: a random connected KG, an isomorphic copy
// under a random entity permutation (relation names shared), ent_links and
// 721_5fold/<k>/{train,valid,test}_links. The generating permutation is the
// ground-truth alignment.
void generate_synthetic(const SyntheticOptions& options, const std::filesystem::path& out_dir);

}  // namespace mixtea
