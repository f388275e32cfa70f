#include "mixtea/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace mixtea {

namespace {

struct RawTriple {
  std::size_t head, relation, tail;
};

std::string source_uri(std::size_t e) { return "http://synthetic.kg/source/entity/" + std::to_string(e); }
std::string target_uri(std::size_t e) { return "http://synthetic.kg/target/entity/" + std::to_string(e); }
std::string relation_uri(std::size_t r) { return "http://synthetic.kg/relation/" + std::to_string(r); }

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void generate_synthetic(const SyntheticOptions& options, const std::filesystem::path& out_dir) {
  const auto n = options.entities;
  if (n < 2) throw std::invalid_argument("synthetic KG needs at least 2 entities");
  if (options.relations == 0) throw std::invalid_argument("synthetic KG needs at least 1 relation");
  if (!(options.avg_degree > 0.0)) throw std::invalid_argument("average degree must be > 0");
  if (options.folds == 0) throw std::invalid_argument("need at least one fold");
  if (!(options.train_ratio > 0.0) || !(options.valid_ratio >= 0.0) ||
      options.train_ratio + options.valid_ratio >= 1.0) {
    throw std::invalid_argument("split ratios must leave a non-empty test split");
  }
  const auto triple_count = std::max<std::size_t>(
      n - 1, static_cast<std::size_t>(std::llround(options.avg_degree * static_cast<double>(n) / 2.0)));
  const double capacity = static_cast<double>(n) * static_cast<double>(n - 1) *
                          static_cast<double>(options.relations);
  if (static_cast<double>(triple_count) > capacity) {
    throw std::invalid_argument("average degree too high for the entity/relation counts");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(options.train_ratio * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::llround(options.valid_ratio * static_cast<double>(n)));
  if (n_train == 0 || n_train + n_valid >= n) {
    throw std::invalid_argument("split sizes degenerate for " + std::to_string(n) + " entities");
  }

  std::mt19937_64 rng(options.seed);
  auto uniform = [&](std::size_t hi) { return std::uniform_int_distribution<std::size_t>(0, hi - 1)(rng); };

  // Random spanning tree keeps every entity present in the triple file.
  std::vector<RawTriple> triples;
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  auto try_add = [&](std::size_t h, std::size_t r, std::size_t t) {
    if (h == t || !seen.emplace(h, r, t).second) return false;
    triples.push_back({h, r, t});
    return true;
  };
  for (std::size_t e = 1; e < n; ++e) {
    const auto other = uniform(e);
    const auto r = uniform(options.relations);
    if (uniform(2) == 0) try_add(e, r, other); else try_add(other, r, e);
  }
  while (triples.size() < triple_count) try_add(uniform(n), uniform(options.relations), uniform(n));

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  std::filesystem::create_directories(out_dir);
  {
    auto out = open_output(out_dir / "rel_triples_1");
    for (const auto& t : triples) {
      out << source_uri(t.head) << '\t' << relation_uri(t.relation) << '\t' << source_uri(t.tail) << '\n';
    }
  }
  {
    std::vector<RawTriple> copy = triples;
    std::shuffle(copy.begin(), copy.end(), rng);
    auto out = open_output(out_dir / "rel_triples_2");
    for (const auto& t : copy) {
      out << target_uri(perm[t.head]) << '\t' << relation_uri(t.relation) << '\t'
          << target_uri(perm[t.tail]) << '\n';
    }
  }
  auto write_links = [&](const std::filesystem::path& path, std::span<const std::size_t> ids) {
    auto out = open_output(path);
    for (auto e : ids) out << source_uri(e) << '\t' << target_uri(perm[e]) << '\n';
  };
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  write_links(out_dir / "ent_links", all);

  for (std::size_t fold = 1; fold <= options.folds; ++fold) {
    std::vector<std::size_t> order = all;
    std::shuffle(order.begin(), order.end(), rng);
    const auto dir = out_dir / "721_5fold" / std::to_string(fold);
    std::filesystem::create_directories(dir);
    const std::span<const std::size_t> ids(order);
    write_links(dir / "train_links", ids.subspan(0, n_train));
    write_links(dir / "valid_links", ids.subspan(n_train, n_valid));
    write_links(dir / "test_links", ids.subspan(n_train + n_valid));
  }
}

}  // namespace mixtea
