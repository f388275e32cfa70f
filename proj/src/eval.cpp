#include "mixtea/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace mixtea {

std::string_view to_string(Direction direction) {
  return direction == Direction::source_to_target ? "st" : "ts";
}

Direction parse_direction(std::string_view name) {
  if (name == "st" || name == "s2t" || name == "source_to_target") return Direction::source_to_target;
  if (name == "ts" || name == "t2s" || name == "target_to_source") return Direction::target_to_source;
  throw std::invalid_argument("unknown direction: " + std::string(name));
}

RankingResult rank_targets(const Tensor& queries, const Tensor& candidates,
                           std::span<const std::size_t> truth, std::size_t keep_top) {
  if (truth.size() != queries.rows()) throw ShapeError("rank_targets: one truth index per query");
  const Tensor sim = cosine_similarity(queries, candidates);
  const auto n = candidates.rows();
  const auto keep = std::min(keep_top, n);
  RankingResult result;
  result.ordered.resize(queries.rows());
  result.ranks.resize(queries.rows());
  std::vector<std::size_t> order(n);
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const auto row = sim.row(q);
    const auto t = truth[q];
    if (t >= n) throw ShapeError("rank_targets: truth index out of range");
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (row[j] > row[t] || (row[j] == row[t] && j < t)) ++ahead;
    }
    result.ranks[q] = ahead + 1;

    std::iota(order.begin(), order.end(), std::size_t{0});
    auto before = [&](std::size_t a, std::size_t b) {
      return row[a] != row[b] ? row[a] > row[b] : a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      before);
    result.ordered[q].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return result;
}

double hits_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw std::invalid_argument("hits_at_k: empty ranking set");
  if (k == 0) throw std::invalid_argument("hits_at_k: k must be >= 1");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double mrr(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr: empty ranking set");
  double total = 0.0;
  for (auto r : ranks) total += 1.0 / static_cast<double>(r);
  return total / static_cast<double>(ranks.size());
}

SplitRanking rank_split(const Tensor& embeddings, const AlignmentDataset& dataset,
                        std::span<const EntityMapping> mappings, Direction direction,
                        std::size_t keep_top) {
  if (mappings.empty()) throw std::invalid_argument("cannot rank an empty split");
  const bool forward = direction == Direction::source_to_target;
  SplitRanking out;
  std::vector<EntityId> truth_ids;
  for (const auto& m : mappings) {
    out.query_ids.push_back(forward ? m.source : m.target);
    truth_ids.push_back(forward ? m.target : m.source);
  }
  out.candidate_ids = truth_ids;
  std::sort(out.candidate_ids.begin(), out.candidate_ids.end());
  out.candidate_ids.erase(std::unique(out.candidate_ids.begin(), out.candidate_ids.end()),
                          out.candidate_ids.end());
  std::unordered_map<EntityId, std::size_t> position;
  for (std::size_t i = 0; i < out.candidate_ids.size(); ++i) position[out.candidate_ids[i]] = i;

  auto rows_of = [&](const std::vector<EntityId>& ids, bool source_side) {
    std::vector<std::size_t> rows;
    rows.reserve(ids.size());
    for (auto id : ids) rows.push_back(source_side ? id : dataset.global_target(id));
    return gather_rows(embeddings, rows);
  };
  const Tensor queries = rows_of(out.query_ids, forward);
  const Tensor candidates = rows_of(out.candidate_ids, !forward);
  std::vector<std::size_t> truth;
  truth.reserve(truth_ids.size());
  for (auto id : truth_ids) truth.push_back(position.at(id));
  out.ranking = rank_targets(queries, candidates, truth, keep_top);
  return out;
}

MetricsReport evaluate_embeddings(const Tensor& embeddings, const AlignmentDataset& dataset,
                                  Split split, Direction direction) {
  const auto& mappings = mappings_for(dataset, split);
  const auto ranked = rank_split(embeddings, dataset, mappings, direction, 0);
  const auto& ranks = ranked.ranking.ranks;
  MetricsReport report;
  report.hits1 = hits_at_k(ranks, 1);
  report.hits5 = hits_at_k(ranks, 5);
  report.mrr = mrr(ranks);
  report.direction = direction;
  report.split = split;
  report.count = ranks.size();
  return report;
}

MetricsReport evaluate(const ModelParams& params, const EncoderConfig& config,
                       const AlignmentDataset& dataset, Split split, Direction direction) {
  return evaluate_embeddings(encode(params, config, dataset.index), dataset, split, direction);
}

void write_ranking_dump(std::ostream& out, const SplitRanking& ranking) {
  for (std::size_t q = 0; q < ranking.query_ids.size(); ++q) {
    out << ranking.query_ids[q] << '\t' << ranking.ranking.ranks[q] << '\t';
    const auto& top = ranking.ranking.ordered[q];
    for (std::size_t k = 0; k < top.size() && k < 10; ++k) {
      if (k) out << ',';
      out << ranking.candidate_ids[top[k]];
    }
    out << '\n';
  }
}

std::string format_report_table(std::span<const MetricsReport> reports) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-6s %-4s %8s %8s %8s %7s\n", "split", "dir", "Hits@1",
                "Hits@5", "MRR", "n");
  os << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-6s %-4s %8.4f %8.4f %8.4f %7zu\n",
                  std::string(to_string(r.split)).c_str(), std::string(to_string(r.direction)).c_str(),
                  r.hits1, r.hits5, r.mrr, r.count);
    os << line;
  }
  return os.str();
}

std::string format_report_line(const MetricsReport& report) {
  char line[192];
  std::snprintf(line, sizeof line, "split=%s direction=%s hits1=%.6f hits5=%.6f mrr=%.6f n=%zu",
                std::string(to_string(report.split)).c_str(),
                std::string(to_string(report.direction)).c_str(), report.hits1, report.hits5,
                report.mrr, report.count);
  return line;
}

}  // namespace mixtea
