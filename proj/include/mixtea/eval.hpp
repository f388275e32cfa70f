#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mixtea/encoder.hpp"
#include "mixtea/kg.hpp"
#include "mixtea/tensor.hpp"

namespace mixtea {

enum class Direction { source_to_target, target_to_source };

std::string_view to_string(Direction direction);
Direction parse_direction(std::string_view name);

struct RankingResult {
  // Candidate indices by descending cosine similarity (ties: lower index
  // first), truncated to the requested length.
  std::vector<std::vector<std::size_t>> ordered;
  // 1-based rank of the true counterpart per query.
  std::vector<std::size_t> ranks;
};

inline constexpr std::size_t kFullRanking = std::numeric_limits<std::size_t>::max();

// Ranks every candidate row for every query row. truth[i] is the candidate
// index of query i's counterpart.
RankingResult rank_targets(const Tensor& queries, const Tensor& candidates,
                           std::span<const std::size_t> truth,
                           std::size_t keep_top = kFullRanking);

double hits_at_k(std::span<const std::size_t> ranks, std::size_t k);
double mrr(std::span<const std::size_t> ranks);

struct MetricsReport {
  double hits1 = 0.0;
  double hits5 = 0.0;
  double mrr = 0.0;
  Direction direction = Direction::source_to_target;
  Split split = Split::test;
  std::size_t count = 0;
};

// Queries and candidates restricted to one split. Candidates are that split's
// counterpart entities in ascending id order, so index ties resolve by id.
struct SplitRanking {
  std::vector<EntityId> query_ids;
  std::vector<EntityId> candidate_ids;
  RankingResult ranking;
};

SplitRanking rank_split(const Tensor& embeddings, const AlignmentDataset& dataset,
                        std::span<const EntityMapping> mappings, Direction direction,
                        std::size_t keep_top = 10);

MetricsReport evaluate_embeddings(const Tensor& embeddings, const AlignmentDataset& dataset,
                                  Split split, Direction direction);

MetricsReport evaluate(const ModelParams& params, const EncoderConfig& config,
                       const AlignmentDataset& dataset, Split split, Direction direction);

// `query_id<TAB>true_rank<TAB>comma-separated top-10 candidate ids` per query.
void write_ranking_dump(std::ostream& out, const SplitRanking& ranking);

std::string format_report_table(std::span<const MetricsReport> reports);
// Single machine-readable line: split=... direction=... hits1=... hits5=... mrr=... n=...
std::string format_report_line(const MetricsReport& report);

}  // namespace mixtea
