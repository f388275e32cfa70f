#include <gtest/gtest.h>

#include <sstream>

#include "mixtea/eval.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mixtea;
namespace ts = testing_support;

namespace {

// Hand-set ranks: hits@1 = 3/10, hits@5 = 7/10,
// mrr = (1 + 1 + 1 + 1/2 + 1/3 + 1/4 + 1/5 + 1/6 + 1/10 + 1/20) / 10.
const std::vector<std::size_t> kRankFixture{1, 2, 1, 3, 6, 4, 10, 1, 5, 20};

// Embeddings where target i is source i plus small noise, on a twin dataset.
Tensor twin_embeddings(const AlignmentDataset& ds, double noise) {
  const auto n = ds.source_count();
  const Tensor base = ts::random_tensor(n, 6, 3);
  const Tensor jitter = ts::random_tensor(n, 6, 4, -noise, noise);
  Tensor emb(2 * n, 6);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 6; ++c) {
      emb(i, c) = base(i, c);
      emb(n + i, c) = base(i, c) + jitter(i, c);
    }
  }
  return emb;
}

}  // namespace

TEST(Metrics, TrivialCases) {
  EXPECT_EQ(hits_at_k(std::vector<std::size_t>{1, 1, 1}, 1), 1.0);
  EXPECT_EQ(hits_at_k(std::vector<std::size_t>{1, 3}, 1), 0.5);
  EXPECT_EQ(mrr(std::vector<std::size_t>{1, 1}), 1.0);
  EXPECT_EQ(mrr(std::vector<std::size_t>{1, 2}), 0.75);
  EXPECT_THROW(hits_at_k(std::vector<std::size_t>{}, 1), std::invalid_argument);
  EXPECT_THROW(mrr(std::vector<std::size_t>{}), std::invalid_argument);
}

TEST(Metrics, HandCountedFixture) {
  EXPECT_EQ(hits_at_k(kRankFixture, 1), 0.3);
  EXPECT_EQ(hits_at_k(kRankFixture, 5), 0.7);
  EXPECT_EQ(hits_at_k(kRankFixture, 10), 0.9);
  const double expected =
      (1.0 + 0.5 + 1.0 + 1.0 / 3 + 1.0 / 6 + 0.25 + 0.1 + 1.0 + 0.2 + 0.05) / 10.0;
  EXPECT_DOUBLE_EQ(mrr(kRankFixture), expected);
}

TEST(Metrics, MonotoneInKAndMrrBounds) {
  double prev = 0.0;
  for (std::size_t k = 1; k <= 25; ++k) {
    const double h = hits_at_k(kRankFixture, k);
    EXPECT_GE(h, prev);
    prev = h;
  }
  EXPECT_GE(mrr(kRankFixture), hits_at_k(kRankFixture, 1));
  EXPECT_LE(mrr(kRankFixture), 1.0);
}

TEST(RankTargets, ExactCopyFirst) {
  const Tensor q{{0.3, 0.7}};
  const Tensor cands{{0.7, -0.3}, {0.3, 0.7}};
  const std::vector<std::size_t> truth{1};
  const auto r = rank_targets(q, cands, truth);
  EXPECT_EQ(r.ranks[0], 1u);
  EXPECT_EQ(r.ordered[0], (std::vector<std::size_t>{1, 0}));
}

TEST(RankTargets, TiesGoToLowerIndex) {
  const Tensor q{{1, 0}};
  const Tensor cands(4, 2, 1.0);
  for (std::size_t t = 0; t < 4; ++t) {
    const std::vector<std::size_t> truth{t};
    EXPECT_EQ(rank_targets(q, cands, truth).ranks[0], t + 1);
  }
}

TEST(RankTargets, MatchesFullSortOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor q = ts::random_tensor(8, 5, seed);
    const Tensor c = ts::random_tensor(8, 5, seed + 100);
    std::vector<std::size_t> truth{3, 1, 4, 1, 5, 2, 6, 7};
    const auto r = rank_targets(q, c, truth, 3);
    const Tensor sim = cosine_similarity(q, c);
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_EQ(r.ranks[i], oracle::sorted_rank(sim, i, truth[i]));
      ASSERT_EQ(r.ordered[i].size(), 3u);
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(oracle::sorted_rank(sim, i, r.ordered[i][k]), k + 1);
    }
  }
}

TEST(RankTargets, InvariantToRowRescaling) {
  const Tensor q = ts::random_tensor(6, 4, 7);
  const Tensor c = ts::random_tensor(6, 4, 8);
  Tensor q2 = q, c2 = c;
  for (std::size_t i = 0; i < 6; ++i) {
    for (auto& v : q2.row(i)) v *= 0.5 + static_cast<double>(i);
    for (auto& v : c2.row(i)) v *= 3.0 / (1.0 + static_cast<double>(i));
  }
  const std::vector<std::size_t> truth{0, 1, 2, 3, 4, 5};
  const auto a = rank_targets(q, c, truth);
  const auto b = rank_targets(q2, c2, truth);
  EXPECT_EQ(a.ranks, b.ranks);
  EXPECT_EQ(a.ordered, b.ordered);
}

TEST(RankTargets, BadTruthRejected) {
  const std::vector<std::size_t> truth{5};
  EXPECT_THROW(rank_targets(Tensor(1, 2, 1.0), Tensor(2, 2, 1.0), truth), ShapeError);
  EXPECT_THROW(rank_targets(Tensor(2, 2, 1.0), Tensor(2, 2, 1.0), truth), ShapeError);
}

TEST(Evaluate, IdenticalGraphsPerfectScore) {
  const auto ds = ts::make_twin_dataset(30, 3);
  const Tensor emb = twin_embeddings(ds, 0.0);
  for (auto dir : {Direction::source_to_target, Direction::target_to_source}) {
    for (auto split : {Split::train, Split::valid, Split::test}) {
      const auto r = evaluate_embeddings(emb, ds, split, dir);
      EXPECT_EQ(r.hits1, 1.0);
      EXPECT_EQ(r.mrr, 1.0);
      EXPECT_EQ(r.count, mappings_for(ds, split).size());
    }
  }
}

TEST(Evaluate, DirectionsAgreeOnMutualNearestPairs) {
  const auto ds = ts::make_twin_dataset(40, 3, {});
  const Tensor emb = twin_embeddings(ds, 0.8);
  const auto st = rank_split(emb, ds, ds.test, Direction::source_to_target, 1);
  const auto tsr = rank_split(emb, ds, ds.test, Direction::target_to_source, 1);
  // query ids are in split order; candidates ascend by id, so map back through ids
  for (std::size_t q = 0; q < ds.test.size(); ++q) {
    const auto tgt = st.candidate_ids[st.ranking.ordered[q][0]];
    for (std::size_t p = 0; p < ds.test.size(); ++p) {
      if (tsr.query_ids[p] != tgt) continue;
      const auto back = tsr.candidate_ids[tsr.ranking.ordered[p][0]];
      if (back == st.query_ids[q]) {
        // mutual pair: correct in one direction iff correct in the other
        EXPECT_EQ(st.ranking.ranks[q] == 1, tsr.ranking.ranks[p] == 1);
      }
    }
  }
  const auto a = evaluate_embeddings(emb, ds, Split::test, Direction::source_to_target);
  const auto b = evaluate_embeddings(emb, ds, Split::test, Direction::target_to_source);
  EXPECT_EQ(a.direction, Direction::source_to_target);
  EXPECT_EQ(b.direction, Direction::target_to_source);
}

TEST(Evaluate, MetricsRecomputedFromRankingDump) {
  const auto ds = ts::make_twin_dataset(50, 4, {});
  const Tensor emb = twin_embeddings(ds, 1.0);
  const auto ranked = rank_split(emb, ds, ds.test, Direction::source_to_target, 10);
  std::stringstream dump;
  write_ranking_dump(dump, ranked);
  std::size_t lines = 0, h1 = 0, h5 = 0;
  double rr = 0.0;
  std::string line;
  while (std::getline(dump, line)) {
    std::istringstream fields(line);
    std::size_t query = 0, rank = 0;
    std::string top;
    fields >> query >> rank >> top;
    EXPECT_EQ(query, ds.test[lines].source);
    EXPECT_FALSE(top.empty());
    ++lines;
    h1 += rank <= 1;
    h5 += rank <= 5;
    rr += 1.0 / static_cast<double>(rank);
  }
  const auto r = evaluate_embeddings(emb, ds, Split::test, Direction::source_to_target);
  ASSERT_EQ(lines, ds.test.size());
  EXPECT_DOUBLE_EQ(r.hits1, static_cast<double>(h1) / static_cast<double>(lines));
  EXPECT_DOUBLE_EQ(r.hits5, static_cast<double>(h5) / static_cast<double>(lines));
  EXPECT_DOUBLE_EQ(r.mrr, rr / static_cast<double>(lines));
  EXPECT_LT(r.hits1, 1.0);  // the fixture is not trivially solved
}

TEST(Report, MachineLineFormat) {
  MetricsReport r;
  r.hits1 = 0.5;
  r.hits5 = 0.75;
  r.mrr = 0.625;
  r.split = Split::valid;
  r.direction = Direction::target_to_source;
  r.count = 8;
  EXPECT_EQ(format_report_line(r),
            "split=valid direction=ts hits1=0.500000 hits5=0.750000 mrr=0.625000 n=8");
  const std::vector<MetricsReport> rs{r};
  const auto table = format_report_table(rs);
  EXPECT_NE(table.find("Hits@1"), std::string::npos);
  EXPECT_NE(table.find("0.6250"), std::string::npos);
}

TEST(Direction, Parse) {
  EXPECT_EQ(parse_direction("st"), Direction::source_to_target);
  EXPECT_EQ(parse_direction("ts"), Direction::target_to_source);
  EXPECT_THROW(parse_direction("up"), std::invalid_argument);
}
