#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "mixtea/kg.hpp"
#include "mixtea/tape.hpp"
#include "mixtea/tensor.hpp"

namespace mixtea {

// Weight of the source->target vote when fusing the two alignment directions.
class VoteWeight {
 public:
  VoteWeight() = default;
  explicit VoteWeight(double beta);
  double beta() const { return beta_; }

 private:
  double beta_ = 0.5;
};

// One 1 per row at the row maximum; ties go to the lowest column index.
Tensor one_hot_argmax(const Tensor& similarity);

// beta * g(M_st) + (1 - beta) * g(M_ts)^T. Entries: 1 for mutual votes, beta or
// 1 - beta for a single-direction vote, 0 otherwise.
Tensor bdv_fuse(const Tensor& sim_source_to_target, const Tensor& sim_target_to_source,
                VoteWeight weight);

// beta = h_st / (h_st + h_ts); 0.5 when both hit rates are zero.
VoteWeight update_beta(double hit1_source_to_target, double hit1_target_to_source);

// P~_ij = P_ij / (rowsum_i + colsum_j - P_ij); zeros stay zero.
Tensor mdr_rectify(const Tensor& pseudo);

// sum over rows of CE(softmax(M_stu / student_temperature), softmax(P~ / target_temperature)).
// Only M_stu carries gradient.
Var pseudo_loss(Var student_similarity, const Tensor& rectified, double student_temperature = 1.0,
                double target_temperature = 1.0);

// Baseline pseudo-labelling: (row, argmax col) pairs whose similarity exceeds
// `threshold`, mapped through the row/column entity ids.
std::vector<EntityMapping> threshold_self_training(const Tensor& similarity, double threshold,
                                                   std::span<const EntityId> row_ids,
                                                   std::span<const EntityId> col_ids);

// Tab-separated `i<TAB>j<TAB>confidence` for every nonzero entry.
void write_pseudo_dump(std::ostream& out, const Tensor& pseudo);

}  // namespace mixtea
