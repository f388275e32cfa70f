#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mixtea/kg.hpp"
#include "mixtea/tape.hpp"
#include "mixtea/tensor.hpp"

// Differentiable operations on tape variables. Ops taking `Segments` keep a
// pointer to it; the segments must outlive the tape's backward pass.
namespace mixtea::ops {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var x, double factor);
Var add_scalar(Var x, double value);
Var sum(Var x);

Var relu(Var x);
// x if x > 0 else exp(x) - 1
Var elu(Var x);
Var leaky_relu(Var x, double negative_slope);

Var concat_columns(std::span<const Var> parts);
Var gather_rows(Var x, std::vector<std::size_t> ids);

// Row i is the mean of the value rows listed in segment i; empty segments give zeros.
Var segment_mean(Var values, const Segments& segments);

// Per-row Euclidean distance as a column vector; zero distance has zero subgradient.
Var row_l2_distance(Var a, Var b);

// M[i][j] = cos(a_i, b_j).
Var cosine_sim_matrix(Var a, Var b);

Var row_softmax(Var x, double temperature);

// x scaled by the single entry `index` (row-major) of `weights`.
Var scale_by_entry(Var x, Var weights, std::size_t index);

// Edge e = (i, j) of `adjacency` gets  a[:d] . z_i + a[d:] . z_j  where a is 2d x 1.
Var pair_attention_logits(Var z, Var a, const Segments& adjacency);

// Softmax of an edge column vector within each segment.
Var segment_softmax(Var scores, const Segments& segments);

// out_i = sum over edges e of segment i of weights[e] * values[indices[e]].
Var segment_weighted_sum(Var weights, Var values, const Segments& segments);

// sum_i  -sum_j targets[i][j] * log softmax(logits_i / temperature)_j.
// `targets` is a constant.
Var softmax_cross_entropy(Var logits, const Tensor& targets, double temperature);

}  // namespace mixtea::ops
