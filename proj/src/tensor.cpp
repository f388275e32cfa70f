#include "mixtea/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mixtea {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged tensor literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

std::string Tensor::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on " + shape_string() + " tensor");
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::transposed() const {
  Tensor out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

void require_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + where);
}

Tensor xavier_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw ShapeError("xavier_init needs positive dimensions");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor out(rows, cols);
  for (auto& v : out.data()) v = dist(rng);
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_string() + " * " + b.shape_string());
  }
  Tensor out(a.rows(), b.cols());
  const auto n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out_row = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* b_row = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> ids) {
  Tensor out(ids.size(), x.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= x.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(ids[i]) + " out of range for " +
                       x.shape_string());
    }
    std::copy_n(x.row(ids[i]).begin(), x.cols(), out.row(i).begin());
  }
  return out;
}

Tensor row_normalized(const Tensor& x) {
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = out.row(r);
    double sq = 0.0;
    for (double v : row) sq += v * v;
    if (sq == 0.0) throw NumericError("zero-norm row " + std::to_string(r));
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : row) v *= inv;
  }
  return out;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("cosine_similarity column mismatch: " + a.shape_string() + " vs " +
                     b.shape_string());
  }
  const Tensor an = row_normalized(a);
  const Tensor bn = row_normalized(b);
  Tensor out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ai = an.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto bj = bn.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < ai.size(); ++k) dot += ai[k] * bj[k];
      out(i, j) = std::clamp(dot, -1.0, 1.0);
    }
  }
  return out;
}

Tensor row_softmax(const Tensor& x, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax temperature must be > 0");
  Tensor out(x.rows(), x.cols());
  if (x.cols() == 0) return out;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp((in[c] - mx) / temperature);
      z += o[c];
    }
    for (double& v : o) v /= z;
  }
  return out;
}

}  // namespace mixtea
