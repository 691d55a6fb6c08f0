#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sst {

using Index = Eigen::Index;

// Row-major dense storage; the serialized layout matches data() byte order.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense 64-bit float array of rank 0 (scalar), 1 (vector) or 2 (matrix).
/// Vectors are stored as n x 1; scalars as 1 x 1.
class Tensor {
 public:
  Tensor() : m_(Mat::Zero(1, 1)), rank_(0) {}

  static Tensor scalar(double v) {
    Tensor t;
    t.m_(0, 0) = v;
    return t;
  }
  static Tensor vector(Index n) { return Tensor(Mat::Zero(n, 1), 1); }
  static Tensor matrix(Index rows, Index cols) {
    return Tensor(Mat::Zero(rows, cols), 2);
  }
  static Tensor from_matrix(Mat m) { return Tensor(std::move(m), 2); }
  static Tensor from_vector(Mat m);  // expects n x 1

  Tensor(Mat m, int rank) : m_(std::move(m)), rank_(rank) {}

  int rank() const { return rank_; }
  Index rows() const { return m_.rows(); }
  Index cols() const { return m_.cols(); }
  Index size() const { return m_.size(); }
  std::vector<Index> shape() const;

  double& operator()(Index i, Index j) { return m_(i, j); }
  double operator()(Index i, Index j) const { return m_(i, j); }
  double& operator()(Index i) { return m_(i, 0); }
  double operator()(Index i) const { return m_(i, 0); }
  double value() const { return m_(0, 0); }

  double* data() { return m_.data(); }
  const double* data() const { return m_.data(); }

  Mat& mat() { return m_; }
  const Mat& mat() const { return m_; }

  bool same_shape(const Tensor& o) const {
    return rank_ == o.rank_ && rows() == o.rows() && cols() == o.cols();
  }
  Tensor zeros_like() const { return Tensor(Mat::Zero(rows(), cols()), rank_); }

  void set_zero() { m_.setZero(); }

  std::string shape_str() const;

 private:
  Mat m_;
  int rank_;
};

/// Named value/gradient pair. grad always has the shape of value and is
/// exactly zero after zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.zeros_like()) {}

  void zero_grad() { grad.set_zero(); }
};

// ---- value-level free functions ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor cwise_mul(const Tensor& a, const Tensor& b);
Tensor cwise_div(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& t);
Tensor tanh(const Tensor& t);
Tensor exp(const Tensor& t);
Tensor scale(const Tensor& t, double c);

/// Joint per-coordinate softmax across family members: for each coordinate j,
/// out[k](j) = exp(in[k](j)) / sum_k' exp(in[k'](j)). Stable via max
/// subtraction. Requires k >= 2 tensors of identical shape.
std::vector<Tensor> softmax_group(std::span<const Tensor> xs);

/// Softmax over the rows of a matrix, independently per column.
Tensor softmax_over_rows(const Tensor& m);

/// Softmax over the entries of a vector.
Tensor softmax_vec(const Tensor& v);

Tensor mean_rows(const Tensor& m);    // rank-1, length cols
Tensor colwise_sum(const Tensor& m);  // rank-1, length cols

/// out.row(i) = m.row(i + offset) when in range, else zero.
Tensor shift_rows(const Tensor& m, int offset);

Tensor concat_cols(std::span<const Tensor> xs);
Tensor concat_rows(std::span<const Tensor> xs);
Tensor slice_cols(const Tensor& m, Index start, Index len);
Tensor slice_rows(const Tensor& m, Index start, Index len);
Tensor row(const Tensor& m, Index i);  // rank-1
Tensor stack_rows(std::span<const Tensor> vecs);
Tensor gather_rows(const Tensor& m, std::span<const int> ids);

double dot(const Tensor& a, const Tensor& b);
double logsumexp(const Tensor& v);
double sumsq(const Tensor& t);

bool all_finite(const Tensor& t);
void check_finite(const Tensor& t, const std::string& what);

// Seeded initializers.
Tensor uniform(Index rows, Index cols, int rank, double lo, double hi,
               std::mt19937_64& rng);
Tensor glorot(Index rows, Index cols, std::mt19937_64& rng);

}  // namespace sst
