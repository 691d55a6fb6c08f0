#include "sst/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace sst {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Tensor Tensor::from_vector(Mat m) {
  require(m.cols() == 1, "from_vector: expected a single column, got " +
                             std::to_string(m.cols()));
  return Tensor(std::move(m), 1);
}

std::vector<Index> Tensor::shape() const {
  switch (rank_) {
    case 0:
      return {};
    case 1:
      return {rows()};
    default:
      return {rows(), cols()};
  }
}

std::string Tensor::shape_str() const {
  if (rank_ == 0) return "()";
  if (rank_ == 1) return "(" + std::to_string(rows()) + ")";
  return "(" + std::to_string(rows()) + "x" + std::to_string(cols()) + ")";
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2, "matmul: left operand must be rank 2, got " +
                             a.shape_str());
  require(b.rank() >= 1, "matmul: right operand must be rank 1 or 2");
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() +
                                " x " + b.shape_str());
  }
  Mat out = a.mat() * b.mat();
  return Tensor(std::move(out), b.rank() == 1 ? 1 : 2);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b),
          "add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  return Tensor(a.mat() + b.mat(), a.rank());
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b),
          "sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  return Tensor(a.mat() - b.mat(), a.rank());
}

Tensor cwise_mul(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "cwise_mul: shape mismatch " + a.shape_str() +
                               " vs " + b.shape_str());
  return Tensor(a.mat().cwiseProduct(b.mat()), a.rank());
}

Tensor cwise_div(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "cwise_div: shape mismatch " + a.shape_str() +
                               " vs " + b.shape_str());
  return Tensor(a.mat().cwiseQuotient(b.mat()), a.rank());
}

Tensor sigmoid(const Tensor& t) {
  return Tensor((1.0 / (1.0 + (-t.mat().array()).exp())).matrix(), t.rank());
}

Tensor tanh(const Tensor& t) {
  return Tensor(t.mat().array().tanh().matrix(), t.rank());
}

Tensor exp(const Tensor& t) {
  return Tensor(t.mat().array().exp().matrix(), t.rank());
}

Tensor scale(const Tensor& t, double c) {
  return Tensor(t.mat() * c, t.rank());
}

std::vector<Tensor> softmax_group(std::span<const Tensor> xs) {
  require(xs.size() >= 2, "softmax_group: need at least 2 tensors, got " +
                              std::to_string(xs.size()));
  for (size_t k = 1; k < xs.size(); ++k) {
    require(xs[k].same_shape(xs[0]),
            "softmax_group: shape mismatch " + xs[k].shape_str() + " vs " +
                xs[0].shape_str());
  }
  Mat m = xs[0].mat();
  for (size_t k = 1; k < xs.size(); ++k) m = m.cwiseMax(xs[k].mat());
  std::vector<Tensor> out;
  out.reserve(xs.size());
  Mat denom = Mat::Zero(m.rows(), m.cols());
  for (const Tensor& x : xs) {
    Mat e = (x.mat() - m).array().exp().matrix();
    denom += e;
    out.emplace_back(std::move(e), x.rank());
  }
  for (Tensor& t : out) t.mat() = t.mat().cwiseQuotient(denom);
  return out;
}

Tensor softmax_over_rows(const Tensor& m) {
  Mat out(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j) {
    double mx = m.mat().col(j).maxCoeff();
    Eigen::ArrayXd e = (m.mat().col(j).array() - mx).exp();
    out.col(j) = (e / e.sum()).matrix();
  }
  return Tensor(std::move(out), m.rank());
}

Tensor softmax_vec(const Tensor& v) {
  double mx = v.mat().maxCoeff();
  Eigen::ArrayXd e = (v.mat().col(0).array() - mx).exp();
  return Tensor((e / e.sum()).matrix(), 1);
}

Tensor mean_rows(const Tensor& m) {
  return Tensor(m.mat().colwise().mean().transpose(), 1);
}

Tensor colwise_sum(const Tensor& m) {
  return Tensor(m.mat().colwise().sum().transpose(), 1);
}

Tensor shift_rows(const Tensor& m, int offset) {
  Mat out = Mat::Zero(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    Index src = i + offset;
    if (src >= 0 && src < m.rows()) out.row(i) = m.mat().row(src);
  }
  return Tensor(std::move(out), m.rank());
}

Tensor concat_cols(std::span<const Tensor> xs) {
  require(!xs.empty(), "concat_cols: empty list");
  Index cols = 0;
  for (const Tensor& x : xs) {
    require(x.rows() == xs[0].rows(), "concat_cols: row mismatch");
    cols += x.cols();
  }
  Mat out(xs[0].rows(), cols);
  Index at = 0;
  for (const Tensor& x : xs) {
    out.middleCols(at, x.cols()) = x.mat();
    at += x.cols();
  }
  return Tensor(std::move(out), 2);
}

Tensor concat_rows(std::span<const Tensor> xs) {
  require(!xs.empty(), "concat_rows: empty list");
  Index rows = 0;
  bool all_vec = true;
  for (const Tensor& x : xs) {
    require(x.cols() == xs[0].cols(), "concat_rows: column mismatch");
    rows += x.rows();
    all_vec = all_vec && x.rank() == 1;
  }
  Mat out(rows, xs[0].cols());
  Index at = 0;
  for (const Tensor& x : xs) {
    out.middleRows(at, x.rows()) = x.mat();
    at += x.rows();
  }
  return Tensor(std::move(out), all_vec ? 1 : 2);
}

Tensor slice_cols(const Tensor& m, Index start, Index len) {
  require(start >= 0 && start + len <= m.cols(), "slice_cols: out of range");
  return Tensor(m.mat().middleCols(start, len), 2);
}

Tensor slice_rows(const Tensor& m, Index start, Index len) {
  require(start >= 0 && start + len <= m.rows(), "slice_rows: out of range");
  return Tensor(m.mat().middleRows(start, len), 2);
}

Tensor row(const Tensor& m, Index i) {
  require(i >= 0 && i < m.rows(),
          "row: index " + std::to_string(i) + " out of range for " +
              m.shape_str());
  return Tensor(m.mat().row(i).transpose(), 1);
}

Tensor stack_rows(std::span<const Tensor> vecs) {
  require(!vecs.empty(), "stack_rows: empty list");
  Mat out(static_cast<Index>(vecs.size()), vecs[0].rows());
  for (size_t k = 0; k < vecs.size(); ++k) {
    require(vecs[k].cols() == 1 && vecs[k].rows() == vecs[0].rows(),
            "stack_rows: inputs must be equal-length vectors");
    out.row(static_cast<Index>(k)) = vecs[k].mat().col(0).transpose();
  }
  return Tensor(std::move(out), 2);
}

Tensor gather_rows(const Tensor& m, std::span<const int> ids) {
  Mat out(static_cast<Index>(ids.size()), m.cols());
  for (size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] >= 0 && ids[r] < m.rows(),
            "gather_rows: row id " + std::to_string(ids[r]) + " out of range");
    out.row(static_cast<Index>(r)) = m.mat().row(ids[r]);
  }
  return Tensor(std::move(out), 2);
}

double dot(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b),
          "dot: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  return a.mat().cwiseProduct(b.mat()).sum();
}

double logsumexp(const Tensor& v) {
  double mx = v.mat().maxCoeff();
  return mx + std::log((v.mat().array() - mx).exp().sum());
}

double sumsq(const Tensor& t) { return t.mat().squaredNorm(); }

bool all_finite(const Tensor& t) { return t.mat().allFinite(); }

void check_finite(const Tensor& t, const std::string& what) {
  if (!all_finite(t)) {
    throw std::runtime_error("non-finite values in " + what);
  }
}

Tensor uniform(Index rows, Index cols, int rank, double lo, double hi,
               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return Tensor(std::move(m), rank);
}

Tensor glorot(Index rows, Index cols, std::mt19937_64& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return uniform(rows, cols, 2, -a, a, rng);
}

}  // namespace sst
