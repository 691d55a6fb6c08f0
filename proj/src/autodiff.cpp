#include "sst/autodiff.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace sst::ad {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) {
    throw std::runtime_error("traced operands belong to different tapes");
  }
}

}  // namespace

const Tensor& Var::value() const {
  if (!valid()) throw std::runtime_error("use of an untraced value");
  return tape->value(id);
}

Var Tape::constant(Tensor v) { return emplace(std::move(v), false, nullptr); }

Var Tape::param(Parameter& p) {
  auto it = param_index_.find(&p);
  if (it != param_index_.end()) return Var{this, it->second};
  Var v = emplace(p.value, true, nullptr);
  param_index_.emplace(&p, v.id);
  param_leaves_.emplace_back(&p, v.id);
  return v;
}

Var Tape::emplace(Tensor value, bool needs_grad,
                  std::function<void(Tape&, const Tensor&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(int32_t id, const Mat& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (!n.has_grad) {
    n.grad = n.value.zeros_like();
    n.has_grad = true;
  }
  n.grad.mat() += g;
}

const Tensor& Tape::grad(const Var& v) const {
  static const Tensor kZero;
  const Node& n = nodes_[v.id];
  return n.has_grad ? n.grad : kZero;
}

void Tape::backward_local(const Var& loss, double seed) {
  if (loss.tape != this || loss.id < 0 ||
      loss.id >= static_cast<int32_t>(nodes_.size())) {
    throw std::runtime_error("backward: loss is not traced on this tape");
  }
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                nodes_[loss.id].value.shape_str());
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    if (n.grad.size() > 0) n.grad.set_zero();
  }
  if (!nodes_[loss.id].needs_grad) return;
  accumulate(loss.id, Mat::Constant(1, 1, seed));
  for (int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backprop) continue;
    n.backprop(*this, n.grad);
  }
}

void Tape::flush_param_grads() {
  for (auto& [p, id] : param_leaves_) {
    const Node& n = nodes_[id];
    if (n.has_grad) p->grad.mat() += n.grad.mat();
  }
}

void Tape::backward(const Var& loss, double seed) {
  backward_local(loss, seed);
  flush_param_grads();
}

// ---- op builders ----
//
// Closures capture node ids; the id of the node being created equals
// tape->size() at build time.

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Index ak = trans_a ? av.rows() : av.cols();
  Index bk = trans_b ? bv.cols() : bv.rows();
  Index am = trans_a ? av.cols() : av.rows();
  Index bn = trans_b ? bv.rows() : bv.cols();
  if (ak != bk) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                av.shape_str() + (trans_a ? "^T" : "") + " x " +
                                bv.shape_str() + (trans_b ? "^T" : ""));
  }
  Mat out(am, bn);
  if (!trans_a && !trans_b)
    out.noalias() = av.mat() * bv.mat();
  else if (!trans_a && trans_b)
    out.noalias() = av.mat() * bv.mat().transpose();
  else if (trans_a && !trans_b)
    out.noalias() = av.mat().transpose() * bv.mat();
  else
    out.noalias() = av.mat().transpose() * bv.mat().transpose();
  int rank = (bv.rank() == 1 && !trans_b && bn == 1) ? 1 : 2;
  bool ng = a.tape->needs_grad(a.id) || b.tape->needs_grad(b.id);
  return a.tape->emplace(
      Tensor(std::move(out), rank), ng, [=](Tape& t, const Tensor& g) {
        const Mat& G = g.mat();
        const Mat& A = t.value(a.id).mat();
        const Mat& B = t.value(b.id).mat();
        if (!trans_a && !trans_b) {
          if (t.needs_grad(a.id)) t.accumulate(a.id, G * B.transpose());
          if (t.needs_grad(b.id)) t.accumulate(b.id, A.transpose() * G);
        } else if (!trans_a && trans_b) {
          if (t.needs_grad(a.id)) t.accumulate(a.id, G * B);
          if (t.needs_grad(b.id)) t.accumulate(b.id, G.transpose() * A);
        } else if (trans_a && !trans_b) {
          if (t.needs_grad(a.id)) t.accumulate(a.id, B * G.transpose());
          if (t.needs_grad(b.id)) t.accumulate(b.id, A * G);
        } else {
          if (t.needs_grad(a.id)) t.accumulate(a.id, (G * B).transpose());
          if (t.needs_grad(b.id)) t.accumulate(b.id, (A * G).transpose());
        }
      });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  Tensor out = sst::add(a.value(), b.value());
  bool ng = a.tape->needs_grad(a.id) || b.tape->needs_grad(b.id);
  return a.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    t.accumulate(a.id, g.mat());
    t.accumulate(b.id, g.mat());
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  Tensor out = sst::sub(a.value(), b.value());
  bool ng = a.tape->needs_grad(a.id) || b.tape->needs_grad(b.id);
  return a.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    t.accumulate(a.id, g.mat());
    t.accumulate(b.id, -g.mat());
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  Tensor out = sst::cwise_mul(a.value(), b.value());
  bool ng = a.tape->needs_grad(a.id) || b.tape->needs_grad(b.id);
  return a.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    t.accumulate(a.id, g.mat().cwiseProduct(t.value(b.id).mat()));
    t.accumulate(b.id, g.mat().cwiseProduct(t.value(a.id).mat()));
  });
}

Var cwise_div(Var a, Var b) {
  require_same_tape(a, b);
  Tensor out = sst::cwise_div(a.value(), b.value());
  bool ng = a.tape->needs_grad(a.id) || b.tape->needs_grad(b.id);
  return a.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    const Mat& B = t.value(b.id).mat();
    t.accumulate(a.id, g.mat().cwiseQuotient(B));
    t.accumulate(b.id, -g.mat()
                            .cwiseProduct(t.value(a.id).mat())
                            .cwiseQuotient(B.cwiseProduct(B)));
  });
}

Var add_rowwise(Var m, Var v) {
  require_same_tape(m, v);
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  require(vv.cols() == 1 && vv.rows() == mv.cols(),
          "add_rowwise: vector length must equal matrix columns");
  Mat out = mv.mat();
  out.rowwise() += vv.mat().col(0).transpose();
  bool ng = m.tape->needs_grad(m.id) || v.tape->needs_grad(v.id);
  return m.tape->emplace(
      Tensor(std::move(out), 2), ng, [=](Tape& t, const Tensor& g) {
        t.accumulate(m.id, g.mat());
        t.accumulate(v.id, g.mat().colwise().sum().transpose());
      });
}

Var mul_rowwise(Var m, Var v) {
  require_same_tape(m, v);
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  require(vv.cols() == 1 && vv.rows() == mv.cols(),
          "mul_rowwise: vector length must equal matrix columns");
  Mat out =
      (mv.mat().array().rowwise() * vv.mat().col(0).transpose().array())
          .matrix();
  bool ng = m.tape->needs_grad(m.id) || v.tape->needs_grad(v.id);
  return m.tape->emplace(
      Tensor(std::move(out), 2), ng, [=](Tape& t, const Tensor& g) {
        const Mat& M = t.value(m.id).mat();
        const Mat& V = t.value(v.id).mat();
        t.accumulate(m.id, (g.mat().array().rowwise() *
                            V.col(0).transpose().array())
                               .matrix());
        t.accumulate(v.id,
                     g.mat().cwiseProduct(M).colwise().sum().transpose());
      });
}

Var sigmoid(Var x) {
  Tensor out = sst::sigmoid(x.value());
  bool ng = x.tape->needs_grad(x.id);
  int32_t self = static_cast<int32_t>(x.tape->size());
  return x.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    const Mat& y = t.value(self).mat();
    t.accumulate(
        x.id,
        g.mat().cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var tanh(Var x) {
  Tensor out = sst::tanh(x.value());
  bool ng = x.tape->needs_grad(x.id);
  int32_t self = static_cast<int32_t>(x.tape->size());
  return x.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    const Mat& y = t.value(self).mat();
    t.accumulate(x.id,
                 g.mat().cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var exp(Var x) {
  Tensor out = sst::exp(x.value());
  bool ng = x.tape->needs_grad(x.id);
  int32_t self = static_cast<int32_t>(x.tape->size());
  return x.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    t.accumulate(x.id, g.mat().cwiseProduct(t.value(self).mat()));
  });
}

Var scale_const(Var x, double c) {
  Tensor out = sst::scale(x.value(), c);
  bool ng = x.tape->needs_grad(x.id);
  return x.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    t.accumulate(x.id, g.mat() * c);
  });
}

Var scale(Var x, Var s) {
  require_same_tape(x, s);
  require(s.value().size() == 1, "scale: scalar operand must have size 1");
  Tensor out = sst::scale(x.value(), s.value().value());
  bool ng = x.tape->needs_grad(x.id) || s.tape->needs_grad(s.id);
  return x.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    double sv = t.value(s.id).value();
    t.accumulate(x.id, g.mat() * sv);
    t.accumulate(
        s.id,
        Mat::Constant(1, 1, g.mat().cwiseProduct(t.value(x.id).mat()).sum()));
  });
}

std::vector<Var> softmax_group(std::span<const Var> xs) {
  require(xs.size() >= 2, "softmax_group: need at least 2 tensors, got " +
                              std::to_string(xs.size()));
  Tape* tape = xs[0].tape;
  for (const Var& v : xs) {
    require_same_tape(xs[0], v);
    require(v.value().same_shape(xs[0].value()),
            "softmax_group: shape mismatch " + v.value().shape_str() + " vs " +
                xs[0].value().shape_str());
  }
  // Shift by the detached elementwise max; softmax is invariant to the shift
  // so treating it as a constant leaves gradients exact.
  Mat mx = xs[0].value().mat();
  for (size_t k = 1; k < xs.size(); ++k) mx = mx.cwiseMax(xs[k].value().mat());
  Var shift = tape->constant(Tensor(std::move(mx), xs[0].value().rank()));
  std::vector<Var> es;
  es.reserve(xs.size());
  for (const Var& v : xs) es.push_back(exp(sub(v, shift)));
  Var denom = es[0];
  for (size_t k = 1; k < es.size(); ++k) denom = add(denom, es[k]);
  std::vector<Var> out;
  out.reserve(xs.size());
  for (const Var& e : es) out.push_back(cwise_div(e, denom));
  return out;
}

Var softmax_over_rows(Var m) {
  Tensor out = sst::softmax_over_rows(m.value());
  bool ng = m.tape->needs_grad(m.id);
  int32_t self = static_cast<int32_t>(m.tape->size());
  return m.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    const Mat& y = t.value(self).mat();
    const Mat& G = g.mat();
    Mat dx(y.rows(), y.cols());
    for (Index j = 0; j < y.cols(); ++j) {
      double s = G.col(j).cwiseProduct(y.col(j)).sum();
      dx.col(j) = y.col(j).cwiseProduct(G.col(j).array().matrix() -
                                        Mat::Constant(y.rows(), 1, s));
    }
    t.accumulate(m.id, dx);
  });
}

Var mean_rows(Var m) {
  Tensor out = sst::mean_rows(m.value());
  bool ng = m.tape->needs_grad(m.id);
  Index rows = m.value().rows();
  return m.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    Mat dm = (g.mat().col(0).transpose() / static_cast<double>(rows))
                 .replicate(rows, 1);
    t.accumulate(m.id, dm);
  });
}

Var colwise_sum(Var m) {
  Tensor out = sst::colwise_sum(m.value());
  bool ng = m.tape->needs_grad(m.id);
  Index rows = m.value().rows();
  return m.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    t.accumulate(m.id, g.mat().col(0).transpose().replicate(rows, 1));
  });
}

Var shift_rows(Var m, int offset) {
  Tensor out = sst::shift_rows(m.value(), offset);
  bool ng = m.tape->needs_grad(m.id);
  Index rows = m.value().rows();
  return m.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    Mat dm = Mat::Zero(rows, g.mat().cols());
    for (Index i = 0; i < rows; ++i) {
      Index src = i + offset;
      if (src >= 0 && src < rows) dm.row(src) += g.mat().row(i);
    }
    t.accumulate(m.id, dm);
  });
}

Var concat_cols(std::span<const Var> xs) {
  require(!xs.empty(), "concat_cols: empty list");
  Tape* tape = xs[0].tape;
  std::vector<Tensor> vals;
  std::vector<int32_t> ids;
  std::vector<Index> widths;
  bool ng = false;
  for (const Var& v : xs) {
    require_same_tape(xs[0], v);
    vals.push_back(v.value());
    ids.push_back(v.id);
    widths.push_back(v.value().cols());
    ng = ng || tape->needs_grad(v.id);
  }
  Tensor out = sst::concat_cols(vals);
  return tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    Index at = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      t.accumulate(ids[k], g.mat().middleCols(at, widths[k]));
      at += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> xs) {
  require(!xs.empty(), "concat_rows: empty list");
  Tape* tape = xs[0].tape;
  std::vector<Tensor> vals;
  std::vector<int32_t> ids;
  std::vector<Index> heights;
  bool ng = false;
  for (const Var& v : xs) {
    require_same_tape(xs[0], v);
    vals.push_back(v.value());
    ids.push_back(v.id);
    heights.push_back(v.value().rows());
    ng = ng || tape->needs_grad(v.id);
  }
  Tensor out = sst::concat_rows(vals);
  return tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    Index at = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      t.accumulate(ids[k], g.mat().middleRows(at, heights[k]));
      at += heights[k];
    }
  });
}

Var slice_cols(Var m, Index start, Index len) {
  Tensor out = sst::slice_cols(m.value(), start, len);
  bool ng = m.tape->needs_grad(m.id);
  Index rows = m.value().rows();
  Index cols = m.value().cols();
  return m.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    Mat dm = Mat::Zero(rows, cols);
    dm.middleCols(start, len) = g.mat();
    t.accumulate(m.id, dm);
  });
}

Var slice_rows(Var m, Index start, Index len) {
  Tensor out = sst::slice_rows(m.value(), start, len);
  bool ng = m.tape->needs_grad(m.id);
  Index rows = m.value().rows();
  Index cols = m.value().cols();
  return m.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    Mat dm = Mat::Zero(rows, cols);
    dm.middleRows(start, len) = g.mat();
    t.accumulate(m.id, dm);
  });
}

Var row(Var m, Index i) {
  Tensor out = sst::row(m.value(), i);
  bool ng = m.tape->needs_grad(m.id);
  Index rows = m.value().rows();
  Index cols = m.value().cols();
  return m.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    Mat dm = Mat::Zero(rows, cols);
    dm.row(i) = g.mat().col(0).transpose();
    t.accumulate(m.id, dm);
  });
}

Var stack_rows(std::span<const Var> vecs) {
  require(!vecs.empty(), "stack_rows: empty list");
  Tape* tape = vecs[0].tape;
  std::vector<Tensor> vals;
  std::vector<int32_t> ids;
  bool ng = false;
  for (const Var& v : vecs) {
    require_same_tape(vecs[0], v);
    vals.push_back(v.value());
    ids.push_back(v.id);
    ng = ng || tape->needs_grad(v.id);
  }
  Tensor out = sst::stack_rows(vals);
  return tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    for (size_t k = 0; k < ids.size(); ++k) {
      t.accumulate(ids[k],
                   g.mat().row(static_cast<Index>(k)).transpose());
    }
  });
}

Var gather_rows(Var table, std::vector<int> ids) {
  Tensor out = sst::gather_rows(table.value(), ids);
  bool ng = table.tape->needs_grad(table.id);
  Index rows = table.value().rows();
  Index cols = table.value().cols();
  return table.tape->emplace(
      std::move(out), ng, [=, ids = std::move(ids)](Tape& t, const Tensor& g) {
        Mat dm = Mat::Zero(rows, cols);
        for (size_t r = 0; r < ids.size(); ++r) {
          dm.row(ids[r]) += g.mat().row(static_cast<Index>(r));
        }
        t.accumulate(table.id, dm);
      });
}

Var dot(Var a, Var b) {
  require_same_tape(a, b);
  double v = sst::dot(a.value(), b.value());
  bool ng = a.tape->needs_grad(a.id) || b.tape->needs_grad(b.id);
  return a.tape->emplace(Tensor::scalar(v), ng, [=](Tape& t, const Tensor& g) {
    double gv = g.value();
    t.accumulate(a.id, gv * t.value(b.id).mat());
    t.accumulate(b.id, gv * t.value(a.id).mat());
  });
}

Var pick(Var v, Index i) {
  const Tensor& vv = v.value();
  require(i >= 0 && i < vv.size(),
          "pick: index " + std::to_string(i) + " out of range for " +
              vv.shape_str());
  bool ng = v.tape->needs_grad(v.id);
  Index rows = vv.rows();
  Index cols = vv.cols();
  return v.tape->emplace(
      Tensor::scalar(vv.data()[i]), ng, [=](Tape& t, const Tensor& g) {
        Mat dm = Mat::Zero(rows, cols);
        dm.data()[i] = g.value();
        t.accumulate(v.id, dm);
      });
}

Var logsumexp(Var v) {
  double y = sst::logsumexp(v.value());
  bool ng = v.tape->needs_grad(v.id);
  return v.tape->emplace(Tensor::scalar(y), ng, [=](Tape& t, const Tensor& g) {
    // d/dx logsumexp = softmax(x); exp(x - y) is stable since y >= max(x).
    Mat sm = (t.value(v.id).mat().array() - y).exp().matrix();
    t.accumulate(v.id, g.value() * sm);
  });
}

Var avg(std::span<const Var> xs) {
  require(!xs.empty(), "avg: empty list");
  if (xs.size() == 1) return xs[0];
  Var s = add(xs[0], xs[1]);
  for (size_t k = 2; k < xs.size(); ++k) s = add(s, xs[k]);
  return scale_const(s, 1.0 / static_cast<double>(xs.size()));
}

Var sum(Var x) {
  double v = x.value().mat().sum();
  bool ng = x.tape->needs_grad(x.id);
  Index rows = x.value().rows();
  Index cols = x.value().cols();
  return x.tape->emplace(Tensor::scalar(v), ng, [=](Tape& t, const Tensor& g) {
    t.accumulate(x.id, Mat::Constant(rows, cols, g.value()));
  });
}

Var sumsq(Var x) {
  double v = sst::sumsq(x.value());
  bool ng = x.tape->needs_grad(x.id);
  return x.tape->emplace(Tensor::scalar(v), ng, [=](Tape& t, const Tensor& g) {
    t.accumulate(x.id, 2.0 * g.value() * t.value(x.id).mat());
  });
}

Var gate_activations(Var pre, int n_norm, Index d) {
  const Tensor& pv = pre.value();
  Index rows = pv.rows();
  Index cols = pv.cols();
  require(cols == (n_norm + 2) * d, "gate_activations: block layout mismatch");
  Index nn = static_cast<Index>(n_norm);
  // sig holds the sigmoid values of the normalized family, needed by the
  // softmax-through-sigmoid backward.
  auto sig = std::make_shared<Mat>(
      (1.0 / (1.0 + (-pv.mat().leftCols(nn * d).array()).exp())).matrix());
  Mat out(rows, cols);
  // Sigmoid values lie in (0, 1); exp never overflows.
  Mat es = sig->array().exp().matrix();
  Mat denom = es.leftCols(d);
  for (Index k = 1; k < nn; ++k) denom += es.middleCols(k * d, d);
  for (Index k = 0; k < nn; ++k) {
    out.middleCols(k * d, d) = es.middleCols(k * d, d).cwiseQuotient(denom);
  }
  out.middleCols(nn * d, d) =
      (1.0 / (1.0 + (-pv.mat().middleCols(nn * d, d).array()).exp())).matrix();
  out.rightCols(d) = pv.mat().rightCols(d).array().tanh().matrix();

  bool ng = pre.tape->needs_grad(pre.id);
  int32_t self = static_cast<int32_t>(pre.tape->size());
  return pre.tape->emplace(
      Tensor(std::move(out), 2), ng, [=](Tape& t, const Tensor& g) {
        const Mat& y = t.value(self).mat();
        const Mat& G = g.mat();
        Mat dp(rows, cols);
        Mat s = G.leftCols(d).cwiseProduct(y.leftCols(d));
        for (Index k = 1; k < nn; ++k) {
          s += G.middleCols(k * d, d).cwiseProduct(y.middleCols(k * d, d));
        }
        for (Index k = 0; k < nn; ++k) {
          auto yk = y.middleCols(k * d, d).array();
          auto gk = G.middleCols(k * d, d).array();
          auto sk = sig->middleCols(k * d, d).array();
          dp.middleCols(k * d, d) =
              (yk * (gk - s.array()) * sk * (1.0 - sk)).matrix();
        }
        {
          auto yo = y.middleCols(nn * d, d).array();
          auto go = G.middleCols(nn * d, d).array();
          dp.middleCols(nn * d, d) = (go * yo * (1.0 - yo)).matrix();
        }
        {
          auto yu = y.rightCols(d).array();
          auto gu = G.rightCols(d).array();
          dp.rightCols(d) = (gu * (1.0 - yu.square())).matrix();
        }
        t.accumulate(pre.id, dp);
      });
}

Var mul_sum(std::span<const Var> a, std::span<const Var> b) {
  require(!a.empty() && a.size() == b.size(), "mul_sum: length mismatch");
  Tape* tape = a[0].tape;
  Mat out = a[0].value().mat().cwiseProduct(b[0].value().mat());
  bool ng = false;
  std::vector<int32_t> aid, bid;
  for (size_t k = 0; k < a.size(); ++k) {
    require_same_tape(a[k], b[k]);
    require(a[k].value().same_shape(a[0].value()) &&
                b[k].value().same_shape(a[0].value()),
            "mul_sum: shape mismatch");
    if (k > 0) out += a[k].value().mat().cwiseProduct(b[k].value().mat());
    aid.push_back(a[k].id);
    bid.push_back(b[k].id);
    ng = ng || tape->needs_grad(a[k].id) || tape->needs_grad(b[k].id);
  }
  return tape->emplace(Tensor(std::move(out), a[0].value().rank()), ng,
                       [=](Tape& t, const Tensor& g) {
                         for (size_t k = 0; k < aid.size(); ++k) {
                           if (t.needs_grad(aid[k]))
                             t.accumulate(aid[k], g.mat().cwiseProduct(
                                                      t.value(bid[k]).mat()));
                           if (t.needs_grad(bid[k]))
                             t.accumulate(bid[k], g.mat().cwiseProduct(
                                                      t.value(aid[k]).mat()));
                         }
                       });
}

Var gated_tanh(Var o, Var c) {
  require_same_tape(o, c);
  require(o.value().same_shape(c.value()), "gated_tanh: shape mismatch");
  auto th = std::make_shared<Mat>(c.value().mat().array().tanh().matrix());
  Tensor out(o.value().mat().cwiseProduct(*th), o.value().rank());
  bool ng = o.tape->needs_grad(o.id) || c.tape->needs_grad(c.id);
  return o.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    t.accumulate(o.id, g.mat().cwiseProduct(*th));
    t.accumulate(c.id, g.mat()
                           .cwiseProduct(t.value(o.id).mat())
                           .cwiseProduct((1.0 - th->array().square()).matrix()));
  });
}

Var mul_colsum(Var a, Var b) {
  require_same_tape(a, b);
  require(a.value().same_shape(b.value()), "mul_colsum: shape mismatch");
  Tensor out(
      a.value().mat().cwiseProduct(b.value().mat()).colwise().sum().transpose(),
      1);
  bool ng = a.tape->needs_grad(a.id) || b.tape->needs_grad(b.id);
  return a.tape->emplace(std::move(out), ng, [=](Tape& t, const Tensor& g) {
    Eigen::RowVectorXd gr = g.mat().col(0).transpose();
    if (t.needs_grad(a.id))
      t.accumulate(a.id,
                   t.value(b.id).mat().array().rowwise() * gr.array());
    if (t.needs_grad(b.id))
      t.accumulate(b.id,
                   t.value(a.id).mat().array().rowwise() * gr.array());
  });
}

// ---- grad_check ----

GradCheckReport grad_check(std::span<Parameter* const> params,
                           const std::function<double(bool)>& f, double eps,
                           double tol) {
  require(eps > 0, "grad_check: eps must be positive");
  for (Parameter* p : params) p->zero_grad();
  double base = f(true);
  double base2 = f(false);
  if (base != base2) {
    throw std::runtime_error(
        "grad_check: function is not deterministic (baseline evaluations "
        "differ: " +
        std::to_string(base) + " vs " + std::to_string(base2) + ")");
  }
  GradCheckReport report;
  for (Parameter* p : params) {
    GradCheckEntry entry;
    entry.param = p->name;
    for (Index i = 0; i < p->value.size(); ++i) {
      double saved = p->value.data()[i];
      p->value.data()[i] = saved + eps;
      double up = f(false);
      p->value.data()[i] = saved - eps;
      double down = f(false);
      p->value.data()[i] = saved;
      double numeric = (up - down) / (2.0 * eps);
      double analytic = p->grad.data()[i];
      double denom =
          std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      double rel = std::abs(analytic - numeric) / denom;
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_coord = i;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    if (entry.max_rel_err > report.worst_rel_err) {
      report.worst_rel_err = entry.max_rel_err;
      report.worst_param = entry.param;
    }
    report.entries.push_back(std::move(entry));
  }
  (void)tol;
  return report;
}

}  // namespace sst::ad
