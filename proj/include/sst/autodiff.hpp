#pragma once

#include "sst/tensor.hpp"

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace sst::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
};

/// Ordered record of primitive operations. Replaying the adjoint closures in
/// reverse record order visits every node after all of its consumers, so a
/// single reverse sweep computes all gradients of a traced scalar.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor v);
  /// Leaf bound to a Parameter; backward() accumulates into p.grad.
  /// Memoized per tape: tracing the same Parameter twice yields one node.
  Var param(Parameter& p);

  /// Reverse sweep from a traced scalar. Adds seed * d(loss)/d(param) into
  /// every traced Parameter's grad, in parameter trace order. Node gradients
  /// are reset per call, so repeated calls accumulate into Parameter.grad.
  void backward(const Var& loss, double seed = 1.0);

  /// Reverse sweep that stops at this tape's own leaf buffers. Safe to run
  /// concurrently across tapes; pair with flush_param_grads() in a fixed
  /// order for deterministic accumulation.
  void backward_local(const Var& loss, double seed = 1.0);
  void flush_param_grads();

  size_t size() const { return nodes_.size(); }

  // -- internals used by op builders and adjoint closures --
  struct Node {
    Tensor value;
    Tensor grad;          // allocated lazily during backward
    bool has_grad = false;
    bool needs_grad = false;
    std::function<void(Tape&, const Tensor&)> backprop;  // (tape, out_grad)
  };

  const Tensor& value(int32_t id) const { return nodes_[id].value; }
  bool needs_grad(int32_t id) const { return nodes_[id].needs_grad; }
  /// Adds g into the node's gradient buffer.
  void accumulate(int32_t id, const Mat& g);
  Var emplace(Tensor value, bool needs_grad,
              std::function<void(Tape&, const Tensor&)> backprop);
  const Tensor& grad(const Var& v) const;

 private:
  std::vector<Node> nodes_;
  std::vector<std::pair<Parameter*, int32_t>> param_leaves_;
  std::unordered_map<const Parameter*, int32_t> param_index_;
};

// ---- traced operations ----

Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var cwise_div(Var a, Var b);
Var add_rowwise(Var m, Var v);  // v (rank 1) added to every row
Var mul_rowwise(Var m, Var v);  // every row multiplied elementwise by v
Var sigmoid(Var x);
Var tanh(Var x);
Var exp(Var x);
Var scale_const(Var x, double c);
Var scale(Var x, Var s);  // s scalar node
std::vector<Var> softmax_group(std::span<const Var> xs);
Var softmax_over_rows(Var m);
Var mean_rows(Var m);
Var colwise_sum(Var m);
Var shift_rows(Var m, int offset);
Var concat_cols(std::span<const Var> xs);
Var concat_rows(std::span<const Var> xs);
Var slice_cols(Var m, Index start, Index len);
Var slice_rows(Var m, Index start, Index len);
Var row(Var m, Index i);  // rank-1
Var stack_rows(std::span<const Var> vecs);
Var gather_rows(Var table, std::vector<int> ids);
Var dot(Var a, Var b);
Var pick(Var v, Index i);
Var logsumexp(Var v);
Var avg(std::span<const Var> xs);  // elementwise mean of same-shape vars
Var sum(Var x);
Var sumsq(Var x);

// Fused kernels for the recurrent hot path. Each is numerically equal to the
// equivalent composite of the primitives above.

/// Gate activations over a pre-activation block matrix with layout
/// [n_norm normalized gates | o | u], each block `d` columns wide: sigmoid
/// everywhere except tanh on u, then a per-coordinate softmax across the
/// first n_norm blocks.
Var gate_activations(Var pre, int n_norm, Index d);

/// sum_k a_k (elementwise*) b_k over same-shape pairs.
Var mul_sum(std::span<const Var> a, std::span<const Var> b);

/// o (elementwise*) tanh(c).
Var gated_tanh(Var o, Var c);

/// columnwise sum of a (elementwise*) b, as a vector.
Var mul_colsum(Var a, Var b);

// ---- gradient checking oracle ----

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
  Index worst_coord = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst_rel_err = 0.0;
  std::string worst_param;

  bool pass(double tol) const { return worst_rel_err < tol; }
};

/// Central-difference check of backward() against f. `f(true)` must return
/// the loss value and populate Parameter gradients; `f(false)` must return
/// the loss value only. f must be deterministic: two baseline evaluations
/// that differ raise a runtime error. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(std::span<Parameter* const> params,
                           const std::function<double(bool)>& f, double eps,
                           double tol);

}  // namespace sst::ad
