#include "doctest.h"

#include "sst/autodiff.hpp"

#include <random>

using namespace sst;
namespace ops = sst::ad;

namespace {

Parameter rand_param(const std::string& name, Index rows, Index cols, int rank,
                     uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Parameter(name, uniform(rows, cols, rank, -0.9, 0.9, rng));
}

// Runs grad_check on a loss built from the given parameters.
double check(std::vector<Parameter*> params,
             const std::function<ops::Var(ops::Tape&)>& build) {
  auto f = [&](bool with_grad) {
    ops::Tape tape;
    ops::Var loss = build(tape);
    if (with_grad) tape.backward(loss);
    return loss.value().value();
  };
  ops::GradCheckReport rep = ops::grad_check(params, f, 1e-5, 1e-4);
  return rep.worst_rel_err;
}

}  // namespace

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("backward of sum gives all-ones gradient") {
  Parameter p = rand_param("p", 3, 2, 2, 1);
  ops::Tape tape;
  ops::Var loss = ops::sum(tape.param(p));
  tape.backward(loss);
  for (Index i = 0; i < p.grad.size(); ++i) CHECK(p.grad.data()[i] == 1.0);
}

TEST_CASE("constant loss leaves parameter gradients at zero") {
  Parameter p = rand_param("p", 2, 2, 2, 2);
  ops::Tape tape;
  tape.param(p);  // traced but not on the loss path
  ops::Var loss = ops::sum(tape.constant(Tensor::scalar(3.0)));
  tape.backward(loss);
  for (Index i = 0; i < p.grad.size(); ++i) CHECK(p.grad.data()[i] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss and foreign tapes") {
  Parameter p = rand_param("p", 2, 2, 2, 3);
  ops::Tape tape;
  ops::Var v = tape.param(p);
  CHECK_THROWS_AS(tape.backward(v), std::invalid_argument);
  ops::Tape other;
  ops::Var loss = ops::sum(v);
  CHECK_THROWS_AS(other.backward(loss), std::runtime_error);
  ops::Var dangling;
  CHECK_THROWS_AS(dangling.value(), std::runtime_error);
}

TEST_CASE("repeated backward accumulates into parameter gradients") {
  Parameter p = rand_param("p", 2, 1, 1, 4);
  ops::Tape tape;
  ops::Var loss = ops::sum(tape.param(p));
  tape.backward(loss);
  tape.backward(loss);
  for (Index i = 0; i < p.grad.size(); ++i) CHECK(p.grad.data()[i] == 2.0);
}

TEST_CASE("quadratic gradient is analytic") {
  // f(theta) = theta . theta at (1, 2) -> gradient (2, 4).
  Parameter p("theta", Tensor::vector(2));
  p.value(0) = 1.0;
  p.value(1) = 2.0;
  Parameter* params[] = {&p};
  auto f = [&](bool with_grad) {
    ops::Tape tape;
    ops::Var v = tape.param(p);
    ops::Var loss = ops::dot(v, v);
    if (with_grad) tape.backward(loss);
    return loss.value().value();
  };
  ops::GradCheckReport rep = ops::grad_check(params, f, 1e-5, 1e-8);
  CHECK(rep.worst_rel_err <= 1e-8);
  p.zero_grad();
  f(true);
  CHECK(p.grad(0) == doctest::Approx(2.0));
  CHECK(p.grad(1) == doctest::Approx(4.0));
}

TEST_CASE("constant function passes grad_check with zero gradients") {
  Parameter p = rand_param("p", 2, 2, 2, 5);
  Parameter* params[] = {&p};
  auto f = [&](bool with_grad) {
    ops::Tape tape;
    tape.param(p);
    ops::Var loss = ops::sum(tape.constant(Tensor::scalar(1.0)));
    if (with_grad) tape.backward(loss);
    return loss.value().value();
  };
  ops::GradCheckReport rep = ops::grad_check(params, f, 1e-5, 1e-8);
  CHECK(rep.worst_rel_err == 0.0);
}

TEST_CASE("non-deterministic function raises a determinism error") {
  Parameter p = rand_param("p", 1, 1, 0, 6);
  Parameter* params[] = {&p};
  int calls = 0;
  auto f = [&](bool) {
    ops::Tape tape;
    ops::Var v = tape.param(p);
    return ops::sum(v).value().value() + 0.001 * calls++;
  };
  CHECK_THROWS_WITH_AS(ops::grad_check(params, f, 1e-5, 1e-4),
                       doctest::Contains("not deterministic"),
                       std::runtime_error);
}

TEST_CASE("corrupted adjoint is caught and names the parameter") {
  // Custom op with a deliberately wrong backward rule (negative control).
  Parameter p = rand_param("broken.weight", 2, 1, 1, 7);
  Parameter* params[] = {&p};
  auto f = [&](bool with_grad) {
    ops::Tape tape;
    ops::Var v = tape.param(p);
    Tensor val = Tensor::scalar(v.value().mat().squaredNorm());
    ops::Var bad = tape.emplace(
        std::move(val), true, [id = v.id](ops::Tape& t, const Tensor& g) {
          t.accumulate(id, 3.0 * g.value() * t.value(id).mat());  // wrong
        });
    if (with_grad) tape.backward(bad);
    return bad.value().value();
  };
  ops::GradCheckReport rep = ops::grad_check(params, f, 1e-5, 1e-4);
  CHECK(rep.worst_rel_err > 1e-2);
  CHECK(rep.worst_param == "broken.weight");
}

TEST_CASE("matmul gradients in all transpose variants") {
  Parameter a = rand_param("a", 3, 4, 2, 10);
  Parameter b = rand_param("b", 4, 2, 2, 11);
  Parameter bt = rand_param("bt", 2, 4, 2, 12);
  Parameter at = rand_param("at", 4, 3, 2, 13);
  {
    Parameter* ps[] = {&a, &b};
    CHECK(check({&a, &b}, [&](ops::Tape& t) {
            return ops::sumsq(ops::matmul(t.param(a), t.param(b)));
          }) < 1e-6);
    (void)ps;
  }
  CHECK(check({&a, &bt}, [&](ops::Tape& t) {
          return ops::sumsq(ops::matmul(t.param(a), t.param(bt), false, true));
        }) < 1e-6);
  CHECK(check({&at, &b}, [&](ops::Tape& t) {
          return ops::sumsq(ops::matmul(t.param(at), t.param(b), true, false));
        }) < 1e-6);
  CHECK(check({&at, &bt}, [&](ops::Tape& t) {
          return ops::sumsq(ops::matmul(t.param(at), t.param(bt), true, true));
        }) < 1e-6);
}

TEST_CASE("elementwise and rowwise op gradients") {
  Parameter m = rand_param("m", 3, 4, 2, 20);
  Parameter n = rand_param("n", 3, 4, 2, 21);
  Parameter v = rand_param("v", 4, 1, 1, 22);
  CHECK(check({&m, &n}, [&](ops::Tape& t) {
          return ops::sum(ops::mul(t.param(m), t.param(n)));
        }) < 1e-6);
  CHECK(check({&m, &n}, [&](ops::Tape& t) {
          ops::Var shifted = ops::add(
              t.param(n), t.constant(Tensor(Mat::Constant(3, 4, 2.0), 2)));
          return ops::sum(ops::cwise_div(t.param(m), shifted));
        }) < 1e-6);
  CHECK(check({&m, &v}, [&](ops::Tape& t) {
          return ops::sumsq(ops::add_rowwise(t.param(m), t.param(v)));
        }) < 1e-6);
  CHECK(check({&m, &v}, [&](ops::Tape& t) {
          return ops::sumsq(ops::mul_rowwise(t.param(m), t.param(v)));
        }) < 1e-6);
  CHECK(check({&m, &n}, [&](ops::Tape& t) {
          return ops::sum(ops::sub(ops::sigmoid(t.param(m)),
                                   ops::tanh(t.param(n))));
        }) < 1e-6);
  CHECK(check({&m}, [&](ops::Tape& t) {
          return ops::sum(ops::exp(ops::scale_const(t.param(m), 0.37)));
        }) < 1e-6);
}

TEST_CASE("structural op gradients") {
  Parameter m = rand_param("m", 4, 3, 2, 30);
  Parameter n = rand_param("n", 4, 2, 2, 31);
  Parameter u = rand_param("u", 3, 1, 1, 32);
  Parameter w = rand_param("w", 3, 1, 1, 33);
  CHECK(check({&m, &n}, [&](ops::Tape& t) {
          std::vector<ops::Var> xs{t.param(m), t.param(n)};
          return ops::sumsq(ops::concat_cols(xs));
        }) < 1e-6);
  CHECK(check({&u, &w}, [&](ops::Tape& t) {
          std::vector<ops::Var> xs{t.param(u), t.param(w)};
          return ops::sumsq(ops::concat_rows(xs));
        }) < 1e-6);
  CHECK(check({&m}, [&](ops::Tape& t) {
          return ops::sumsq(ops::slice_cols(t.param(m), 1, 2));
        }) < 1e-6);
  CHECK(check({&m}, [&](ops::Tape& t) {
          return ops::sumsq(ops::slice_rows(t.param(m), 1, 2));
        }) < 1e-6);
  CHECK(check({&m}, [&](ops::Tape& t) {
          return ops::sumsq(ops::row(t.param(m), 2));
        }) < 1e-6);
  CHECK(check({&m}, [&](ops::Tape& t) {
          return ops::sumsq(ops::shift_rows(t.param(m), 1));
        }) < 1e-6);
  CHECK(check({&m}, [&](ops::Tape& t) {
          return ops::sumsq(ops::shift_rows(t.param(m), -2));
        }) < 1e-6);
  CHECK(check({&u, &w}, [&](ops::Tape& t) {
          std::vector<ops::Var> xs{t.param(u), t.param(w), t.param(u)};
          return ops::sumsq(ops::stack_rows(xs));
        }) < 1e-6);
  CHECK(check({&m}, [&](ops::Tape& t) {
          return ops::sumsq(ops::gather_rows(t.param(m), {2, 0, 2, 3}));
        }) < 1e-6);
  CHECK(check({&m}, [&](ops::Tape& t) {
          return ops::sumsq(ops::mean_rows(t.param(m)));
        }) < 1e-6);
  CHECK(check({&m}, [&](ops::Tape& t) {
          return ops::sumsq(ops::colwise_sum(t.param(m)));
        }) < 1e-6);
}

TEST_CASE("reduction and scalar op gradients") {
  Parameter u = rand_param("u", 5, 1, 1, 40);
  Parameter w = rand_param("w", 5, 1, 1, 41);
  Parameter s = rand_param("s", 1, 1, 0, 42);
  CHECK(check({&u, &w}, [&](ops::Tape& t) {
          return ops::dot(t.param(u), t.param(w));
        }) < 1e-6);
  CHECK(check({&u}, [&](ops::Tape& t) {
          return ops::pick(t.param(u), 3);
        }) < 1e-6);
  CHECK(check({&u}, [&](ops::Tape& t) {
          return ops::logsumexp(t.param(u));
        }) < 1e-6);
  CHECK(check({&u, &s}, [&](ops::Tape& t) {
          return ops::sumsq(ops::scale(t.param(u), t.param(s)));
        }) < 1e-6);
  CHECK(check({&u, &w}, [&](ops::Tape& t) {
          std::vector<ops::Var> xs{t.param(u), t.param(w), t.param(u)};
          return ops::sumsq(ops::avg(xs));
        }) < 1e-6);
}

TEST_CASE("softmax composite gradients") {
  Parameter a = rand_param("a", 3, 2, 2, 50);
  Parameter b = rand_param("b", 3, 2, 2, 51);
  Parameter c = rand_param("c", 3, 2, 2, 52);
  Parameter m = rand_param("m", 4, 3, 2, 53);
  Parameter probe = rand_param("probe", 3, 2, 2, 54);
  CHECK(check({&a, &b, &c}, [&](ops::Tape& t) {
          std::vector<ops::Var> xs{t.param(a), t.param(b), t.param(c)};
          std::vector<ops::Var> out = ops::softmax_group(xs);
          // Weighted sum so each output contributes distinctly.
          ops::Var loss = ops::sum(ops::mul(out[0], t.param(probe)));
          loss = ops::add(loss, ops::sumsq(out[1]));
          return ops::add(loss, ops::sum(out[2]));
        }) < 1e-6);
  CHECK(check({&m}, [&](ops::Tape& t) {
          ops::Var mv = t.param(m);
          ops::Var sm = ops::softmax_over_rows(mv);
          return ops::sumsq(ops::mul(sm, ops::sigmoid(mv)));
        }) < 1e-6);
}

TEST_CASE("fused kernels match their composites and gradient-check") {
  Parameter pre = rand_param("pre", 5, 4 * 3, 2, 70);  // 2 norm + o + u, d=3
  Parameter a1 = rand_param("a1", 4, 3, 2, 71);
  Parameter a2 = rand_param("a2", 4, 3, 2, 72);
  Parameter b1 = rand_param("b1", 4, 3, 2, 73);
  Parameter b2 = rand_param("b2", 4, 3, 2, 74);

  {
    // Composite reference: per-block sigmoid/tanh, softmax over the family.
    ops::Tape t;
    ops::Var p = t.param(pre);
    ops::Var fused = ops::gate_activations(p, 2, 3);
    std::vector<ops::Var> fam{ops::sigmoid(ops::slice_cols(p, 0, 3)),
                              ops::sigmoid(ops::slice_cols(p, 3, 3))};
    std::vector<ops::Var> norm = ops::softmax_group(fam);
    ops::Var o = ops::sigmoid(ops::slice_cols(p, 6, 3));
    ops::Var u = ops::tanh(ops::slice_cols(p, 9, 3));
    std::vector<ops::Var> parts{norm[0], norm[1], o, u};
    ops::Var ref = ops::concat_cols(parts);
    CHECK((fused.value().mat() - ref.value().mat()).cwiseAbs().maxCoeff() <
          1e-12);
  }
  CHECK(check({&pre}, [&](ops::Tape& t) {
          ops::Var y = ops::gate_activations(t.param(pre), 2, 3);
          return ops::sumsq(ops::mul(y, ops::sigmoid(t.param(pre))));
        }) < 1e-6);
  CHECK(check({&a1, &a2, &b1, &b2}, [&](ops::Tape& t) {
          std::vector<ops::Var> as{t.param(a1), t.param(a2)};
          std::vector<ops::Var> bs{t.param(b1), t.param(b2)};
          return ops::sumsq(ops::mul_sum(as, bs));
        }) < 1e-6);
  CHECK(check({&a1, &b1}, [&](ops::Tape& t) {
          return ops::sumsq(ops::gated_tanh(t.param(a1), t.param(b1)));
        }) < 1e-6);
  CHECK(check({&a1, &b1}, [&](ops::Tape& t) {
          return ops::sumsq(ops::mul_colsum(t.param(a1), t.param(b1)));
        }) < 1e-6);
  {
    ops::Tape t;
    ops::Var fused = ops::gated_tanh(t.param(a1), t.param(b1));
    ops::Var ref = ops::mul(t.param(a1), ops::tanh(t.param(b1)));
    CHECK((fused.value().mat() - ref.value().mat()).cwiseAbs().maxCoeff() ==
          0.0);
  }
}

TEST_CASE("mixed composite network gradient") {
  Parameter w1 = rand_param("w1", 4, 3, 2, 60);
  Parameter b1 = rand_param("b1", 4, 1, 1, 61);
  Parameter w2 = rand_param("w2", 2, 4, 2, 62);
  Parameter x = rand_param("x", 3, 1, 1, 63);
  CHECK(check({&w1, &b1, &w2, &x}, [&](ops::Tape& t) {
          ops::Var h = ops::tanh(ops::add(
              ops::matmul(t.param(w1), t.param(x)), t.param(b1)));
          ops::Var logits = ops::matmul(t.param(w2), h);
          return ops::sub(ops::logsumexp(logits), ops::pick(logits, 1));
        }) < 1e-6);
}

TEST_SUITE_END();
