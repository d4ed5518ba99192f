#include "eqv/autodiff.hpp"

#include <cmath>

#include "doctest.h"
#include "eqv/expr.hpp"

using namespace eqv;
using namespace eqv::ad;

TEST_CASE("forward values of the primitive ops") {
  Tape t;
  double xd[] = {5.0, 6.0};
  Value x = t.leaf(xd);
  Param w("w", 2, 2);
  w.value = {1.0, 2.0, 3.0, 4.0};
  Value y = t.matvec(w, x);
  CHECK(t.value_of(y)[0] == 17.0);
  CHECK(t.value_of(y)[1] == 39.0);

  Value s = t.add(y, y);
  CHECK(t.value_of(s)[0] == 34.0);
  Value h = t.hadamard(x, x);
  CHECK(t.value_of(h)[1] == 36.0);
  Value c = t.concat(x, y);
  CHECK(t.size_of(c) == 4);
  CHECK(t.value_of(c)[2] == 17.0);
  CHECK(t.scalar_value(t.dot(x, x)) == 61.0);
  CHECK(t.scalar_value(t.mse(y, t.scale(y, 0.0))) == doctest::Approx(905.0));
  CHECK(t.value_of(t.tanh_(t.scalar(0.5)))[0] == doctest::Approx(std::tanh(0.5)));
  CHECK(t.value_of(t.sigmoid_(t.scalar(0.0)))[0] == 0.5);
  CHECK(t.value_of(t.relu_(t.scalar(-2.0)))[0] == 0.0);
  CHECK(t.value_of(t.relu_(t.scalar(2.0)))[0] == 2.0);
}

TEST_CASE("backward matches hand-derived gradients") {
  // L = mean((Wx - 0)^2) with W = [[1,2],[3,4]], x = [5,6].
  // dL/dy = y, dL/dW = outer(y, x), dL/dx = W^T y.
  Tape t;
  Param w("w", 2, 2);
  w.value = {1.0, 2.0, 3.0, 4.0};
  double xd[] = {5.0, 6.0};
  Value x = t.leaf(xd);
  Value y = t.matvec(w, x);
  Value loss = t.mse(y, t.scale(y, 0.0));
  // Note scale(y, 0) contributes -2/n*(y-0)*0 = 0 gradient through its branch.
  t.backward(loss);
  CHECK(w.grad[0] == doctest::Approx(85.0));
  CHECK(w.grad[1] == doctest::Approx(102.0));
  CHECK(w.grad[2] == doctest::Approx(195.0));
  CHECK(w.grad[3] == doctest::Approx(234.0));
  auto gx = t.adj_of(x);
  // x receives W^T y through matvec and -y*0 through the scale branch.
  CHECK(gx[0] == doctest::Approx(134.0));
  CHECK(gx[1] == doctest::Approx(190.0));
}

TEST_CASE("dot gradient flows to both arguments") {
  Tape t;
  Param a("a", 3, 1);
  Param b("b", 3, 1);
  a.value = {1.0, 2.0, 3.0};
  b.value = {-1.0, 0.5, 2.0};
  Value loss = t.dot(t.param_vec(a), t.param_vec(b));
  t.backward(loss);
  for (int i = 0; i < 3; ++i) {
    CHECK(a.grad[i] == doctest::Approx(b.value[i]));
    CHECK(b.grad[i] == doctest::Approx(a.value[i]));
  }
}

TEST_CASE("bce on a probability and bce_logit agree") {
  for (double z : {-3.0, -0.7, 0.0, 0.3, 2.5}) {
    for (double y : {0.0, 1.0}) {
      Tape t1;
      Param pz1("z", 1, 1);
      pz1.value = {z};
      Value l1 = t1.bce(t1.sigmoid_(t1.param_vec(pz1)), y);
      t1.backward(l1);

      Tape t2;
      Param pz2("z", 1, 1);
      pz2.value = {z};
      Value l2 = t2.bce_logit(t2.param_vec(pz2), y);
      t2.backward(l2);

      CHECK(t1.scalar_value(l1) == doctest::Approx(t2.scalar_value(l2)));
      CHECK(pz1.grad[0] == doctest::Approx(pz2.grad[0]));
      // Closed form: dL/dz = sigmoid(z) - y.
      double sig = 1.0 / (1.0 + std::exp(-z));
      CHECK(pz2.grad[0] == doctest::Approx(sig - y));
    }
  }
}

TEST_CASE("bce_logit stays finite at extreme logits") {
  Tape t;
  Param pz("z", 1, 1);
  pz.value = {1000.0};
  Value l = t.bce_logit(t.param_vec(pz), 0.0);
  CHECK(std::isfinite(t.scalar_value(l)));
  CHECK(t.scalar_value(l) == doctest::Approx(1000.0));
  t.backward(l);
  CHECK(pz.grad[0] == doctest::Approx(1.0));
}

TEST_CASE("finite differences agree with backward on a small net") {
  Rng rng(0xad1);
  Param w1("w1", 8, 5);
  Param b1("b1", 8, 1);
  Param w2("w2", 1, 8);
  for (auto* p : {&w1, &b1, &w2})
    for (double& v : p->value) v = rng.uniform(-0.5, 0.5);
  std::vector<double> input(5);
  for (double& v : input) v = rng.uniform(-1.0, 1.0);

  auto build = [&](Tape& t) {
    Value x = t.leaf(input);
    Value h = t.tanh_(t.add(t.matvec(w1, x), t.param_vec(b1)));
    Value out = t.matvec(w2, h);
    return t.bce_logit(out, 1.0);
  };
  Param* params[] = {&w1, &b1, &w2};
  auto res = grad_check(params, build, 64, 1);
  CHECK(res.checked == 56);
  CHECK(res.max_rel_err < 1e-7);
}

TEST_CASE("finite differences cover concat, hadamard, relu and mse") {
  Rng rng(0xad2);
  Param a("a", 4, 1);
  Param b("b", 4, 1);
  Param w("w", 3, 8);
  for (auto* p : {&a, &b, &w})
    for (double& v : p->value) v = rng.uniform(-1.0, 1.0);
  std::vector<double> target = {0.3, -0.2, 0.9};

  auto build = [&](Tape& t) {
    Value va = t.param_vec(a);
    Value vb = t.param_vec(b);
    Value joined = t.concat(t.hadamard(va, vb), t.add(va, vb));
    Value y = t.relu_(t.matvec(w, joined));
    return t.mse(y, t.leaf(target));
  };
  Param* params[] = {&a, &b, &w};
  auto res = grad_check(params, build, 64, 2);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("dropout masks scale kept units") {
  Tape t;
  Rng rng(77);
  Value m = t.dropout_mask(2000, 0.3, rng);
  auto mv = t.value_of(m);
  int kept = 0;
  for (double v : mv) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.7)));
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 1250);
  CHECK(kept < 1550);

  // Gradient flows only through kept coordinates.
  Param p("p", 2000, 1);
  for (double& v : p.value) v = 1.0;
  Tape t2;
  Rng rng2(77);
  Value mask = t2.dropout_mask(2000, 0.3, rng2);
  Value loss = t2.dot(t2.hadamard(t2.param_vec(p), mask), mask);
  t2.backward(loss);
  auto mval = t2.value_of(mask);
  for (int i = 0; i < 2000; ++i) {
    if (mval[i] == 0.0) CHECK(p.grad[i] == 0.0);
    else CHECK(p.grad[i] == doctest::Approx(mval[i] * mval[i]));
  }
}

TEST_CASE("touched params are tracked once and can be zeroed") {
  Tape t;
  Param w("w", 2, 2);
  Param b("b", 2, 1);
  w.value = {1, 0, 0, 1};
  b.value = {1, 1};
  Value x = t.param_vec(b);
  Value y = t.add(t.matvec(w, x), t.param_vec(b));  // b touched twice
  t.backward(t.dot(y, y));
  CHECK(t.touched().size() == 2);
  CHECK(w.grad[0] != 0.0);
  t.zero_touched_grads();
  CHECK(w.grad[0] == 0.0);
  CHECK(b.grad[0] == 0.0);
}

TEST_CASE("tape reuse is clean") {
  Tape t;
  Param w("w", 3, 1);
  w.value = {1.0, 2.0, 3.0};
  double firstloss = 0.0;
  for (int pass = 0; pass < 3; ++pass) {
    t.reset();
    Value v = t.param_vec(w);
    Value loss = t.dot(v, v);
    t.backward(loss);
    if (pass == 0) firstloss = t.scalar_value(loss);
    CHECK(t.scalar_value(loss) == firstloss);
    CHECK(t.touched().size() == 1);
    CHECK(w.grad[1] == doctest::Approx(4.0));
    t.zero_touched_grads();
  }
}

TEST_CASE("shape errors throw") {
  Tape t;
  double a2[] = {1.0, 2.0};
  double a3[] = {1.0, 2.0, 3.0};
  Value x = t.leaf(a2);
  Value y = t.leaf(a3);
  CHECK_THROWS_AS(t.add(x, y), EqvError);
  CHECK_THROWS_AS(t.dot(x, y), EqvError);
  CHECK_THROWS_AS(t.backward(x), EqvError);  // non-scalar loss
  Param w("w", 2, 3);
  CHECK_THROWS_AS(t.matvec(w, x), EqvError);
  CHECK_THROWS_AS(t.bce(x, 1.0), EqvError);
}
