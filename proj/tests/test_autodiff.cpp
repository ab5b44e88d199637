#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "presnet/autodiff.hpp"
#include "presnet/network.hpp"
#include "test_support.hpp"

using namespace presnet;
using presnet_test::random_params;
using presnet_test::random_vec;
using presnet_test::tape_network;

TEST_CASE("autodiff: jet product obeys the truncated-Taylor rule",
          "[autodiff]") {
  RngStream rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    Jet2 a{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2),
           rng.uniform(-2, 2)};
    Jet2 b{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2),
           rng.uniform(-2, 2)};
    Jet2 c = a * b;
    CHECK(c.v == Catch::Approx(a.v * b.v).margin(1e-15));
    CHECK(c.da == Catch::Approx(a.da * b.v + a.v * b.da).margin(1e-14));
    CHECK(c.d2 ==
          Catch::Approx(a.d2 * b.v + 2.0 * a.da * b.da + a.v * b.d2)
              .margin(1e-14));
  }
}

TEST_CASE("autodiff: jet powers compose like monomials", "[autodiff]") {
  // x^2 * x^3 = x^5 including first and second derivatives.
  for (double x0 : {0.37, -1.2, 2.0}) {
    Jet2 x{x0, 1.0, 0.0, 0.0};
    Jet2 lhs = pow_jet(x, 2) * pow_jet(x, 3);
    Jet2 rhs = pow_jet(x, 5);
    CHECK(lhs.v == Catch::Approx(rhs.v).epsilon(1e-13));
    CHECK(lhs.da == Catch::Approx(rhs.da).epsilon(1e-13));
    CHECK(lhs.d2 == Catch::Approx(rhs.d2).epsilon(1e-13));
  }
}

TEST_CASE("autodiff: zero network has zero jet output", "[autodiff]") {
  ArchitectureSpec s;
  s.kind = Arch::sqr_skip_resnet;
  s.input_dim = 2;
  s.hidden_widths = {2, 2};
  auto p = zero_params(s);
  JetResult r = jet_forward(s, p, {0.4, 0.8}, 0, 1);
  CHECK(r.value == 0.0);
  CHECK(r.d_first == 0.0);
  CHECK(r.d_second == 0.0);
  CHECK(r.d2_first == 0.0);
}

TEST_CASE("autodiff: linear map has exact jet derivatives", "[autodiff]") {
  // N(x) = 3 x1 + 2 x2 via an identity-activation pass-through layer.
  ArchitectureSpec s;
  s.kind = Arch::plain;
  s.input_dim = 2;
  s.hidden_widths = {2};
  s.activation = Activation::identity;
  ParameterSet p = zero_params(s);
  p.W[0](0, 0) = 1.0;
  p.W[0](1, 1) = 1.0;
  p.W[1](0, 0) = 3.0;
  p.W[1](0, 1) = 2.0;
  JetResult r = jet_forward(s, p, {0.7, -0.4}, 0, 1);
  CHECK(r.value == Catch::Approx(3 * 0.7 + 2 * -0.4).margin(1e-15));
  CHECK(r.d_first == 3.0);
  CHECK(r.d_second == 2.0);
  CHECK(r.d2_first == 0.0);
}

TEST_CASE("autodiff: jet derivatives match finite differences", "[autodiff]") {
  RngStream rng(99);
  for (int rep = 0; rep < 8; ++rep) {
    ArchitectureSpec s;
    s.kind = Arch::sqr_skip_resnet;
    s.input_dim = 2;
    s.hidden_widths = {2, 2, 2};
    s.power = 2;
    RngStream init = rng.child(rep);
    auto p = random_params(s, init);
    Vec x = random_vec(init, 2, -0.9, 0.9);
    JetResult r = jet_forward(s, p, x, 0, 1);

    const double h = 1e-5;
    auto eval = [&](double x1, double x2) {
      auto [out, c] = forward(s, p, {x1, x2});
      return out[0];
    };
    const double fx = eval(x[0], x[1]);
    const double d1 = (eval(x[0] + h, x[1]) - eval(x[0] - h, x[1])) / (2 * h);
    const double d2 = (eval(x[0], x[1] + h) - eval(x[0], x[1] - h)) / (2 * h);
    // Second central difference at its own optimal step; h=1e-5 would put
    // the eps/h^2 roundoff at the same scale as the tolerance.
    const double h2 = 1e-4;
    const double dxx =
        (eval(x[0] + h2, x[1]) - 2 * fx + eval(x[0] - h2, x[1])) / (h2 * h2);
    CHECK(std::abs(r.d_first - d1) <= 1e-5 * std::max(1.0, std::abs(r.d_first)));
    CHECK(std::abs(r.d_second - d2) <=
          1e-5 * std::max(1.0, std::abs(r.d_second)));
    CHECK(std::abs(r.d2_first - dxx) <=
          1e-5 * std::max(1.0, std::abs(r.d2_first)));
  }
}

TEST_CASE("autodiff: jet first derivatives equal reverse-mode input gradient",
          "[autodiff]") {
  RngStream rng(123);
  for (Arch kind : {Arch::plain, Arch::resnet, Arch::skip_resnet,
                    Arch::sqr_skip_resnet}) {
    ArchitectureSpec s;
    s.kind = kind;
    s.input_dim = 2;
    s.hidden_widths = {2, 2, 2};
    RngStream init = rng.child(static_cast<int>(kind));
    auto p = random_params(s, init);
    Vec x = random_vec(init, 2);
    JetResult r = jet_forward(s, p, x, 0, 1);
    auto [out, cache] = forward(s, p, x);
    auto [grad, gin] = backward(s, p, cache, Vec{1.0});
    CHECK(std::abs(r.d_first - gin[0]) <=
          1e-10 * std::max(1.0, std::abs(gin[0])));
    CHECK(std::abs(r.d_second - gin[1]) <=
          1e-10 * std::max(1.0, std::abs(gin[1])));
  }
}

TEST_CASE("autodiff: jet_forward rejects non-scalar outputs", "[autodiff]") {
  ArchitectureSpec s;
  s.input_dim = 2;
  s.hidden_widths = {3};
  s.output_dim = 2;
  auto p = zero_params(s);
  CHECK_THROWS_AS(jet_forward(s, p, {0.1, 0.2}, 0, 1), Error);
}

TEST_CASE("autodiff: jet_backward matches finite differences per component",
          "[autodiff]") {
  RngStream rng(321);
  ArchitectureSpec s;
  s.kind = Arch::sqr_skip_resnet;
  s.input_dim = 2;
  s.hidden_widths = {3, 3, 3};
  RngStream init = rng.child(0);
  auto p = random_params(s, init);
  Vec x = random_vec(init, 2, -0.8, 0.8);
  const Vec theta = flatten(p);

  // Seeds picking out each jet component of the output in turn.
  const Jet2 seeds[4] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0},
                         {0, 0, 0, 1}};
  for (int comp = 0; comp < 4; ++comp) {
    auto component = [&](const ParameterSet& q) {
      JetResult r = jet_forward(s, q, x, 0, 1);
      switch (comp) {
        case 0: return r.value;
        case 1: return r.d_first;
        case 2: return r.d_second;
        default: return r.d2_first;
      }
    };
    ParameterSet grad = zero_params(s);
    JetCache cache;
    const std::uint64_t h = content_hash(p);
    jet_forward_cached(s, p, x, 0, 1, h, cache);
    detail::JetBackwardScratch scratch;
    jet_backward(s, p, cache, h, seeds[comp], grad, scratch);
    const Vec analytic = flatten(grad);

    const double step = 1e-5;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      Vec tp = theta, tm = theta;
      tp[k] += step;
      tm[k] -= step;
      const double fd =
          (component(unflatten(tp, s)) - component(unflatten(tm, s))) /
          (2 * step);
      CHECK(std::abs(analytic[k] - fd) <=
            2e-6 * std::max(1.0, std::abs(analytic[k])));
    }
  }
}

TEST_CASE("autodiff: tape gradient of squared norm", "[autodiff]") {
  auto program = [](Tape& t, const std::vector<Tape::Var>& th) {
    Tape::Var acc = t.input(0.0);
    for (const auto& v : th) acc = acc + v * v;
    return acc;
  };
  auto [loss, grad] = grad_wrt_params(program, Vec{1.0, 2.0});
  CHECK(loss == Catch::Approx(5.0).margin(1e-15));
  CHECK(grad[0] == Catch::Approx(2.0).margin(1e-15));
  CHECK(grad[1] == Catch::Approx(4.0).margin(1e-15));
}

TEST_CASE("autodiff: tape matches explicit one-hidden-layer backprop",
          "[autodiff]") {
  // Oracle: delta = sigma'(z) .* (W2^T u); grad_W1 = delta x^T,
  // grad_b1 = delta, grad_W2 = u f^T, grad_b2 = u, written out directly.
  ArchitectureSpec s;
  s.kind = Arch::plain;
  s.input_dim = 2;
  s.hidden_widths = {3};
  RngStream rng(777);
  auto p = random_params(s, rng);
  Vec x = random_vec(rng, 2);
  const double u = 1.7;

  auto program = [&](Tape& t, const std::vector<Tape::Var>& th) {
    return tape_network(t, s, th, x, Vec{u});
  };
  auto [loss, grad] = grad_wrt_params(program, flatten(p));

  Vec z(3), f(3);
  for (int i = 0; i < 3; ++i) {
    z[i] = p.b[0][i] + p.W[0](i, 0) * x[0] + p.W[0](i, 1) * x[1];
    f[i] = std::tanh(z[i]);
  }
  Vec delta(3);
  for (int i = 0; i < 3; ++i)
    delta[i] = (1.0 - f[i] * f[i]) * p.W[1](0, i) * u;

  std::size_t k = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(grad[k++] == Catch::Approx(delta[i] * x[j]).margin(1e-12));
  for (int i = 0; i < 3; ++i)
    CHECK(grad[k++] == Catch::Approx(delta[i]).margin(1e-12));
  for (int i = 0; i < 3; ++i)
    CHECK(grad[k++] == Catch::Approx(u * f[i]).margin(1e-12));
  CHECK(grad[k++] == Catch::Approx(u).margin(1e-12));
}

TEST_CASE("autodiff: tape agrees with hand-coded backward on every kind",
          "[autodiff]") {
  RngStream rng(2025);
  for (Arch kind : {Arch::plain, Arch::resnet, Arch::skip_resnet,
                    Arch::sqr_skip_resnet}) {
    ArchitectureSpec s;
    s.kind = kind;
    s.input_dim = 2;
    s.hidden_widths = {3, 3};
    s.output_dim = 2;
    RngStream init = rng.child(static_cast<int>(kind) + 10);
    auto p = random_params(s, init);
    Vec x = random_vec(init, 2);
    Vec upstream = random_vec(init, 2);

    auto [out, cache] = forward(s, p, x);
    auto [gset, gin] = backward(s, p, cache, upstream);
    const Vec hand = flatten(gset);

    auto program = [&](Tape& t, const std::vector<Tape::Var>& th) {
      return tape_network(t, s, th, x, upstream);
    };
    auto [loss, taped] = grad_wrt_params(program, flatten(p));

    REQUIRE(hand.size() == taped.size());
    for (std::size_t k = 0; k < hand.size(); ++k)
      CHECK(std::abs(hand[k] - taped[k]) <= 1e-12);
  }
}

TEST_CASE("autodiff: gradient is linear in the loss", "[autodiff]") {
  RngStream rng(31);
  ArchitectureSpec s;
  s.kind = Arch::sqr_skip_resnet;
  s.input_dim = 2;
  s.hidden_widths = {2, 2};
  auto p = random_params(s, rng);
  Vec x1 = random_vec(rng, 2), x2 = random_vec(rng, 2);
  const double a = 1.3, b = -0.7;
  const Vec theta = flatten(p);

  auto prog1 = [&](Tape& t, const std::vector<Tape::Var>& th) {
    return tape_network(t, s, th, x1, Vec{1.0});
  };
  auto prog2 = [&](Tape& t, const std::vector<Tape::Var>& th) {
    return tape_network(t, s, th, x2, Vec{1.0});
  };
  auto combined = [&](Tape& t, const std::vector<Tape::Var>& th) {
    return a * prog1(t, th) + b * prog2(t, th);
  };
  auto [l1, g1] = grad_wrt_params(prog1, theta);
  auto [l2, g2] = grad_wrt_params(prog2, theta);
  auto [lc, gc] = grad_wrt_params(combined, theta);
  for (std::size_t k = 0; k < theta.size(); ++k)
    CHECK(std::abs(gc[k] - (a * g1[k] + b * g2[k])) <= 1e-12);
}

TEST_CASE("autodiff: tape rejects foreign variables", "[autodiff]") {
  Tape t1, t2;
  Tape::Var a = t1.input(1.0);
  Tape::Var b = t2.input(2.0);
  CHECK_THROWS_AS(t1.add(a, b), Error);
}

TEST_CASE("autodiff: finite_difference_check calibration", "[autodiff]") {
  GradProgram square = [](const Vec& x) {
    return std::make_pair(x[0] * x[0], Vec{2.0 * x[0]});
  };
  CHECK(finite_difference_check(square, Vec{3.0}, 1e-5) < 1e-9);

  GradProgram tanh_prog = [](const Vec& x) {
    const double t = std::tanh(x[0]);
    return std::make_pair(t, Vec{1.0 - t * t});
  };
  CHECK(finite_difference_check(tanh_prog, Vec{0.5}, 1e-5) < 1e-9);

  // Fault injection: a gradient off by +0.1 must be flagged at that scale.
  GradProgram broken = [](const Vec& x) {
    const double t = std::tanh(x[0]);
    return std::make_pair(t, Vec{1.0 - t * t + 0.1});
  };
  const double disc = finite_difference_check(broken, Vec{0.5}, 1e-5);
  CHECK(disc > 0.09);
  CHECK(disc < 0.11);
}

TEST_CASE("autodiff: reverse gradients match finite differences broadly",
          "[autodiff]") {
  RngStream rng(404);
  for (Arch kind : {Arch::plain, Arch::resnet, Arch::skip_resnet,
                    Arch::sqr_skip_resnet}) {
    ArchitectureSpec s;
    s.kind = kind;
    s.input_dim = 3;
    s.hidden_widths = {3, 3};
    RngStream init = rng.child(static_cast<int>(kind) + 40);
    auto p = random_params(s, init);
    Vec x = random_vec(init, 3, -2.0, 2.0);

    GradProgram prog = [&](const Vec& th) {
      auto program = [&](Tape& t, const std::vector<Tape::Var>& vars) {
        return tape_network(t, s, vars, x, Vec{1.0});
      };
      return grad_wrt_params(program, th);
    };
    CHECK(finite_difference_check(prog, flatten(p), 1e-5) < 1e-6);
  }
}
