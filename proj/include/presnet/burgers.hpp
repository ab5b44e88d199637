#pragma once

// Inverse viscous Burgers problem: trainable convection/viscosity
// coefficients appended to the network parameters, PDE residual through
// second-order jets, combined data+physics loss, and an analytic reference
// solution evaluated by Gauss-Hermite quadrature.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "presnet/autodiff.hpp"
#include "presnet/data.hpp"
#include "presnet/metrics.hpp"
#include "presnet/network.hpp"
#include "presnet/optim.hpp"

namespace presnet {

inline double pi_const() noexcept { return std::acos(-1.0); }

/// The benchmark viscosity 1/(100*pi).
inline double default_viscosity() noexcept {
  return 1.0 / (100.0 * pi_const());
}

// ---------------------------------------------------------------------------
// Gauss-Hermite quadrature: integral of exp(-y^2) f(y) dy ~ sum w_i f(x_i)

/// Nodes (ascending, symmetric about 0) and weights. Built from the
/// orthonormal Hermite functions psi_k (bounded for all x, so the
/// recurrence never overflows); nodes are the roots of psi_n located by
/// scan + bisection and polished by Newton steps, and each weight is
/// exp(-x^2) over the Christoffel sum of squared orthonormal polynomials.
struct GaussHermite {
  Vec nodes, weights;

  static GaussHermite compute(std::size_t n) {
    require(n >= 1, "gauss-hermite: need at least 1 node");

    // psi_0 = pi^{-1/4} exp(-x^2/2), psi_{k+1} = sqrt(2/(k+1)) x psi_k
    //                                           - sqrt(k/(k+1)) psi_{k-1}.
    const double quarter_root_pi = std::pow(pi_const(), -0.25);
    auto psi_top = [&](double x) {  // returns (psi_n, psi_{n-1})
      double pk = quarter_root_pi * std::exp(-0.5 * x * x);  // psi_0
      if (n == 0) return std::pair<double, double>(pk, 0.0);
      double pm = 0.0;  // psi_{-1}
      for (std::size_t k = 0; k < n; ++k) {
        const double pn = std::sqrt(2.0 / static_cast<double>(k + 1)) * x * pk -
                          std::sqrt(static_cast<double>(k) /
                                    static_cast<double>(k + 1)) *
                              pm;
        pm = pk;
        pk = pn;
      }
      return std::pair<double, double>(pk, pm);
    };
    // psi_n'(x) = sqrt(2n) psi_{n-1}(x) - x psi_n(x).
    auto refine = [&](double a, double b) {
      double fa = psi_top(a).first;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        if (mid == a || mid == b) break;
        const double fm = psi_top(mid).first;
        if ((fa < 0.0) == (fm < 0.0)) {
          a = mid;
          fa = fm;
        } else {
          b = mid;
        }
      }
      double x = 0.5 * (a + b);
      for (int it = 0; it < 6; ++it) {
        const auto [pn, pm] = psi_top(x);
        const double d =
            std::sqrt(2.0 * static_cast<double>(n)) * pm - x * pn;
        if (d == 0.0) break;
        const double step = pn / d;
        const double nx = x - step;
        if (nx <= a || nx >= b) break;  // keep the bisection bracket
        x = nx;
        if (std::abs(step) < 1e-16 * std::max(1.0, std::abs(x))) break;
      }
      return x;
    };

    // Positive roots by sign-change scan; the largest root is below
    // sqrt(2n+1), and near the origin roots are ~pi/sqrt(2n) apart.
    std::vector<double> pos;
    const double x_hi = std::sqrt(2.0 * static_cast<double>(n) + 1.0) + 1.0;
    const double step = pi_const() / (8.0 * std::sqrt(2.0 * n + 1.0));
    double prev_x = 0.45 * step;  // stay clear of the exact root at 0 (odd n)
    double prev_f = psi_top(prev_x).first;
    for (double x = prev_x + step; x <= x_hi; x += step) {
      const double f = psi_top(x).first;
      if ((prev_f < 0.0) != (f < 0.0)) pos.push_back(refine(prev_x, x));
      prev_x = x;
      prev_f = f;
    }
    require(2 * pos.size() + (n % 2) == n,
            "gauss-hermite: root scan found the wrong count");

    GaussHermite gh;
    gh.nodes.reserve(n);
    for (std::size_t i = pos.size(); i-- > 0;) gh.nodes.push_back(-pos[i]);
    if (n % 2 == 1) gh.nodes.push_back(0.0);
    for (double r : pos) gh.nodes.push_back(r);

    gh.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = gh.nodes[i];
      // Christoffel: w = 1 / sum_{k<n} p_k(x)^2 with p_k the orthonormal
      // polynomials. Substituting p_k = psi_k exp(x^2/2) keeps everything
      // bounded: w = exp(-x^2) / sum_{k<n} psi_k(x)^2.
      double pk = quarter_root_pi * std::exp(-0.5 * x * x);
      double pm = 0.0;
      double sum = pk * pk;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const double pn = std::sqrt(2.0 / static_cast<double>(k + 1)) * x * pk -
                          std::sqrt(static_cast<double>(k) /
                                    static_cast<double>(k + 1)) *
                              pm;
        pm = pk;
        pk = pn;
        sum += pk * pk;
      }
      gh.weights[i] = std::exp(-x * x) / sum;
    }
    // Mirror-average so symmetric nodes carry bit-identical weights.
    for (std::size_t i = 0; i < n / 2; ++i) {
      const double w = 0.5 * (gh.weights[i] + gh.weights[n - 1 - i]);
      gh.weights[i] = gh.weights[n - 1 - i] = w;
    }
    return gh;
  }
};

namespace detail {

inline const GaussHermite& cached_hermite(std::size_t n) {
  static std::map<std::size_t, GaussHermite> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, GaussHermite::compute(n)).first;
  return it->second;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Analytic reference solution

/// Viscous Burgers solution with initial profile u(x,0) = -sin(pi x) on the
/// whole line, evaluated through the heat-equation quotient with
/// Gauss-Hermite quadrature. Shared exponentials are normalized by their
/// maximum so the quotient never overflows regardless of viscosity.
inline double cole_hopf_reference(double x, double t, double nu,
                                  const GaussHermite& gh) {
  require(std::isfinite(x) && std::isfinite(t), "reference: non-finite input");
  require(nu > 0.0, "reference: viscosity must be positive");
  require(t >= 0.0, "reference: t must be >= 0");
  const double pi = pi_const();
  if (t == 0.0) return -std::sin(pi * x);

  const double s = std::sqrt(4.0 * nu * t);
  const double c = 1.0 / (2.0 * pi * nu);
  const std::size_t n = gh.nodes.size();
  std::vector<double> e(n), y(n);
  double emax = -1e300;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = x - s * gh.nodes[i];
    e[i] = -c * std::cos(pi * y[i]);
    emax = std::max(emax, e[i]);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = gh.weights[i] * std::exp(e[i] - emax);
    num += f * std::sin(pi * y[i]);
    den += f;
  }
  return -num / den;
}

inline double cole_hopf_reference(double x, double t, double nu,
                                  std::size_t n_nodes = 100) {
  require(n_nodes >= 1, "reference: need at least 1 quadrature node");
  return cole_hopf_reference(x, t, nu, detail::cached_hermite(n_nodes));
}

// ---------------------------------------------------------------------------
// Reference grid file (CSV x,t,u)

/// Writes the reference solution on an nx-by-nt grid over [-1,1] x [0,1]
/// (endpoints included) as CSV rows x,t,u with full double precision.
inline void write_burgers_reference(const std::string& path, std::size_t nx,
                                    std::size_t nt, double nu,
                                    std::size_t n_nodes = 100) {
  require(nx >= 2 && nt >= 2, "reference grid: need at least 2x2 points");
  const GaussHermite& gh = detail::cached_hermite(n_nodes);
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  out << "x,t,u\n";
  char buf[96];
  for (std::size_t i = 0; i < nx; ++i) {
    const double x =
        -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(nx - 1);
    for (std::size_t j = 0; j < nt; ++j) {
      const double t =
          static_cast<double>(j) / static_cast<double>(nt - 1);
      const double u = cole_hopf_reference(x, t, nu, gh);
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", x, t, u);
      out << buf;
    }
  }
  require(out.good(), "write failure on " + path);
}

/// Loads a reference grid CSV (header x,t,u) into a dataset with inputs
/// (x,t) and target u, validating x in [-1,1] and t in [0,1].
inline Dataset load_burgers_reference(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  std::string line;
  std::size_t line_no = 1;
  require(static_cast<bool>(std::getline(in, line)),
          path + ": empty file, expected header x,t,u");
  {
    std::string h = detail::trim(line);
    h.erase(std::remove(h.begin(), h.end(), ' '), h.end());
    if (h != "x,t,u") detail::line_fail(path, line_no, "expected header x,t,u");
  }
  std::vector<Vec> pts;
  Vec targets;
  constexpr double slop = 1e-12;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    std::istringstream ss(t);
    std::string tok;
    double vals[3];
    for (int k = 0; k < 3; ++k) {
      if (!std::getline(ss, tok, ','))
        detail::line_fail(path, line_no, "expected 3 comma-separated values");
      bool ok = false;
      vals[k] = detail::parse_double(detail::trim(tok), ok);
      if (!ok) detail::line_fail(path, line_no, "not a number: '" + tok + "'");
      if (!std::isfinite(vals[k]))
        detail::line_fail(path, line_no, "non-finite value rejected");
    }
    if (std::getline(ss, tok, ','))
      detail::line_fail(path, line_no, "expected exactly 3 values");
    if (vals[0] < -1.0 - slop || vals[0] > 1.0 + slop)
      detail::line_fail(path, line_no, "x outside [-1,1]");
    if (vals[1] < -slop || vals[1] > 1.0 + slop)
      detail::line_fail(path, line_no, "t outside [0,1]");
    pts.push_back(Vec{vals[0], vals[1]});
    targets.push_back(vals[2]);
  }
  require(!pts.empty(), path + ": no data rows");
  return make_dataset(pts, std::move(targets));
}

// ---------------------------------------------------------------------------
// Problem statement

/// Convection (l1) and viscosity (l2) coefficients.
struct LambdaPair {
  double l1 = 0.0;
  double l2 = 0.0;
};

/// Observations (x,t) -> u plus collocation points where the PDE residual
/// is enforced, the network architecture, and the initial coefficients.
struct BurgersInverseProblem {
  ArchitectureSpec spec;            // input (x,t), scalar output
  Dataset observations;             // inputs n x 2, targets u
  std::vector<Vec> collocation;     // n_c points (x,t)
  LambdaPair lambda_init{2.0, 0.2};
};

inline void validate_problem(const BurgersInverseProblem& p) {
  validate_spec(p.spec);
  require(p.spec.input_dim == 2 && p.spec.output_dim == 1,
          "burgers: network must map (x,t) to a scalar");
  require(p.observations.n() >= 1, "burgers: need at least one observation");
  require(p.observations.dim() == 2, "burgers: observations must be (x,t)");
  require(!p.collocation.empty(), "burgers: need at least one collocation point");
  constexpr double slop = 1e-9;
  auto in_domain = [&](double x, double t) {
    return x >= -1.0 - slop && x <= 1.0 + slop && t >= -slop && t <= 1.0 + slop;
  };
  for (std::size_t i = 0; i < p.observations.n(); ++i)
    require(in_domain(p.observations.inputs(i, 0), p.observations.inputs(i, 1)),
            "burgers: observation outside [-1,1]x[0,1]");
  for (const auto& c : p.collocation) {
    require(c.size() == 2, "burgers: collocation points must be (x,t)");
    require(in_domain(c[0], c[1]),
            "burgers: collocation point outside [-1,1]x[0,1]");
  }
  require(std::isfinite(p.lambda_init.l1) && std::isfinite(p.lambda_init.l2),
          "burgers: initial coefficients must be finite");
}

// ---------------------------------------------------------------------------
// PDE residual

/// Network value and the derivatives entering the residual, from one jet
/// pass: directions are axis 0 (x, second order) and axis 1 (t).
struct ResidualParts {
  double N = 0.0, N_x = 0.0, N_t = 0.0, N_xx = 0.0;
  double g = 0.0;
};

namespace detail {

inline ResidualParts residual_parts(const ArchitectureSpec& s,
                                    const ParameterSet& p,
                                    std::uint64_t params_hash, LambdaPair lam,
                                    double x, double t, Vec& input,
                                    JetCache& cache) {
  input.resize(2);
  input[0] = x;
  input[1] = t;
  jet_forward_cached(s, p, input, 0, 1, params_hash, cache);
  const Jet2& o = cache.out;
  ResidualParts r;
  r.N = o.v;
  r.N_x = o.da;
  r.N_t = o.db;
  r.N_xx = o.d2;
  r.g = r.N_t + lam.l1 * r.N * r.N_x - lam.l2 * r.N_xx;
  return r;
}

}  // namespace detail

/// Residual g = N_t + l1 N N_x - l2 N_xx at one point.
inline double residual_g(const ArchitectureSpec& spec, const ParameterSet& params,
                         LambdaPair lam, double x, double t) {
  JetCache cache;
  Vec input;
  return detail::residual_parts(spec, params, content_hash(params), lam, x, t,
                                input, cache)
      .g;
}

// ---------------------------------------------------------------------------
// Combined loss

/// Loss value, its two parts, and the gradient over [theta; l1; l2].
/// A non-finite intermediate aborts the computation: loss is NaN and
/// `diagnostic` names the point that produced it.
struct PinnLossResult {
  double loss = 0.0;
  double mse_u = 0.0;
  double mse_g = 0.0;
  Vec grad;  // length parameter_count + 2, layout [theta; l1; l2]
  std::string diagnostic;

  bool ok() const noexcept { return diagnostic.empty(); }
};

inline PinnLossResult pinn_loss(const BurgersInverseProblem& prob,
                                const ParameterSet& params, LambdaPair lam) {
  validate_problem(prob);
  PinnLossResult out;
  const std::uint64_t h = content_hash(params);
  ParameterSet grad = zero_params(prob.spec);
  double gl1 = 0.0, gl2 = 0.0;

  auto abort_with = [&](std::string msg) {
    out.loss = std::numeric_limits<double>::quiet_NaN();
    out.diagnostic = std::move(msg);
    flatten_into(grad, out.grad);
    out.grad.push_back(gl1);
    out.grad.push_back(gl2);
    return out;
  };

  // Data part: (1/n) sum (N - u)^2.
  {
    ForwardCache cache;
    detail::BackwardScratch scratch;
    Vec input, upstream{0.0};
    const double inv_n = 1.0 / static_cast<double>(prob.observations.n());
    for (std::size_t i = 0; i < prob.observations.n(); ++i) {
      prob.observations.copy_input(i, input);
      forward_cached(prob.spec, params, input, h, cache);
      const double r = cache.out[0] - prob.observations.targets[i];
      if (!std::isfinite(r))
        return abort_with("non-finite data residual at observation " +
                          std::to_string(i));
      out.mse_u += r * r * inv_n;
      upstream[0] = 2.0 * r * inv_n;
      backward_accumulate(prob.spec, params, cache, h, upstream, grad, nullptr,
                          scratch);
    }
  }

  // Physics part: (1/n_c) sum g^2, reverse-over-forward for the network
  // terms, closed-form for the coefficient terms.
  {
    JetCache cache;
    detail::JetBackwardScratch scratch;
    Vec input;
    const double inv_nc = 1.0 / static_cast<double>(prob.collocation.size());
    for (std::size_t i = 0; i < prob.collocation.size(); ++i) {
      const auto& cpt = prob.collocation[i];
      const ResidualParts r = detail::residual_parts(
          prob.spec, params, h, lam, cpt[0], cpt[1], input, cache);
      if (!std::isfinite(r.g))
        return abort_with("non-finite PDE residual at collocation point " +
                          std::to_string(i));
      out.mse_g += r.g * r.g * inv_nc;
      const double u = 2.0 * r.g * inv_nc;  // dL/dg
      Jet2 seed;
      seed.v = u * lam.l1 * r.N_x;   // dg/dN
      seed.da = u * lam.l1 * r.N;    // dg/dN_x
      seed.db = u;                   // dg/dN_t
      seed.d2 = -u * lam.l2;         // dg/dN_xx
      jet_backward(prob.spec, params, cache, h, seed, grad, scratch);
      gl1 += u * r.N * r.N_x;
      gl2 -= u * r.N_xx;
    }
  }

  out.loss = out.mse_u + out.mse_g;
  flatten_into(grad, out.grad);
  out.grad.push_back(gl1);
  out.grad.push_back(gl2);
  return out;
}

// ---------------------------------------------------------------------------
// Joint inverse solve

struct SolveSettings {
  OptimizerKind optimizer = OptimizerKind::lbfgs;
  ConvergenceCriteria criteria;  // defaults: tolerances 1e-9, max_iter 20000
  double adam_lr = 1e-3;
  std::size_t lbfgs_history = 10;
  std::uint64_t seed = 0;  // network initialization
  std::optional<ParameterSet> initial_params;  // overrides seeded init
  IterObserver observer;   // extra per-iteration hook (after trajectory capture)
  // Reference coefficient values used only for percentage-error reporting.
  LambdaPair truth{1.0, 0.0031830988618379067};
};

struct InverseResult {
  LambdaPair lambda;
  ParameterSet params;
  OptimReport report;
  std::vector<LambdaPair> trajectory;  // coefficients after each iteration
  double pct_error_l1 = 0.0;
  double pct_error_l2 = 0.0;
  PinnLossResult final_loss;  // parts at the returned iterate
};

/// Minimizes pinn_loss jointly over network parameters and coefficients.
/// Optimizer failures (line search, non-finite) surface in the report.
inline InverseResult solve_inverse(const BurgersInverseProblem& prob,
                                   const SolveSettings& settings) {
  validate_problem(prob);
  require(settings.truth.l1 != 0.0 && settings.truth.l2 != 0.0,
          "burgers: percentage errors need nonzero reference coefficients");
  const std::size_t P = parameter_count(prob.spec);

  ParameterSet params0;
  if (settings.initial_params) {
    params0 = *settings.initial_params;
    validate_params(prob.spec, params0);
  } else {
    RngStream rng(settings.seed);
    params0 = init_params(prob.spec, rng);
  }
  Vec x0 = flatten(params0);
  x0.push_back(prob.lambda_init.l1);
  x0.push_back(prob.lambda_init.l2);

  struct State {
    const BurgersInverseProblem* prob;
    ParameterSet params;
    std::size_t P;
  };
  auto st = std::make_shared<State>();
  st->prob = &prob;
  st->params = params0;
  st->P = P;

  Objective obj = [st](const Vec& x, Vec& g) {
    require(x.size() == st->P + 2, "burgers objective: wrong vector length");
    unflatten_into(Vec(x.begin(), x.begin() + st->P), st->prob->spec,
                   st->params);
    const LambdaPair lam{x[st->P], x[st->P + 1]};
    PinnLossResult r = pinn_loss(*st->prob, st->params, lam);
    g = std::move(r.grad);
    return r.loss;
  };

  InverseResult out;
  IterObserver observer = [&out, P, &settings](const IterInfo& info) {
    out.trajectory.push_back(LambdaPair{info.x[P], info.x[P + 1]});
    if (settings.observer) settings.observer(info);
  };

  std::pair<Vec, OptimReport> run =
      settings.optimizer == OptimizerKind::adam
          ? adam_minimize(obj, std::move(x0), settings.adam_lr,
                          settings.criteria, observer)
          : lbfgs_minimize(obj, std::move(x0), settings.criteria,
                           settings.lbfgs_history, observer);

  out.report = std::move(run.second);
  const Vec& xf = run.first;
  out.lambda = LambdaPair{xf[P], xf[P + 1]};
  out.params = unflatten(Vec(xf.begin(), xf.begin() + P), prob.spec);
  out.pct_error_l1 =
      100.0 * std::abs(out.lambda.l1 - settings.truth.l1) /
      std::abs(settings.truth.l1);
  out.pct_error_l2 =
      100.0 * std::abs(out.lambda.l2 - settings.truth.l2) /
      std::abs(settings.truth.l2);
  out.final_loss = pinn_loss(prob, out.params, out.lambda);
  return out;
}

}  // namespace presnet
