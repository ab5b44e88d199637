#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "presnet/linalg.hpp"
#include "presnet/network.hpp"

namespace presnet {

// ---------------------------------------------------------------------------
// Second-order forward jets: value, first derivatives along two tracked
// input directions, second derivative along the first direction only.
// ---------------------------------------------------------------------------

struct Jet2 {
  double v = 0.0;   // value
  double da = 0.0;  // d/d(dir1)
  double db = 0.0;  // d/d(dir2)
  double d2 = 0.0;  // d2/d(dir1)2
};

inline Jet2 operator+(const Jet2& a, const Jet2& b) noexcept {
  return {a.v + b.v, a.da + b.da, a.db + b.db, a.d2 + b.d2};
}

inline Jet2 operator-(const Jet2& a, const Jet2& b) noexcept {
  return {a.v - b.v, a.da - b.da, a.db - b.db, a.d2 - b.d2};
}

/// Truncated-Taylor product: d2(ab) = a d2b + 2 d1a d1b + d2a b.
inline Jet2 operator*(const Jet2& a, const Jet2& b) noexcept {
  return {a.v * b.v, a.da * b.v + a.v * b.da, a.db * b.v + a.v * b.db,
          a.d2 * b.v + 2.0 * a.da * b.da + a.v * b.d2};
}

inline Jet2 operator*(double c, const Jet2& a) noexcept {
  return {c * a.v, c * a.da, c * a.db, c * a.d2};
}

inline Jet2 tanh_jet(const Jet2& u) noexcept {
  const double T = std::tanh(u.v);
  const double Tp = 1.0 - T * T;
  const double Tpp = -2.0 * T * Tp;
  return {T, Tp * u.da, Tp * u.db, Tp * u.d2 + Tpp * u.da * u.da};
}

/// u^p for integer p >= 1, derivatives globally defined.
inline Jet2 pow_jet(const Jet2& u, int p) noexcept {
  const double c1 = static_cast<double>(p) * detail::ipow(u.v, p - 1);
  const double c2 =
      p >= 2 ? static_cast<double>(p) * static_cast<double>(p - 1) *
                   detail::ipow(u.v, p - 2)
             : 0.0;
  return {detail::ipow(u.v, p), c1 * u.da, c1 * u.db,
          c1 * u.d2 + c2 * u.da * u.da};
}

using JetVec = std::vector<Jet2>;

/// Layer-by-layer jet activations captured for the reverse sweep.
struct JetCache {
  JetVec x0;
  std::vector<JetVec> z, f, x;
  Jet2 out;
  std::uint64_t params_hash = 0;
};

struct JetResult {
  double value;     // N
  double d_first;   // dN/d(dir1)
  double d_second;  // dN/d(dir2)
  double d2_first;  // d2N/d(dir1)2
};

namespace detail {

inline void jet_affine_into(const Matrix& W, const Vec& b, const JetVec& in,
                            JetVec& out) {
  out.resize(W.rows());
  for (std::size_t i = 0; i < W.rows(); ++i) {
    const double* __restrict__ r = W.row(i);
    Jet2 acc{b[i], 0.0, 0.0, 0.0};
    for (std::size_t j = 0; j < W.cols(); ++j) {
      const double w = r[j];
      acc.v += w * in[j].v;
      acc.da += w * in[j].da;
      acc.db += w * in[j].db;
      acc.d2 += w * in[j].d2;
    }
    out[i] = acc;
  }
}

}  // namespace detail

/// Forward pass on jets; fills the cache. params_hash is the caller's
/// content_hash of params (computed once per batch).
inline void jet_forward_cached(const ArchitectureSpec& s,
                               const ParameterSet& p, const Vec& input,
                               std::size_t dir1, std::size_t dir2,
                               std::uint64_t params_hash, JetCache& cache) {
  require(s.output_dim == 1, "jet_forward: only scalar outputs supported");
  require(input.size() == s.input_dim,
          "jet_forward: input length != input_dim");
  require(dir1 < s.input_dim && dir2 < s.input_dim,
          "jet_forward: direction axis out of range");
  const std::size_t L = s.hidden_widths.size();
  cache.x0.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i)
    cache.x0[i] = {input[i], i == dir1 ? 1.0 : 0.0, i == dir2 ? 1.0 : 0.0,
                   0.0};
  cache.z.resize(L + 1);
  cache.f.resize(L + 1);
  cache.x.resize(L + 1);
  const JetVec* prev = &cache.x0;
  for (std::size_t l = 1; l <= L; ++l) {
    JetVec& z = cache.z[l];
    JetVec& f = cache.f[l];
    JetVec& x = cache.x[l];
    detail::jet_affine_into(p.W[l - 1], p.b[l - 1], *prev, z);
    f.resize(z.size());
    if (s.activation == Activation::tanh) {
      for (std::size_t i = 0; i < z.size(); ++i) f[i] = tanh_jet(z[i]);
    } else {
      f = z;
    }
    x = f;
    if (skip_applies(s, l)) {
      const int p_eff = skip_power(s);
      const JetVec& pr = *prev;
      if (p_eff == 1) {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] + pr[i];
      } else {
        for (std::size_t i = 0; i < x.size(); ++i)
          x[i] = x[i] + pow_jet(pr[i], p_eff);
      }
    }
    prev = &x;
  }
  JetVec outv;
  detail::jet_affine_into(p.W[L], p.b[L], *prev, outv);
  cache.out = outv[0];
  cache.params_hash = params_hash;
}

/// N(x) with dN/d(dir1), dN/d(dir2), d2N/d(dir1)2 through any architecture.
inline JetResult jet_forward(const ArchitectureSpec& s, const ParameterSet& p,
                             const Vec& input, std::size_t dir1,
                             std::size_t dir2) {
  validate_params(s, p);
  JetCache cache;
  jet_forward_cached(s, p, input, dir1, dir2, content_hash(p), cache);
  return {cache.out.v, cache.out.da, cache.out.db, cache.out.d2};
}

namespace detail {

struct JetBackwardScratch {
  JetVec bar_x, bar_z, bar_next;
};

inline double dot4(const Jet2& a, const Jet2& b) noexcept {
  return a.v * b.v + a.da * b.da + a.db * b.db + a.d2 * b.d2;
}

}  // namespace detail

/// Reverse sweep over the jet forward pass. `seed` holds the partial
/// derivatives of a scalar loss with respect to the four components of the
/// output jet; parameter gradients accumulate into `grad`.
///
/// Per elementwise op y = F(u) the adjoint is the transposed component
/// Jacobian. tanh: with T, T', T'', T''' at u.v,
///   bar_u.v  = T' bar_y.v + T'' u.da bar_y.da + T'' u.db bar_y.db
///              + (T''' u.da^2 + T'' u.d2) bar_y.d2
///   bar_u.da = T' bar_y.da + 2 T'' u.da bar_y.d2
///   bar_u.db = T' bar_y.db
///   bar_u.d2 = T' bar_y.d2
/// and the power map uses the same shape with c_k = p!/(p-k)! u.v^(p-k).
inline void jet_backward(const ArchitectureSpec& s, const ParameterSet& p,
                         const JetCache& cache, std::uint64_t params_hash,
                         const Jet2& seed, ParameterSet& grad,
                         detail::JetBackwardScratch& scratch) {
  require(cache.params_hash == params_hash,
          "jet_backward: cache is stale for these parameters");
  const std::size_t L = s.hidden_widths.size();
  JetVec& bar_x = scratch.bar_x;
  JetVec& bar_z = scratch.bar_z;
  JetVec& bar_next = scratch.bar_next;

  // Output layer (affine, scalar).
  {
    const JetVec& xin = cache.x[L];
    Matrix& gW = grad.W[L];
    double* __restrict__ gr = gW.row(0);
    for (std::size_t j = 0; j < xin.size(); ++j)
      gr[j] += detail::dot4(seed, xin[j]);
    grad.b[L][0] += seed.v;
    const Matrix& W = p.W[L];
    bar_x.resize(W.cols());
    const double* __restrict__ r = W.row(0);
    for (std::size_t j = 0; j < W.cols(); ++j) bar_x[j] = r[j] * seed;
  }

  for (std::size_t l = L; l >= 1; --l) {
    const JetVec& z = cache.z[l];
    const JetVec& f = cache.f[l];
    const JetVec& xin = l >= 2 ? cache.x[l - 1] : cache.x0;

    bar_z.resize(z.size());
    if (s.activation == Activation::tanh) {
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double T = f[i].v;
        const double Tp = 1.0 - T * T;
        const double Tpp = -2.0 * T * Tp;
        const double Tppp = -2.0 * Tp * Tp + 4.0 * T * T * Tp;
        const Jet2& u = z[i];
        const Jet2& y = bar_x[i];
        bar_z[i] = {Tp * y.v + Tpp * u.da * y.da + Tpp * u.db * y.db +
                        (Tppp * u.da * u.da + Tpp * u.d2) * y.d2,
                    Tp * y.da + 2.0 * Tpp * u.da * y.d2, Tp * y.db,
                    Tp * y.d2};
      }
    } else {
      bar_z = bar_x;
    }

    Matrix& gW = grad.W[l - 1];
    for (std::size_t i = 0; i < gW.rows(); ++i) {
      const Jet2& bz = bar_z[i];
      double* __restrict__ gr = gW.row(i);
      for (std::size_t j = 0; j < gW.cols(); ++j)
        gr[j] += detail::dot4(bz, xin[j]);
      grad.b[l - 1][i] += bz.v;
    }

    if (l == 1) break;

    const Matrix& W = p.W[l - 1];
    bar_next.assign(W.cols(), Jet2{});
    for (std::size_t i = 0; i < W.rows(); ++i) {
      const double* __restrict__ r = W.row(i);
      const Jet2& bz = bar_z[i];
      for (std::size_t j = 0; j < W.cols(); ++j) {
        const double w = r[j];
        bar_next[j].v += w * bz.v;
        bar_next[j].da += w * bz.da;
        bar_next[j].db += w * bz.db;
        bar_next[j].d2 += w * bz.d2;
      }
    }
    if (skip_applies(s, l)) {
      const int pe = skip_power(s);
      for (std::size_t j = 0; j < bar_next.size(); ++j) {
        const Jet2& u = xin[j];
        const Jet2& y = bar_x[j];
        if (pe == 1) {
          bar_next[j] = bar_next[j] + y;
        } else {
          const double pd = static_cast<double>(pe);
          const double c1 = pd * detail::ipow(u.v, pe - 1);
          const double c2 = pd * (pd - 1.0) * detail::ipow(u.v, pe - 2);
          const double c3 =
              pe >= 3 ? pd * (pd - 1.0) * (pd - 2.0) * detail::ipow(u.v, pe - 3)
                      : 0.0;
          bar_next[j].v += c1 * y.v + c2 * u.da * y.da + c2 * u.db * y.db +
                           (c3 * u.da * u.da + c2 * u.d2) * y.d2;
          bar_next[j].da += c1 * y.da + 2.0 * c2 * u.da * y.d2;
          bar_next[j].db += c1 * y.db;
          bar_next[j].d2 += c1 * y.d2;
        }
      }
    }
    std::swap(bar_x, bar_next);
  }
}

// ---------------------------------------------------------------------------
// Scalar reverse-mode tape over registered primitives.
// ---------------------------------------------------------------------------

/// Records a scalar program as nodes with at most two parents and their
/// local partials; replaying backward accumulates each adjoint exactly once.
class Tape {
 public:
  struct Var {
    Tape* tape = nullptr;
    std::int32_t idx = -1;
    double val = 0.0;
  };

  Var input(double v) { return push(v, -1, -1, 0.0, 0.0); }

  std::vector<Var> inputs(const Vec& values) {
    std::vector<Var> vars;
    vars.reserve(values.size());
    for (double v : values) vars.push_back(input(v));
    return vars;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  Var add(Var a, Var b) {
    check(a), check(b);
    return push(a.val + b.val, a.idx, b.idx, 1.0, 1.0);
  }
  Var sub(Var a, Var b) {
    check(a), check(b);
    return push(a.val - b.val, a.idx, b.idx, 1.0, -1.0);
  }
  Var mul(Var a, Var b) {
    check(a), check(b);
    return push(a.val * b.val, a.idx, b.idx, b.val, a.val);
  }
  Var div(Var a, Var b) {
    check(a), check(b);
    require(b.val != 0.0, "tape: division by zero");
    return push(a.val / b.val, a.idx, b.idx, 1.0 / b.val,
                -a.val / (b.val * b.val));
  }
  Var scale(Var a, double c) {
    check(a);
    return push(c * a.val, a.idx, -1, c, 0.0);
  }
  Var shift(Var a, double c) {
    check(a);
    return push(a.val + c, a.idx, -1, 1.0, 0.0);
  }
  Var tanh(Var a) {
    check(a);
    const double t = std::tanh(a.val);
    return push(t, a.idx, -1, 1.0 - t * t, 0.0);
  }
  Var pow_int(Var a, int p) {
    check(a);
    require(p >= 1, "tape: pow_int requires integer exponent >= 1");
    return push(detail::ipow(a.val, p), a.idx, -1,
                static_cast<double>(p) * detail::ipow(a.val, p - 1), 0.0);
  }
  Var square(Var a) { return pow_int(a, 2); }

  /// Reverse sweep from `output`; returns (value, adjoints of `wrt`).
  std::pair<double, Vec> grad(Var output, const std::vector<Var>& wrt) {
    check(output);
    Vec adj(nodes_.size(), 0.0);
    adj[static_cast<std::size_t>(output.idx)] = 1.0;
    for (std::size_t k = nodes_.size(); k-- > 0;) {
      const Node& n = nodes_[k];
      const double a = adj[k];
      if (a == 0.0) continue;
      if (n.p1 >= 0) adj[static_cast<std::size_t>(n.p1)] += n.d1 * a;
      if (n.p2 >= 0) adj[static_cast<std::size_t>(n.p2)] += n.d2 * a;
    }
    Vec g;
    g.reserve(wrt.size());
    for (const Var& v : wrt) {
      check(v);
      g.push_back(adj[static_cast<std::size_t>(v.idx)]);
    }
    return {output.val, std::move(g)};
  }

 private:
  struct Node {
    std::int32_t p1, p2;
    double d1, d2;
  };

  Var push(double val, std::int32_t p1, std::int32_t p2, double d1,
           double d2) {
    nodes_.push_back({p1, p2, d1, d2});
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1), val};
  }

  void check(const Var& v) const {
    require(v.tape == this && v.idx >= 0 &&
                static_cast<std::size_t>(v.idx) < nodes_.size(),
            "tape: variable does not belong to this tape");
  }

  std::vector<Node> nodes_;
};

inline Tape::Var operator+(Tape::Var a, Tape::Var b) { return a.tape->add(a, b); }
inline Tape::Var operator-(Tape::Var a, Tape::Var b) { return a.tape->sub(a, b); }
inline Tape::Var operator*(Tape::Var a, Tape::Var b) { return a.tape->mul(a, b); }
inline Tape::Var operator/(Tape::Var a, Tape::Var b) { return a.tape->div(a, b); }
inline Tape::Var operator*(double c, Tape::Var a) { return a.tape->scale(a, c); }
inline Tape::Var operator+(Tape::Var a, double c) { return a.tape->shift(a, c); }
inline Tape::Var operator-(Tape::Var a, double c) { return a.tape->shift(a, -c); }

/// A differentiable scalar program: builds the loss from parameter vars.
using TapeProgram =
    std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>;

/// Evaluates `program` at theta and returns (loss, gradient w.r.t. theta),
/// gradient in the same flat layout as theta.
inline std::pair<double, Vec> grad_wrt_params(const TapeProgram& program,
                                              const Vec& theta) {
  Tape tape;
  std::vector<Tape::Var> vars = tape.inputs(theta);
  Tape::Var loss = program(tape, vars);
  return tape.grad(loss, vars);
}

/// A program returning (value, analytic gradient) at a point.
using GradProgram = std::function<std::pair<double, Vec>(const Vec&)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
inline double finite_difference_check(const GradProgram& f, const Vec& point,
                                      double step = 1e-5) {
  require(step > 0.0, "finite_difference_check: step must be > 0");
  const Vec analytic = f(point).second;
  require(analytic.size() == point.size(),
          "finite_difference_check: gradient length != point length");
  double worst = 0.0;
  for (std::size_t k = 0; k < point.size(); ++k) {
    Vec plus = point, minus = point;
    plus[k] += step;
    minus[k] -= step;
    const double fd = (f(plus).first - f(minus).first) / (2.0 * step);
    const double disc =
        std::abs(analytic[k] - fd) / std::max(1.0, std::abs(analytic[k]));
    worst = std::max(worst, disc);
  }
  return worst;
}

}  // namespace presnet
