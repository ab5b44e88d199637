#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "presnet/linalg.hpp"
#include "presnet/rng.hpp"

namespace presnet {

enum class Arch { plain, resnet, skip_resnet, sqr_skip_resnet };

/// identity is a test hook; every shipped configuration uses tanh.
enum class Activation { tanh, identity };

struct ArchitectureSpec {
  Arch kind = Arch::plain;
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_dim = 1;
  int power = 2;  // exponent of the power skip; meaningful for sqr_skip_resnet
  Activation activation = Activation::tanh;
  bool skips_enabled = true;  // test hook: false reduces every kind to plain
};

inline std::string arch_name(Arch a) {
  switch (a) {
    case Arch::plain: return "plain";
    case Arch::resnet: return "resnet";
    case Arch::skip_resnet: return "skip-resnet";
    case Arch::sqr_skip_resnet: return "sqr-skip-resnet";
  }
  return "?";
}

inline Arch parse_arch(const std::string& s) {
  if (s == "plain") return Arch::plain;
  if (s == "resnet") return Arch::resnet;
  if (s == "skip-resnet") return Arch::skip_resnet;
  if (s == "sqr-skip-resnet") return Arch::sqr_skip_resnet;
  fail("unknown architecture: " + s);
}

/// Width of layer l; l=0 is the input, l=L+1 the output.
inline std::size_t layer_width(const ArchitectureSpec& s, std::size_t l) {
  if (l == 0) return s.input_dim;
  if (l <= s.hidden_widths.size()) return s.hidden_widths[l - 1];
  return s.output_dim;
}

inline void validate_spec(const ArchitectureSpec& s) {
  require(s.input_dim >= 1 && s.output_dim >= 1,
          "spec: input and output dims must be >= 1");
  // No hidden layers is permitted: the network degenerates to one affine map.
  for (std::size_t w : s.hidden_widths)
    require(w >= 1, "spec: hidden widths must be >= 1");
  require(s.power >= 1, "spec: power must be an integer >= 1");
}

/// Exponent used by the skip path of hidden layer l.
inline int skip_power(const ArchitectureSpec& s) {
  return s.kind == Arch::sqr_skip_resnet ? s.power : 1;
}

/// True when hidden layer l (1-based) adds its residual/power term.
/// Additions are suppressed where the operand widths differ, which covers
/// the first hidden layer whenever input_dim != hidden width.
inline bool skip_applies(const ArchitectureSpec& s, std::size_t l) {
  if (!s.skips_enabled) return false;
  if (l < 1 || l > s.hidden_widths.size()) return false;
  if (layer_width(s, l) != layer_width(s, l - 1)) return false;
  switch (s.kind) {
    case Arch::plain: return false;
    case Arch::resnet: return true;
    case Arch::skip_resnet:
    case Arch::sqr_skip_resnet: return l % 2 == 1;
  }
  return false;
}

struct SkipLogEntry {
  std::size_t layer;
  bool applied;
  std::string note;
};

/// Per-layer record of where residual/power additions were applied.
inline std::vector<SkipLogEntry> skip_layer_log(const ArchitectureSpec& s) {
  std::vector<SkipLogEntry> log;
  for (std::size_t l = 1; l <= s.hidden_widths.size(); ++l) {
    SkipLogEntry e{l, skip_applies(s, l), ""};
    if (!e.applied) {
      if (s.kind == Arch::plain || !s.skips_enabled)
        e.note = "no skip path";
      else if (layer_width(s, l) != layer_width(s, l - 1))
        e.note = "width mismatch, layer runs plain";
      else
        e.note = "even layer";
    }
    log.push_back(e);
  }
  return log;
}

/// Weights and biases per layer; W[l-1], b[l-1] belong to layer l in 1..L+1.
struct ParameterSet {
  std::vector<Matrix> W;
  std::vector<Vec> b;

  std::size_t layers() const noexcept { return W.size(); }

  bool operator==(const ParameterSet& o) const {
    return W == o.W && b == o.b;
  }
};

inline std::size_t parameter_count(const ArchitectureSpec& s) {
  validate_spec(s);
  const std::size_t L = s.hidden_widths.size();
  std::size_t total = 0;
  for (std::size_t l = 1; l <= L + 1; ++l)
    total += layer_width(s, l) * (layer_width(s, l - 1) + 1);
  return total;
}

inline void validate_params(const ArchitectureSpec& s,
                            const ParameterSet& p) {
  const std::size_t L = s.hidden_widths.size();
  require(p.W.size() == L + 1 && p.b.size() == L + 1,
          "params: layer count mismatch");
  for (std::size_t l = 1; l <= L + 1; ++l) {
    require(p.W[l - 1].rows() == layer_width(s, l) &&
                p.W[l - 1].cols() == layer_width(s, l - 1),
            "params: W shape mismatch at layer " + std::to_string(l));
    require(p.b[l - 1].size() == layer_width(s, l),
            "params: b length mismatch at layer " + std::to_string(l));
  }
}

/// Glorot-uniform weights, zero biases; layer order fixed so one seed
/// determines every entry.
inline ParameterSet init_params(const ArchitectureSpec& s, RngStream& rng) {
  validate_spec(s);
  ParameterSet p;
  const std::size_t L = s.hidden_widths.size();
  for (std::size_t l = 1; l <= L + 1; ++l) {
    p.W.push_back(
        glorot_uniform_init(layer_width(s, l - 1), layer_width(s, l), rng));
    p.b.emplace_back(layer_width(s, l), 0.0);
  }
  return p;
}

/// All-zero parameters of the right shapes.
inline ParameterSet zero_params(const ArchitectureSpec& s) {
  validate_spec(s);
  ParameterSet p;
  const std::size_t L = s.hidden_widths.size();
  for (std::size_t l = 1; l <= L + 1; ++l) {
    p.W.emplace_back(layer_width(s, l), layer_width(s, l - 1), 0.0);
    p.b.emplace_back(layer_width(s, l), 0.0);
  }
  return p;
}

/// Flat layout: for each layer in order, W row-major then b.
struct ParamLayout {
  std::vector<std::size_t> w_off, b_off, rows, cols;
  std::size_t total = 0;

  static ParamLayout make(const ArchitectureSpec& s) {
    ParamLayout lay;
    const std::size_t L = s.hidden_widths.size();
    std::size_t off = 0;
    for (std::size_t l = 1; l <= L + 1; ++l) {
      const std::size_t r = layer_width(s, l), c = layer_width(s, l - 1);
      lay.w_off.push_back(off);
      lay.rows.push_back(r);
      lay.cols.push_back(c);
      off += r * c;
      lay.b_off.push_back(off);
      off += r;
    }
    lay.total = off;
    return lay;
  }
};

inline void flatten_into(const ParameterSet& p, Vec& out) {
  std::size_t total = 0;
  for (std::size_t l = 0; l < p.W.size(); ++l)
    total += p.W[l].size() + p.b[l].size();
  out.resize(total);
  std::size_t off = 0;
  for (std::size_t l = 0; l < p.W.size(); ++l) {
    for (std::size_t k = 0; k < p.W[l].size(); ++k)
      out[off++] = p.W[l].data()[k];
    for (std::size_t k = 0; k < p.b[l].size(); ++k) out[off++] = p.b[l][k];
  }
}

inline Vec flatten(const ParameterSet& p) {
  Vec out;
  flatten_into(p, out);
  return out;
}

/// Zeroes p in place, shaping it for s first if needed.
inline void zero_params_into(const ArchitectureSpec& s, ParameterSet& p) {
  const std::size_t L = s.hidden_widths.size();
  if (p.W.size() != L + 1) {
    p = zero_params(s);
    return;
  }
  for (std::size_t l = 0; l < p.W.size(); ++l) {
    std::fill(p.W[l].data(), p.W[l].data() + p.W[l].size(), 0.0);
    std::fill(p.b[l].begin(), p.b[l].end(), 0.0);
  }
}

inline void unflatten_into(const Vec& v, const ArchitectureSpec& s,
                           ParameterSet& p) {
  require(v.size() == parameter_count(s),
          "unflatten: length " + std::to_string(v.size()) +
              " does not match parameter count " +
              std::to_string(parameter_count(s)));
  const std::size_t L = s.hidden_widths.size();
  if (p.W.size() != L + 1) p = zero_params(s);
  std::size_t off = 0;
  for (std::size_t l = 1; l <= L + 1; ++l) {
    Matrix& W = p.W[l - 1];
    Vec& b = p.b[l - 1];
    for (std::size_t k = 0; k < W.size(); ++k) W.data()[k] = v[off++];
    for (std::size_t k = 0; k < b.size(); ++k) b[k] = v[off++];
  }
}

inline ParameterSet unflatten(const Vec& v, const ArchitectureSpec& s) {
  ParameterSet p = zero_params(s);
  unflatten_into(v, s, p);
  return p;
}

/// Content hash over shapes and every entry; used to detect stale caches.
inline std::uint64_t content_hash(const ParameterSet& p) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t x) {
    h ^= x;
    h *= 0x100000001B3ull;
  };
  mix(p.W.size());
  for (std::size_t l = 0; l < p.W.size(); ++l) {
    mix(p.W[l].rows());
    mix(p.W[l].cols());
    const double* w = p.W[l].data();
    for (std::size_t k = 0; k < p.W[l].size(); ++k)
      mix(std::bit_cast<std::uint64_t>(w[k]));
    for (double x : p.b[l]) mix(std::bit_cast<std::uint64_t>(x));
  }
  return h;
}

/// Activations and layer outputs captured by forward for reuse in backward.
/// z[l] is the pre-activation, f[l] = act(z[l]) the plain branch,
/// x[l] the post-combination output; indices 1..L, slot 0 unused.
struct ForwardCache {
  Vec x0;
  std::vector<Vec> z, f, x;
  Vec out;
  std::uint64_t params_hash = 0;
};

namespace detail {

inline void affine_into(const Matrix& W, const Vec& b, const Vec& in,
                        Vec& out) {
  out.resize(W.rows());
  for (std::size_t i = 0; i < W.rows(); ++i) {
    const double* __restrict__ r = W.row(i);
    double acc = b[i];
    for (std::size_t j = 0; j < W.cols(); ++j) acc += r[j] * in[j];
    out[i] = acc;
  }
}

inline double ipow(double x, int p) noexcept {
  double r = 1.0;
  for (int k = 0; k < p; ++k) r *= x;
  return r;
}

}  // namespace detail

/// Forward pass reusing the cache's buffers; params_hash must be the
/// caller-computed content_hash of params.
inline void forward_cached(const ArchitectureSpec& s, const ParameterSet& p,
                           const Vec& input, std::uint64_t params_hash,
                           ForwardCache& cache) {
  const std::size_t L = s.hidden_widths.size();
  require(input.size() == s.input_dim, "forward: input length != input_dim");
  cache.x0 = input;
  cache.z.resize(L + 1);
  cache.f.resize(L + 1);
  cache.x.resize(L + 1);
  const Vec* prev = &cache.x0;
  for (std::size_t l = 1; l <= L; ++l) {
    Vec& z = cache.z[l];
    Vec& f = cache.f[l];
    Vec& x = cache.x[l];
    detail::affine_into(p.W[l - 1], p.b[l - 1], *prev, z);
    f.resize(z.size());
    if (s.activation == Activation::tanh) {
      for (std::size_t i = 0; i < z.size(); ++i) f[i] = std::tanh(z[i]);
    } else {
      f = z;
    }
    x = f;
    if (skip_applies(s, l)) {
      const int p_eff = skip_power(s);
      const Vec& pr = *prev;
      if (p_eff == 1) {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += pr[i];
      } else {
        for (std::size_t i = 0; i < x.size(); ++i)
          x[i] += detail::ipow(pr[i], p_eff);
      }
    }
    prev = &x;
  }
  detail::affine_into(p.W[L], p.b[L], *prev, cache.out);
  cache.params_hash = params_hash;
}

/// Evaluate the network; returns the output and the cache backward needs.
inline std::pair<Vec, ForwardCache> forward(const ArchitectureSpec& s,
                                            const ParameterSet& p,
                                            const Vec& input) {
  validate_params(s, p);
  ForwardCache cache;
  forward_cached(s, p, input, content_hash(p), cache);
  return {cache.out, std::move(cache)};
}

namespace detail {

/// Scratch buffers for backward so batch loops allocate once.
struct BackwardScratch {
  Vec delta_x, delta_z, delta_next;
};

}  // namespace detail

/// Reverse sweep accumulating into grad (same shapes as params) and,
/// optionally, the gradient with respect to the input.
/// The cache must come from forward on the same parameter values.
inline void backward_accumulate(const ArchitectureSpec& s,
                                const ParameterSet& p,
                                const ForwardCache& cache,
                                std::uint64_t params_hash,
                                const Vec& upstream, ParameterSet& grad,
                                Vec* grad_input,
                                detail::BackwardScratch& scratch) {
  const std::size_t L = s.hidden_widths.size();
  require(upstream.size() == s.output_dim,
          "backward: upstream length != output_dim");
  require(cache.params_hash == params_hash,
          "backward: cache is stale for these parameters");

  Vec& delta_x = scratch.delta_x;
  Vec& delta_z = scratch.delta_z;
  Vec& delta_next = scratch.delta_next;

  // Output layer: affine only.
  {
    const Vec& xin = L >= 1 ? cache.x[L] : cache.x0;
    Matrix& gW = grad.W[L];
    for (std::size_t i = 0; i < s.output_dim; ++i) {
      const double u = upstream[i];
      double* __restrict__ gr = gW.row(i);
      for (std::size_t j = 0; j < xin.size(); ++j) gr[j] += u * xin[j];
      grad.b[L][i] += u;
    }
    delta_x.assign(xin.size(), 0.0);
    const Matrix& W = p.W[L];
    for (std::size_t i = 0; i < W.rows(); ++i) {
      const double* __restrict__ r = W.row(i);
      const double u = upstream[i];
      for (std::size_t j = 0; j < W.cols(); ++j) delta_x[j] += r[j] * u;
    }
  }

  for (std::size_t l = L; l >= 1; --l) {
    const Vec& f = cache.f[l];
    const Vec& xin = l >= 2 ? cache.x[l - 1] : cache.x0;
    delta_z.resize(f.size());
    if (s.activation == Activation::tanh) {
      for (std::size_t i = 0; i < f.size(); ++i)
        delta_z[i] = (1.0 - f[i] * f[i]) * delta_x[i];
    } else {
      delta_z = delta_x;
    }
    Matrix& gW = grad.W[l - 1];
    for (std::size_t i = 0; i < gW.rows(); ++i) {
      const double dz = delta_z[i];
      double* __restrict__ gr = gW.row(i);
      for (std::size_t j = 0; j < gW.cols(); ++j) gr[j] += dz * xin[j];
      grad.b[l - 1][i] += dz;
    }
    if (l == 1 && grad_input == nullptr) break;
    const Matrix& W = p.W[l - 1];
    delta_next.assign(W.cols(), 0.0);
    for (std::size_t i = 0; i < W.rows(); ++i) {
      const double* __restrict__ r = W.row(i);
      const double dz = delta_z[i];
      for (std::size_t j = 0; j < W.cols(); ++j) delta_next[j] += r[j] * dz;
    }
    if (skip_applies(s, l)) {
      const int p_eff = skip_power(s);
      if (p_eff == 1) {
        for (std::size_t j = 0; j < delta_next.size(); ++j)
          delta_next[j] += delta_x[j];
      } else {
        for (std::size_t j = 0; j < delta_next.size(); ++j)
          delta_next[j] += static_cast<double>(p_eff) *
                           detail::ipow(xin[j], p_eff - 1) * delta_x[j];
      }
    }
    std::swap(delta_x, delta_next);
  }
  if (grad_input != nullptr) *grad_input = delta_x;
}

/// Hand-coded backprop. Returns (parameter gradients, input gradient) for
/// a scalar chain seeded with `upstream` at the output.
inline std::pair<ParameterSet, Vec> backward(const ArchitectureSpec& s,
                                             const ParameterSet& p,
                                             const ForwardCache& cache,
                                             const Vec& upstream) {
  validate_params(s, p);
  ParameterSet grad = zero_params(s);
  Vec grad_input;
  detail::BackwardScratch scratch;
  backward_accumulate(s, p, cache, content_hash(p), upstream, grad,
                      &grad_input, scratch);
  return {std::move(grad), std::move(grad_input)};
}

namespace detail {

inline Vec unroll_affine(const Matrix& W, const Vec& b, const Vec& in) {
  Vec out(W.rows());
  for (std::size_t i = 0; i < W.rows(); ++i) {
    double acc = b[i];
    for (std::size_t j = 0; j < W.cols(); ++j) acc += W(i, j) * in[j];
    out[i] = acc;
  }
  return out;
}

inline Vec unroll_f(const ParameterSet& p, std::size_t l, const Vec& in) {
  Vec z = unroll_affine(p.W[l - 1], p.b[l - 1], in);
  for (double& v : z) v = std::tanh(v);
  return z;
}

inline Vec unroll_add(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vec unroll_pow(const Vec& a, int p) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = ipow(a[i], p);
  return out;
}

}  // namespace detail

/// Literal transcription of the unrolled 3-hidden-layer expressions, with
/// every subexpression recomputed where it appears. Requires exactly three
/// hidden layers whose widths equal the input dimension, tanh activation.
inline Vec unroll3(Arch kind, const ParameterSet& p, const Vec& x0,
                   int power = 2) {
  using namespace detail;
  require(p.W.size() == 4, "unroll3: expected exactly 3 hidden layers");
  const std::size_t d = x0.size();
  for (std::size_t l = 0; l < 3; ++l)
    require(p.W[l].rows() == d && p.W[l].cols() == d,
            "unroll3: hidden widths must equal input dim");
  Vec x3;
  switch (kind) {
    case Arch::plain:
      x3 = unroll_f(p, 3, unroll_f(p, 2, unroll_f(p, 1, x0)));
      break;
    case Arch::resnet:
      x3 = unroll_add(
          unroll_f(p, 3,
                   unroll_add(unroll_f(p, 2, unroll_add(unroll_f(p, 1, x0), x0)),
                              unroll_add(unroll_f(p, 1, x0), x0))),
          unroll_add(unroll_f(p, 2, unroll_add(unroll_f(p, 1, x0), x0)),
                     unroll_add(unroll_f(p, 1, x0), x0)));
      break;
    case Arch::skip_resnet:
      x3 = unroll_add(
          unroll_f(p, 3, unroll_f(p, 2, unroll_add(unroll_f(p, 1, x0), x0))),
          unroll_f(p, 2, unroll_add(unroll_f(p, 1, x0), x0)));
      break;
    case Arch::sqr_skip_resnet:
      x3 = unroll_add(
          unroll_f(p, 3,
                   unroll_f(p, 2,
                            unroll_add(unroll_f(p, 1, x0),
                                       unroll_pow(x0, power)))),
          unroll_pow(
              unroll_f(p, 2, unroll_add(unroll_f(p, 1, x0),
                                        unroll_pow(x0, power))),
              power));
      break;
  }
  return unroll_affine(p.W[3], p.b[3], x3);
}

// ---------------------------------------------------------------------------
// Checkpoint file: versioned text header plus one hexfloat per parameter.
// Hexfloat round-trips are exact, so save/load reproduces bit-identical
// parameters.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const std::string& path,
                            const ArchitectureSpec& s,
                            const ParameterSet& p) {
  validate_params(s, p);
  std::ofstream out(path);
  require(out.good(), "checkpoint: cannot open " + path + " for writing");
  out << "presnet-checkpoint 1\n";
  out << "kind " << arch_name(s.kind) << "\n";
  out << "input_dim " << s.input_dim << "\n";
  out << "hidden";
  for (std::size_t w : s.hidden_widths) out << ' ' << w;
  out << "\n";
  out << "output_dim " << s.output_dim << "\n";
  out << "power " << s.power << "\n";
  out << "activation "
      << (s.activation == Activation::tanh ? "tanh" : "identity") << "\n";
  out << "skips " << (s.skips_enabled ? "on" : "off") << "\n";
  const Vec flat = flatten(p);
  out << "params " << flat.size() << "\n";
  out << std::hexfloat;
  for (double v : flat) out << v << "\n";
  require(out.good(), "checkpoint: write failed for " + path);
}

inline std::pair<ArchitectureSpec, ParameterSet> load_checkpoint(
    const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "checkpoint: cannot open " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  require(magic == "presnet-checkpoint" && version == 1,
          "checkpoint: unrecognized header in " + path);
  ArchitectureSpec s;
  std::size_t n_params = 0;
  std::string key;
  while (in >> key) {
    if (key == "kind") {
      std::string v;
      in >> v;
      s.kind = parse_arch(v);
    } else if (key == "input_dim") {
      in >> s.input_dim;
    } else if (key == "hidden") {
      s.hidden_widths.clear();
      std::string rest;
      std::getline(in, rest);
      std::istringstream ws(rest);
      std::size_t w;
      while (ws >> w) s.hidden_widths.push_back(w);
    } else if (key == "output_dim") {
      in >> s.output_dim;
    } else if (key == "power") {
      in >> s.power;
    } else if (key == "activation") {
      std::string v;
      in >> v;
      s.activation = v == "tanh" ? Activation::tanh : Activation::identity;
    } else if (key == "skips") {
      std::string v;
      in >> v;
      s.skips_enabled = v == "on";
    } else if (key == "params") {
      in >> n_params;
      break;
    } else {
      fail("checkpoint: unknown key '" + key + "' in " + path);
    }
  }
  validate_spec(s);
  require(n_params == parameter_count(s),
          "checkpoint: parameter count mismatch in " + path);
  Vec flat(n_params);
  for (std::size_t k = 0; k < n_params; ++k) {
    std::string tok;
    require(static_cast<bool>(in >> tok),
            "checkpoint: truncated parameter list in " + path);
    flat[k] = std::strtod(tok.c_str(), nullptr);
  }
  return {s, unflatten(flat, s)};
}

}  // namespace presnet
