#pragma once

// Closed-form benchmark functions, sampling, dataset loading, splitting and
// normalization.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "presnet/linalg.hpp"
#include "presnet/rng.hpp"

namespace presnet {

// ---------------------------------------------------------------------------
// Benchmark functions

/// Franke's function: four Gaussian bumps on [0,1]^2.
inline double f1(double x1, double x2) noexcept {
  const double t1 = 0.75 * std::exp(-0.25 * ((9.0 * x1 - 2.0) * (9.0 * x1 - 2.0) +
                                             (9.0 * x2 - 2.0) * (9.0 * x2 - 2.0)));
  const double t2 = 0.75 * std::exp(-(9.0 * x1 + 1.0) * (9.0 * x1 + 1.0) / 49.0 -
                                    (9.0 * x2 + 1.0) * (9.0 * x2 + 1.0) / 10.0);
  const double t3 = 0.5 * std::exp(-0.25 * ((9.0 * x1 - 7.0) * (9.0 * x1 - 7.0) +
                                            (9.0 * x2 - 3.0) * (9.0 * x2 - 3.0)));
  const double t4 = 0.2 * std::exp(-(9.0 * x1 - 4.0) * (9.0 * x1 - 4.0) -
                                   (9.0 * x2 - 7.0) * (9.0 * x2 - 7.0));
  return t1 + t2 + t3 - t4;
}

/// Inverse-square bump with a singularity at (1.01, 1.01), just outside the
/// unit square.
inline double f2(double x1, double x2) noexcept {
  const double d1 = x1 - 1.01, d2 = x2 - 1.01;
  return 0.0025 / (d1 * d1 + d2 * d2);
}

/// Piecewise-linear pyramid, non-smooth along the lines x = 1/2 and y = 1/2.
inline double f3(double x1, double x2) noexcept {
  return (64.0 - 81.0 * (std::abs(x1 - 0.5) + std::abs(x2 - 0.5))) / 9.0 - 0.5;
}

/// Radially symmetric Gaussian bump about (1/2, 1/2, 1/2) in 3-D.
inline double f4(double x1, double x2, double x3) noexcept {
  const double d1 = x1 - 0.5, d2 = x2 - 0.5, d3 = x3 - 0.5;
  return std::exp(-81.0 / 16.0 * (d1 * d1 + d2 * d2 + d3 * d3)) / 3.0;
}

// ---------------------------------------------------------------------------
// Domains and sampling

/// Axis-aligned box; lo < hi in every dimension.
struct Domain {
  Vec lo, hi;

  Domain() = default;
  Domain(Vec lower, Vec upper) : lo(std::move(lower)), hi(std::move(upper)) {
    require(lo.size() == hi.size() && !lo.empty(),
            "domain: bound vectors must be nonempty and of equal size");
    for (std::size_t i = 0; i < lo.size(); ++i)
      require(lo[i] < hi[i], "domain: lo must be strictly below hi");
  }

  static Domain unit_box(std::size_t dim) {
    return Domain(Vec(dim, 0.0), Vec(dim, 1.0));
  }

  std::size_t dim() const noexcept { return lo.size(); }
};

/// n i.i.d. uniform draws from the box; deterministic per rng state.
/// Coordinates are drawn dimension-by-dimension within each point.
inline std::vector<Vec> sample_uniform(const Domain& dom, std::size_t n,
                                       RngStream& rng) {
  require(n >= 1, "sample_uniform: n must be >= 1");
  std::vector<Vec> pts(n, Vec(dom.dim()));
  for (auto& p : pts)
    for (std::size_t j = 0; j < dom.dim(); ++j)
      p[j] = rng.uniform(dom.lo[j], dom.hi[j]);
  return pts;
}

/// Tensor-product lattice with both endpoints included in every dimension.
/// counts[j] >= 2 points along dimension j; the last dimension varies
/// fastest (odometer order).
inline std::vector<Vec> grid(const Domain& dom,
                             const std::vector<std::size_t>& counts) {
  require(counts.size() == dom.dim(), "grid: one count per dimension");
  std::size_t total = 1;
  for (std::size_t c : counts) {
    require(c >= 2, "grid: each dimension needs at least 2 points");
    total *= c;
  }
  std::vector<Vec> pts(total, Vec(dom.dim()));
  std::vector<std::size_t> idx(dom.dim(), 0);
  for (std::size_t k = 0; k < total; ++k) {
    for (std::size_t j = 0; j < dom.dim(); ++j) {
      const double frac =
          static_cast<double>(idx[j]) / static_cast<double>(counts[j] - 1);
      pts[k][j] = dom.lo[j] + frac * (dom.hi[j] - dom.lo[j]);
    }
    for (std::size_t j = dom.dim(); j-- > 0;) {
      if (++idx[j] < counts[j]) break;
      idx[j] = 0;
    }
  }
  return pts;
}

/// Latin hypercube sample: n points, each dimension stratified into n equal
/// slices with exactly one point per slice, strata independently permuted.
inline std::vector<Vec> latin_hypercube(const Domain& dom, std::size_t n,
                                        RngStream& rng) {
  require(n >= 1, "latin_hypercube: n must be >= 1");
  std::vector<Vec> pts(n, Vec(dom.dim()));
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < dom.dim(); ++j) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    for (std::size_t i = 0; i < n; ++i) {
      const double frac =
          (static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(n);
      pts[i][j] = dom.lo[j] + frac * (dom.hi[j] - dom.lo[j]);
    }
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Datasets

/// One-dimensional affine map y = a*x + b with exact inverse.
struct AffineMap {
  double a = 1.0;
  double b = 0.0;

  double apply(double x) const noexcept { return a * x + b; }
  double invert(double y) const noexcept { return (y - b) / a; }
  bool is_identity() const noexcept { return a == 1.0 && b == 0.0; }
};

/// Maps from raw to stored values; identity when no normalization applied.
struct NormalizationMeta {
  std::vector<AffineMap> input;  // one per input dimension
  AffineMap target;

  static NormalizationMeta identity(std::size_t dim) {
    NormalizationMeta m;
    m.input.assign(dim, AffineMap{});
    return m;
  }

  bool input_is_identity() const noexcept {
    for (const auto& m : input)
      if (!m.is_identity()) return false;
    return true;
  }
};

enum class SplitTag { train, validation };

/// Immutable pairwise sample set: inputs (one point per row) and scalar
/// targets, with the normalization maps that produced the stored values.
struct Dataset {
  Matrix inputs;  // n x d
  Vec targets;    // n
  NormalizationMeta norm;
  SplitTag tag = SplitTag::train;

  std::size_t n() const noexcept { return inputs.rows(); }
  std::size_t dim() const noexcept { return inputs.cols(); }

  void copy_input(std::size_t i, Vec& out) const {
    out.resize(dim());
    for (std::size_t j = 0; j < dim(); ++j) out[j] = inputs(i, j);
  }

  Vec input(std::size_t i) const {
    Vec out;
    copy_input(i, out);
    return out;
  }
};

/// Builds a dataset from points + targets with identity normalization.
inline Dataset make_dataset(const std::vector<Vec>& points, Vec targets,
                            SplitTag tag = SplitTag::train) {
  require(!points.empty(), "dataset: needs at least one point");
  require(points.size() == targets.size(),
          "dataset: points and targets must have equal length");
  const std::size_t d = points.front().size();
  Dataset ds;
  ds.inputs = Matrix(points.size(), d);
  for (std::size_t i = 0; i < points.size(); ++i) {
    require(points[i].size() == d, "dataset: inconsistent point dimension");
    for (std::size_t j = 0; j < d; ++j) ds.inputs(i, j) = points[i][j];
  }
  ds.targets = std::move(targets);
  ds.norm = NormalizationMeta::identity(d);
  ds.tag = tag;
  return ds;
}

// ---------------------------------------------------------------------------
// Loaders

namespace detail {

/// Strict double parse of an entire token; sets ok=false on any leftover.
inline double parse_double(const std::string& tok, bool& ok) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  ok = end != begin && end && *end == '\0' && !tok.empty();
  return v;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] inline void line_fail(const std::string& path, std::size_t line,
                                   const std::string& what) {
  fail(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace detail

/// Reads a CSV with header "x1,x2,y" into a dataset. Every row must hold
/// three finite numbers; failures name the offending line (1-based,
/// counting the header).
inline Dataset load_elevation_grid(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  std::string line;
  std::size_t line_no = 1;
  require(static_cast<bool>(std::getline(in, line)),
          path + ": empty file, expected header x1,x2,y");
  {
    std::string h = detail::trim(line);
    h.erase(std::remove(h.begin(), h.end(), ' '), h.end());
    if (h != "x1,x2,y")
      detail::line_fail(path, line_no, "expected header x1,x2,y");
  }
  std::vector<Vec> pts;
  Vec targets;
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
      if (!ok)
        detail::line_fail(path, line_no, "not a number: '" + tok + "'");
      if (!std::isfinite(vals[k]))
        detail::line_fail(path, line_no, "non-finite value rejected");
    }
    if (std::getline(ss, tok, ','))
      detail::line_fail(path, line_no, "expected exactly 3 values");
    pts.push_back(Vec{vals[0], vals[1]});
    targets.push_back(vals[2]);
  }
  require(!pts.empty(), path + ": no data rows");
  return make_dataset(pts, std::move(targets));
}

/// Reads an x y z point cloud: one point per line, whitespace- or
/// comma-separated, '#' lines are comments, blank lines skipped. All
/// coordinates are multiplied by `scale`.
inline std::vector<Vec> load_point_cloud(const std::string& path,
                                         double scale = 10.0) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  std::vector<Vec> pts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    for (auto& c : t)
      if (c == ',' || c == '\t') c = ' ';
    std::istringstream ss(t);
    Vec p(3);
    std::string tok;
    for (int k = 0; k < 3; ++k) {
      if (!(ss >> tok))
        detail::line_fail(path, line_no, "expected 3 coordinates");
      bool ok = false;
      p[k] = detail::parse_double(tok, ok);
      if (!ok)
        detail::line_fail(path, line_no, "not a number: '" + tok + "'");
      if (!std::isfinite(p[k]))
        detail::line_fail(path, line_no, "non-finite value rejected");
      p[k] *= scale;
    }
    if (ss >> tok)
      detail::line_fail(path, line_no, "expected exactly 3 coordinates");
    pts.push_back(std::move(p));
  }
  require(!pts.empty(), path + ": no points");
  return pts;
}

// ---------------------------------------------------------------------------
// Splitting and normalization

/// Seed-deterministic disjoint split into (train, validation) of sizes
/// (n_train, n - n_train).
inline std::pair<Dataset, Dataset> split(const Dataset& ds, std::size_t n_train,
                                         RngStream& rng) {
  require(n_train >= 1 && n_train < ds.n(),
          "split: need 1 <= n_train < dataset size");
  std::vector<std::size_t> order(ds.n());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  auto take = [&](std::size_t begin, std::size_t end, SplitTag tag) {
    Dataset out;
    out.inputs = Matrix(end - begin, ds.dim());
    out.targets.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t src = order[i];
      for (std::size_t j = 0; j < ds.dim(); ++j)
        out.inputs(i - begin, j) = ds.inputs(src, j);
      out.targets[i - begin] = ds.targets[src];
    }
    out.norm = ds.norm;
    out.tag = tag;
    return out;
  };
  return {take(0, n_train, SplitTag::train),
          take(n_train, ds.n(), SplitTag::validation)};
}

enum class NormScheme { none, input_unit_box, target_zscore };

inline const char* scheme_name(NormScheme s) noexcept {
  switch (s) {
    case NormScheme::none: return "none";
    case NormScheme::input_unit_box: return "input_unit_box";
    case NormScheme::target_zscore: return "target_zscore";
  }
  return "?";
}

inline NormScheme parse_scheme(const std::string& s) {
  if (s == "none") return NormScheme::none;
  if (s == "input_unit_box") return NormScheme::input_unit_box;
  if (s == "target_zscore") return NormScheme::target_zscore;
  fail("unknown normalization scheme: " + s);
}

/// Applies the given maps to a raw dataset (used to carry train-fitted maps
/// onto validation data). The dataset's affected part must still be raw.
inline Dataset apply_normalization(const Dataset& ds,
                                   const NormalizationMeta& meta) {
  require(meta.input.size() == ds.dim(),
          "normalize: metadata dimension mismatch");
  Dataset out = ds;
  if (!meta.input_is_identity()) {
    require(ds.norm.input_is_identity(),
            "normalize: inputs already normalized");
    for (std::size_t i = 0; i < out.n(); ++i)
      for (std::size_t j = 0; j < out.dim(); ++j)
        out.inputs(i, j) = meta.input[j].apply(out.inputs(i, j));
    out.norm.input = meta.input;
  }
  if (!meta.target.is_identity()) {
    require(ds.norm.target.is_identity(),
            "normalize: targets already normalized");
    for (auto& y : out.targets) y = meta.target.apply(y);
    out.norm.target = meta.target;
  }
  return out;
}

/// Fits the scheme's maps on this dataset's statistics and applies them.
/// input_unit_box sends per-dimension [min, max] to [0, 1]; target_zscore
/// sends targets to mean 0, standard deviation 1. Constant columns have no
/// invertible map and are rejected.
inline Dataset normalize(const Dataset& ds, NormScheme scheme) {
  NormalizationMeta meta = NormalizationMeta::identity(ds.dim());
  switch (scheme) {
    case NormScheme::none:
      return ds;
    case NormScheme::input_unit_box: {
      require(ds.norm.input_is_identity(),
              "normalize: inputs already normalized");
      for (std::size_t j = 0; j < ds.dim(); ++j) {
        double lo = ds.inputs(0, j), hi = lo;
        for (std::size_t i = 1; i < ds.n(); ++i) {
          lo = std::min(lo, ds.inputs(i, j));
          hi = std::max(hi, ds.inputs(i, j));
        }
        require(hi > lo, "normalize: constant input column " +
                             std::to_string(j) + " cannot be mapped to [0,1]");
        meta.input[j] = AffineMap{1.0 / (hi - lo), -lo / (hi - lo)};
      }
      break;
    }
    case NormScheme::target_zscore: {
      require(ds.norm.target.is_identity(),
              "normalize: targets already normalized");
      double mean = 0.0;
      for (double y : ds.targets) mean += y;
      mean /= static_cast<double>(ds.n());
      double var = 0.0;
      for (double y : ds.targets) var += (y - mean) * (y - mean);
      var /= static_cast<double>(ds.n());
      require(var > 0.0, "normalize: constant targets have no z-score map");
      const double sd = std::sqrt(var);
      meta.target = AffineMap{1.0 / sd, -mean / sd};
      break;
    }
  }
  return apply_normalization(ds, meta);
}

// ---------------------------------------------------------------------------
// Synthetic stand-in datasets

/// Deterministic synthetic terrain: an 87x61 lattice with 10 m spacing
/// (5307 samples) shaped like a volcanic cone with a crater dip, heights
/// roughly 90-190 m.
inline Dataset make_synthetic_elevation_grid() {
  const std::size_t nx = 87, ny = 61;
  std::vector<Vec> pts;
  Vec targets;
  pts.reserve(nx * ny);
  targets.reserve(nx * ny);
  const double cx = 430.0, cy = 300.0;
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      const double x = 10.0 * static_cast<double>(i);
      const double y = 10.0 * static_cast<double>(j);
      const double dx = x - cx, dy = y - cy;
      const double r2 = dx * dx + dy * dy;
      const double cone = 95.0 * std::exp(-r2 / (2.0 * 160.0 * 160.0));
      const double crater = 35.0 * std::exp(-r2 / (2.0 * 55.0 * 55.0));
      const double ripple =
          4.0 * std::sin(x / 95.0) * std::cos(y / 70.0);
      targets.push_back(94.0 + cone - crater + ripple);
      pts.push_back(Vec{x, y});
    }
  return make_dataset(pts, std::move(targets));
}

/// Deterministic synthetic closed surface: n points on a smoothly deformed
/// sphere of radius ~0.35 centered at (0.5, 0.5, 0.5), generated by a
/// Fibonacci-lattice sweep. Intended to be written at 1/10 scale and read
/// back through load_point_cloud's default x10 scaling.
inline std::vector<Vec> make_synthetic_surface_points(std::size_t n = 8171) {
  require(n >= 1, "surface points: n must be >= 1");
  std::vector<Vec> pts(n, Vec(3));
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  const double pi = std::acos(-1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double u =
        (static_cast<double>(i) + 0.5) / static_cast<double>(n);  // (0,1)
    const double z = 1.0 - 2.0 * u;                               // cos(theta)
    const double st = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = 2.0 * pi * std::fmod(static_cast<double>(i) / golden, 1.0);
    const double theta = std::acos(z);
    const double r =
        0.35 * (1.0 + 0.12 * std::sin(3.0 * theta) * std::cos(2.0 * phi) +
                0.07 * std::cos(5.0 * theta));
    pts[i][0] = 0.5 + r * st * std::cos(phi);
    pts[i][1] = 0.5 + r * st * std::sin(phi);
    pts[i][2] = 0.5 + r * z;
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Writers (interchange formats, full double round trip via %.17g)

inline void write_elevation_csv(const Dataset& ds, const std::string& path) {
  require(ds.dim() == 2, "elevation csv: dataset must be 2-D");
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  out << "x1,x2,y\n";
  char buf[96];
  for (std::size_t i = 0; i < ds.n(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", ds.inputs(i, 0),
                  ds.inputs(i, 1), ds.targets[i]);
    out << buf;
  }
  require(out.good(), "write failure on " + path);
}

inline void write_point_cloud(const std::vector<Vec>& pts,
                              const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  out << "# x y z\n";
  char buf[96];
  for (const auto& p : pts) {
    require(p.size() == 3, "point cloud: points must be 3-D");
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    out << buf;
  }
  require(out.good(), "write failure on " + path);
}

}  // namespace presnet
