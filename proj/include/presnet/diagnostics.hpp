#pragma once

// Training-dynamics instrumentation: per-epoch Frobenius norms of the
// weight matrices and histograms of back-propagated weight gradients,
// with CSV export/import for plotting. Recording is observation-only:
// it never mutates parameters or perturbs the optimizer.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "presnet/data.hpp"
#include "presnet/network.hpp"

namespace presnet {

// ---------------------------------------------------------------------------
// Weight-norm history

/// Per recorded epoch: the aggregate Frobenius norm over all weight
/// matrices followed by one norm per matrix. Biases are not included.
struct NormHistory {
  std::size_t n_layers = 0;          // weight matrices per record
  std::vector<std::size_t> epochs;   // strictly increasing
  std::vector<Vec> norms;            // per epoch: [aggregate, layer 1..L]

  std::size_t size() const noexcept { return epochs.size(); }

  bool operator==(const NormHistory& o) const {
    return n_layers == o.n_layers && epochs == o.epochs && norms == o.norms;
  }
};

/// Appends one record. Epochs must be strictly increasing and the layer
/// count must match earlier records.
inline void record_norms(const ParameterSet& params, std::size_t epoch,
                         NormHistory& history) {
  require(params.layers() >= 1, "record_norms: empty parameter set");
  if (history.size() == 0) {
    history.n_layers = params.layers();
  } else {
    require(epoch > history.epochs.back(),
            "record_norms: epoch " + std::to_string(epoch) +
                " is not after the last recorded epoch " +
                std::to_string(history.epochs.back()));
    require(params.layers() == history.n_layers,
            "record_norms: layer count changed between records");
  }
  Vec row;
  row.reserve(1 + params.layers());
  row.push_back(frobenius_norm(params.W));
  for (const Matrix& w : params.W) row.push_back(frobenius_norm(w));
  history.epochs.push_back(epoch);
  history.norms.push_back(std::move(row));
}

// ---------------------------------------------------------------------------
// Gradient histograms

/// Histogram of one layer's weight-gradient entries over uniform bins.
struct GradHistogram {
  std::size_t layer = 0;             // 1-based weight-matrix index
  Vec edges;                         // bins+1, strictly increasing
  std::vector<std::size_t> counts;   // one per bin

  std::size_t bins() const noexcept { return counts.size(); }

  std::size_t total() const noexcept {
    std::size_t s = 0;
    for (std::size_t c : counts) s += c;
    return s;
  }

  bool operator==(const GradHistogram& o) const {
    return layer == o.layer && edges == o.edges && counts == o.counts;
  }
};

/// Bins the weight-gradient entries of one layer (1-based) into `bins`
/// uniform bins spanning the observed [min, max]. A constant gradient
/// gets a unit-width range centered on the value. Counts are conserved.
inline GradHistogram histogram_gradients(const ParameterSet& grad,
                                         std::size_t layer,
                                         std::size_t bins = 50) {
  require(bins >= 2, "histogram: need at least 2 bins");
  require(layer >= 1 && layer <= grad.layers(),
          "histogram: empty selection (layer " + std::to_string(layer) +
              " of a " + std::to_string(grad.layers()) + "-layer gradient)");
  const Matrix& w = grad.W[layer - 1];
  require(w.size() >= 1, "histogram: empty selection (no entries)");

  const double* p = w.data();
  double lo = p[0], hi = p[0];
  for (std::size_t k = 0; k < w.size(); ++k) {
    require(std::isfinite(p[k]), "histogram: non-finite gradient entry");
    lo = std::min(lo, p[k]);
    hi = std::max(hi, p[k]);
  }
  if (lo == hi) {  // degenerate range: center a unit-width window
    lo -= 0.5;
    hi += 0.5;
  }

  GradHistogram h;
  h.layer = layer;
  h.edges.resize(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k)
    h.edges[k] = lo + (hi - lo) * static_cast<double>(k) /
                          static_cast<double>(bins);
  h.edges[0] = lo;
  h.edges[bins] = hi;
  h.counts.assign(bins, 0);
  const double width = hi - lo;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double rel = (p[k] - lo) / width * static_cast<double>(bins);
    std::size_t idx = rel <= 0.0 ? 0 : static_cast<std::size_t>(rel);
    idx = std::min(idx, bins - 1);  // the maximum lands in the last bin
    ++h.counts[idx];
  }
  return h;
}

/// Default snapshot epochs for gradient histograms: first, middle, last.
inline std::vector<std::size_t> snapshot_epochs(std::size_t total_epochs) {
  require(total_epochs >= 1, "snapshot_epochs: need at least 1 epoch");
  std::vector<std::size_t> out{1, (total_epochs + 1) / 2, total_epochs};
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Loss history (shared CSV layout for training curves)

struct LossRecord {
  std::size_t iter = 0;
  double train_mse = 0.0;
  double val_rel_l2 = 0.0;
  double elapsed_s = 0.0;

  bool operator==(const LossRecord& o) const {
    return iter == o.iter && train_mse == o.train_mse &&
           val_rel_l2 == o.val_rel_l2 && elapsed_s == o.elapsed_s;
  }
};

// ---------------------------------------------------------------------------
// CSV export / import. %.17g printing makes every round trip exact.

namespace detail {

inline void open_for_write(std::ofstream& out, const std::string& path) {
  out.open(path);
  require(out.good(), "cannot write " + path);
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::size_t parse_index(const std::string& s, const std::string& path,
                               std::size_t line_no, const char* what) {
  if (s.empty() || s.size() > 19 ||
      s.find_first_not_of("0123456789") != std::string::npos)
    line_fail(path, line_no, std::string("bad ") + what + ": '" + s + "'");
  return static_cast<std::size_t>(std::stoull(s));
}

inline double parse_field(const std::string& s, const std::string& path,
                          std::size_t line_no) {
  bool ok = false;
  const double v = parse_double(trim(s), ok);
  if (!ok || !std::isfinite(v))
    line_fail(path, line_no, "not a finite number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline void check_header(std::ifstream& in, const std::string& path,
                         const std::string& expected) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)),
          path + ": empty file, expected header " + expected);
  std::string h = trim(line);
  h.erase(std::remove(h.begin(), h.end(), ' '), h.end());
  if (h != expected) line_fail(path, 1, "expected header " + expected);
}

}  // namespace detail

/// Layout: epoch,layer,frobenius — layer 0 is the aggregate, then one row
/// per weight matrix, so each epoch contributes 1+L values.
inline void write_norms_csv(const NormHistory& history,
                            const std::string& path) {
  std::ofstream out;
  detail::open_for_write(out, path);
  out << "epoch,layer,frobenius\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    for (std::size_t l = 0; l < history.norms[i].size(); ++l)
      out << history.epochs[i] << ',' << l << ','
          << detail::fmt17(history.norms[i][l]) << "\n";
  require(out.good(), "write failure on " + path);
}

inline NormHistory load_norms_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  detail::check_header(in, path, "epoch,layer,frobenius");
  NormHistory h;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto f = detail::split_fields(t);
    if (f.size() != 3)
      detail::line_fail(path, line_no, "expected 3 comma-separated values");
    const std::size_t epoch = detail::parse_index(f[0], path, line_no, "epoch");
    const std::size_t layer = detail::parse_index(f[1], path, line_no, "layer");
    const double norm = detail::parse_field(f[2], path, line_no);
    if (norm < 0.0) detail::line_fail(path, line_no, "negative norm");
    if (layer == 0) {  // starts a new epoch block
      if (h.size() > 0)
        require(epoch > h.epochs.back(),
                path + ":" + std::to_string(line_no) +
                    ": epochs not strictly increasing");
      h.epochs.push_back(epoch);
      h.norms.emplace_back();
    } else {
      if (h.size() == 0 || h.epochs.back() != epoch ||
          layer != h.norms.back().size())
        detail::line_fail(path, line_no, "layer index out of sequence");
    }
    h.norms.back().push_back(norm);
  }
  if (h.size() > 0) {
    h.n_layers = h.norms.front().size() - 1;
    require(h.norms.front().size() >= 2,
            path + ": epoch block lists no per-layer norms");
    for (const Vec& row : h.norms)
      require(row.size() == h.n_layers + 1,
              path + ": inconsistent layer count between epoch blocks");
  }
  return h;
}

/// Layout: layer,bin_lo,bin_hi,count — one row per bin, histograms
/// concatenated; consecutive rows of one layer share edges.
inline void write_histograms_csv(const std::vector<GradHistogram>& hists,
                                 const std::string& path) {
  std::ofstream out;
  detail::open_for_write(out, path);
  out << "layer,bin_lo,bin_hi,count\n";
  for (const GradHistogram& h : hists) {
    require(h.edges.size() == h.counts.size() + 1,
            "histogram export: edges/counts length mismatch");
    for (std::size_t k = 0; k < h.counts.size(); ++k)
      out << h.layer << ',' << detail::fmt17(h.edges[k]) << ','
          << detail::fmt17(h.edges[k + 1]) << ',' << h.counts[k] << "\n";
  }
  require(out.good(), "write failure on " + path);
}

inline std::vector<GradHistogram> load_histograms_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  detail::check_header(in, path, "layer,bin_lo,bin_hi,count");
  std::vector<GradHistogram> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto f = detail::split_fields(t);
    if (f.size() != 4)
      detail::line_fail(path, line_no, "expected 4 comma-separated values");
    const std::size_t layer = detail::parse_index(f[0], path, line_no, "layer");
    const double lo = detail::parse_field(f[1], path, line_no);
    const double hi = detail::parse_field(f[2], path, line_no);
    const std::size_t count = detail::parse_index(f[3], path, line_no, "count");
    if (!(hi > lo)) detail::line_fail(path, line_no, "bin edges not increasing");
    if (out.empty() || out.back().layer != layer) {
      out.emplace_back();
      out.back().layer = layer;
      out.back().edges.push_back(lo);
    } else if (out.back().edges.back() != lo) {
      detail::line_fail(path, line_no, "bins of one layer must be contiguous");
    }
    out.back().edges.push_back(hi);
    out.back().counts.push_back(count);
  }
  for (const GradHistogram& h : out)
    require(h.bins() >= 2, path + ": histogram for layer " +
                               std::to_string(h.layer) +
                               " has fewer than 2 bins");
  return out;
}

/// Layout: iter,train_mse,val_rel_l2,elapsed_s.
inline void write_loss_history_csv(const std::vector<LossRecord>& records,
                                   const std::string& path) {
  std::ofstream out;
  detail::open_for_write(out, path);
  out << "iter,train_mse,val_rel_l2,elapsed_s\n";
  for (const LossRecord& r : records)
    out << r.iter << ',' << detail::fmt17(r.train_mse) << ','
        << detail::fmt17(r.val_rel_l2) << ',' << detail::fmt17(r.elapsed_s)
        << "\n";
  require(out.good(), "write failure on " + path);
}

inline std::vector<LossRecord> load_loss_history_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  detail::check_header(in, path, "iter,train_mse,val_rel_l2,elapsed_s");
  std::vector<LossRecord> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto f = detail::split_fields(t);
    if (f.size() != 4)
      detail::line_fail(path, line_no, "expected 4 comma-separated values");
    LossRecord r;
    r.iter = detail::parse_index(f[0], path, line_no, "iteration");
    r.train_mse = detail::parse_field(f[1], path, line_no);
    r.val_rel_l2 = detail::parse_field(f[2], path, line_no);
    r.elapsed_s = detail::parse_field(f[3], path, line_no);
    if (!out.empty() && r.iter <= out.back().iter)
      detail::line_fail(path, line_no, "iterations not strictly increasing");
    out.push_back(r);
  }
  return out;
}

}  // namespace presnet
