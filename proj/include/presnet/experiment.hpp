#pragma once

// Config-driven experiment harness: flat key=value configs with overrides,
// seeded reproducible runs, atomic manifests, artifact CSVs, and the
// benchmark-suite runner. Exit-code contract (used by the CLI): 0 success,
// 2 configuration/usage error, 3 training failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "presnet/burgers.hpp"
#include "presnet/data.hpp"
#include "presnet/diagnostics.hpp"
#include "presnet/metrics.hpp"
#include "presnet/network.hpp"
#include "presnet/optim.hpp"

namespace presnet {

inline constexpr const char* kCodeVersion = "0.1.0";

/// Configuration problems (bad keys, bad values, missing files). The CLI
/// maps these to exit code 2, distinct from training failures (3).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Flat key=value configuration

/// Parsed config: string values by key, with consumption tracking so that
/// unrecognized keys can be rejected after a task has read its inputs.
struct ExperimentConfig {
  std::map<std::string, std::string> kv;
  mutable std::set<std::string> consumed;

  bool has(const std::string& key) const { return kv.count(key) != 0; }

  const std::string& get(const std::string& key) const {
    auto it = kv.find(key);
    if (it == kv.end())
      throw ConfigError("config: missing required key '" + key + "'");
    consumed.insert(key);
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& def) const {
    consumed.insert(key);
    auto it = kv.find(key);
    return it == kv.end() ? def : it->second;
  }

  double get_double(const std::string& key, double def) const {
    const std::string s = get_or(key, "");
    if (s.empty()) return def;
    bool ok = false;
    const double v = detail::parse_double(s, ok);
    if (!ok || !std::isfinite(v))
      throw ConfigError("config: key '" + key + "' is not a finite number: '" +
                        s + "'");
    return v;
  }

  std::size_t get_size(const std::string& key, std::size_t def) const {
    const std::string s = get_or(key, "");
    if (s.empty()) return def;
    if (s.size() > 18 || s.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("config: key '" + key +
                        "' is not a nonnegative integer: '" + s + "'");
    return static_cast<std::size_t>(std::stoull(s));
  }

  bool get_bool(const std::string& key, bool def) const {
    const std::string s = get_or(key, "");
    if (s.empty()) return def;
    if (s == "on" || s == "true" || s == "1") return true;
    if (s == "off" || s == "false" || s == "0") return false;
    throw ConfigError("config: key '" + key + "' must be on/off: '" + s + "'");
  }

  std::vector<std::string> get_list(const std::string& key,
                                    const std::string& def) const {
    const std::string s = get_or(key, def);
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = detail::trim(tok);
      if (!tok.empty()) out.push_back(tok);
    }
    if (out.empty())
      throw ConfigError("config: key '" + key + "' lists no entries");
    return out;
  }

  /// Rejects keys the task did not consume — catches typos and settings
  /// that do not apply to the task at hand.
  void require_all_consumed() const {
    for (const auto& [key, value] : kv)
      if (consumed.count(key) == 0)
        throw ConfigError("config: unknown or inapplicable key '" + key + "'");
  }
};

/// Parses `key = value` lines; '#' starts a comment, blanks are skipped.
inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (value.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": empty value for key '" + key + "'");
    if (!cfg.kv.emplace(key, value).second)
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
  }
  return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("config: cannot open " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return parse_config_text(body.str(), path);
}

/// Applies one `--set key=value` override (replaces any file value).
inline void apply_override(ExperimentConfig& cfg, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects key=value, got '" + spec + "'");
  const std::string key = detail::trim(spec.substr(0, eq));
  const std::string value = detail::trim(spec.substr(eq + 1));
  if (key.empty() || value.empty())
    throw ConfigError("--set expects nonempty key and value, got '" + spec +
                      "'");
  cfg.kv[key] = value;
}

// ---------------------------------------------------------------------------
// Run manifest (flat key=value, written atomically at run end)

struct RunManifest {
  std::map<std::string, std::string> entries;

  void set(const std::string& key, const std::string& value) {
    entries[key] = value;
  }
  void set(const std::string& key, double v) { entries[key] = detail::fmt17(v); }
  void set(const std::string& key, std::size_t v) {
    entries[key] = std::to_string(v);
  }

  const std::string& at(const std::string& key) const {
    auto it = entries.find(key);
    require(it != entries.end(), "manifest: missing key '" + key + "'");
    return it->second;
  }

  bool is_failed() const {
    auto it = entries.find("status");
    return it != entries.end() && it->second == "failed";
  }
};

inline void write_manifest(const RunManifest& m, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    require(out.good(), "cannot write " + tmp);
    for (const auto& [key, value] : m.entries)
      out << key << " = " << value << "\n";
    require(out.good(), "write failure on " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, "manifest: cannot rename " + tmp + " to " + path);
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path);
  RunManifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    require(eq != std::string::npos, path + ":" + std::to_string(line_no) +
                                         ": expected key = value");
    m.entries[detail::trim(t.substr(0, eq))] = detail::trim(t.substr(eq + 1));
  }
  return m;
}

/// Equality over everything except wall-clock data (`time.` keys): the
/// reproducibility contract for identical config + seed.
inline bool manifests_match_excluding_timings(const RunManifest& a,
                                              const RunManifest& b) {
  auto filtered = [](const RunManifest& m) {
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : m.entries)
      if (key.rfind("time.", 0) != 0) out[key] = value;
    return out;
  };
  return filtered(a) == filtered(b);
}

// ---------------------------------------------------------------------------
// Shared resolution helpers

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::lbfgs;
  double lr = 1e-3;
  ConvergenceCriteria criteria;
  std::size_t history = 10;
};

namespace detail {

inline OptimizerKind config_optimizer(const ExperimentConfig& cfg) {
  const std::string name = cfg.get_or("optimizer", "lbfgs");
  try {
    return parse_optimizer(name);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline OptimizerSettings resolve_optimizer(const ExperimentConfig& cfg) {
  OptimizerSettings s;
  s.kind = config_optimizer(cfg);
  s.lr = cfg.get_double("lr", 1e-3);
  if (s.lr <= 0.0) throw ConfigError("config: lr must be > 0");
  const std::size_t default_iters =
      s.kind == OptimizerKind::adam ? 10000 : 1000;
  s.criteria.max_iter = cfg.get_size("max_iter", default_iters);
  s.criteria.grad_tol = cfg.get_double("grad_tol", 1e-9);
  s.criteria.f_change_tol = cfg.get_double("f_change_tol", 1e-9);
  if (s.criteria.grad_tol <= 0.0 || s.criteria.f_change_tol <= 0.0)
    throw ConfigError("config: tolerances must be > 0");
  s.history = cfg.get_size("lbfgs_history", 10);
  if (s.history < 1) throw ConfigError("config: lbfgs_history must be >= 1");
  return s;
}

inline ArchitectureSpec resolve_arch(const ExperimentConfig& cfg,
                                     std::size_t input_dim) {
  ArchitectureSpec spec;
  const std::string name = cfg.get_or("arch", "sqr-skip-resnet");
  try {
    spec.kind = parse_arch(name);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const std::size_t n_l = cfg.get_size("n_l", 10);
  const std::size_t n_n = cfg.get_size("n_n", 50);
  if (n_l < 1) throw ConfigError("config: n_l must be >= 1");
  if (n_n < 1) throw ConfigError("config: n_n must be >= 1");
  spec.input_dim = input_dim;
  spec.hidden_widths.assign(n_l, n_n);
  spec.output_dim = 1;
  const std::size_t p = cfg.get_size("p", 2);
  if (p < 1) throw ConfigError("config: p must be >= 1");
  spec.power = static_cast<int>(p);
  return spec;
}

inline std::uint64_t resolve_seed(const ExperimentConfig& cfg) {
  const std::string s = cfg.get("seed");  // required: no silent nondeterminism
  if (s.empty() || s.size() > 18 ||
      s.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("config: seed must be a nonnegative integer: '" + s +
                      "'");
  return static_cast<std::uint64_t>(std::stoull(s));
}

inline std::string resolve_out_dir(const ExperimentConfig& cfg) {
  const std::string dir = cfg.get_or("out_dir", ".");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("config: cannot create out_dir " + dir);
  return dir;
}

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void manifest_config_block(RunManifest& m, const ExperimentConfig& cfg) {
  for (const auto& [key, value] : cfg.kv) m.set("config." + key, value);
}

inline void manifest_skip_block(RunManifest& m, const ArchitectureSpec& spec) {
  for (const SkipLogEntry& e : skip_layer_log(spec))
    m.set("skip.layer_" + std::to_string(e.layer),
          e.applied ? "applied" : e.note);
}

inline void manifest_report_block(RunManifest& m, const OptimReport& report) {
  m.set("stop_reason", stop_reason_name(report.stop_reason));
  m.set("iterations", report.iterations);
  m.set("evals", report.evals);
  m.set("final_f", report.final_f);
  if (!report.diagnostic.empty()) m.set("diagnostic", report.diagnostic);
  m.set("time.wall_s", report.wall_time_s);
  m.set("time.finished_at", utc_timestamp());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Prediction / error CSV artifacts (raw units)

inline void write_prediction_csv(const Dataset& raw, const Vec& pred,
                                 const std::string& path) {
  require(pred.size() == raw.n(), "prediction csv: length mismatch");
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  for (std::size_t j = 0; j < raw.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << "y,prediction\n";
  for (std::size_t i = 0; i < raw.n(); ++i) {
    for (std::size_t j = 0; j < raw.dim(); ++j)
      out << detail::fmt17(raw.inputs(i, j)) << ',';
    out << detail::fmt17(raw.targets[i]) << ',' << detail::fmt17(pred[i])
        << "\n";
  }
  require(out.good(), "write failure on " + path);
}

inline void write_error_csv(const Dataset& raw, const Vec& pred,
                            const std::string& path) {
  require(pred.size() == raw.n(), "error csv: length mismatch");
  std::ofstream out(path);
  require(out.good(), "cannot write " + path);
  for (std::size_t j = 0; j < raw.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << "error\n";
  for (std::size_t i = 0; i < raw.n(); ++i) {
    for (std::size_t j = 0; j < raw.dim(); ++j)
      out << detail::fmt17(raw.inputs(i, j)) << ',';
    out << detail::fmt17(pred[i] - raw.targets[i]) << "\n";
  }
  require(out.good(), "write failure on " + path);
}

// ---------------------------------------------------------------------------
// Interpolation runs

struct RunResult {
  RunManifest manifest;
  std::string manifest_path;

  bool failed() const { return manifest.is_failed(); }
};

namespace detail {

struct BuiltinFunction {
  std::string name;
  std::size_t dim;
  double (*f2d)(double, double) = nullptr;
  double (*f3d)(double, double, double) = nullptr;

  double operator()(const Vec& q) const {
    return dim == 2 ? f2d(q[0], q[1]) : f3d(q[0], q[1], q[2]);
  }
};

inline BuiltinFunction builtin_function(const std::string& name) {
  if (name == "f1") return {name, 2, &f1, nullptr};
  if (name == "f2") return {name, 2, &f2, nullptr};
  if (name == "f3") return {name, 2, &f3, nullptr};
  if (name == "f4") return {name, 3, nullptr, &f4};
  throw ConfigError("config: unknown function '" + name +
                    "' (expected f1, f2, f3, or f4)");
}

/// Raw train/validation datasets per the configured source.
inline std::pair<Dataset, Dataset> resolve_datasets(const ExperimentConfig& cfg,
                                                    RngStream& rng) {
  const bool has_function = cfg.has("function");
  const bool has_file = cfg.has("data_file");
  if (!has_function && !has_file)
    throw ConfigError("config: set function or data_file");

  if (has_file) {
    const std::string path = cfg.get("data_file");
    if (!std::filesystem::exists(path))
      throw ConfigError("config: data_file does not exist: " + path);
    const std::string format = cfg.get_or("data_format", "elevation");
    Dataset all;
    if (format == "elevation") {
      if (has_function)
        throw ConfigError(
            "config: elevation files carry targets; drop the function key");
      cfg.get_or("scale", "");  // not meaningful here, but tolerated
      all = load_elevation_grid(path);
    } else if (format == "points") {
      const BuiltinFunction f =
          builtin_function(cfg.get_or("function", "f4"));
      if (f.dim != 3)
        throw ConfigError("config: point clouds need a 3-D function");
      const double scale = cfg.get_double("scale", 10.0);
      if (scale <= 0.0) throw ConfigError("config: scale must be > 0");
      const std::vector<Vec> pts = load_point_cloud(path, scale);
      Vec targets;
      targets.reserve(pts.size());
      for (const auto& q : pts) targets.push_back(f(q));
      all = make_dataset(pts, std::move(targets));
    } else {
      throw ConfigError("config: data_format must be elevation or points");
    }
    const std::size_t n_train = cfg.get_size("n_train", 500);
    if (n_train < 1 || n_train >= all.n())
      throw ConfigError("config: n_train must be in [1, " +
                        std::to_string(all.n() - 1) + "] for this dataset");
    return split(all, n_train, rng);
  }

  const BuiltinFunction f = builtin_function(cfg.get("function"));
  const Domain box = Domain::unit_box(f.dim);
  const std::size_t n_train = cfg.get_size("n_train", 500);
  if (n_train < 1) throw ConfigError("config: n_train must be >= 1");

  std::vector<Vec> train_pts = sample_uniform(box, n_train, rng);
  Vec train_targets;
  train_targets.reserve(n_train);
  for (const auto& q : train_pts) train_targets.push_back(f(q));

  const std::vector<std::size_t> counts =
      f.dim == 2 ? std::vector<std::size_t>{100, 100}
                 : std::vector<std::size_t>{22, 22, 22};
  std::vector<Vec> val_pts = grid(box, counts);
  Vec val_targets;
  val_targets.reserve(val_pts.size());
  for (const auto& q : val_pts) val_targets.push_back(f(q));

  return {make_dataset(train_pts, std::move(train_targets), SplitTag::train),
          make_dataset(val_pts, std::move(val_targets),
                       SplitTag::validation)};
}

inline NormScheme resolve_scheme(const ExperimentConfig& cfg) {
  const std::string name = cfg.get_or("normalization", "none");
  try {
    return parse_scheme(name);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace detail

/// Trains one interpolation configuration and writes its artifacts:
/// loss_history.csv, predictions.csv, errors.csv, checkpoint.txt, optional
/// diagnostics CSVs, and manifest.txt (written last, atomically). Training
/// divergence is reported in the manifest, not thrown.
inline RunResult run_interpolate(const ExperimentConfig& cfg) {
  const std::uint64_t seed = detail::resolve_seed(cfg);
  const std::string out_dir = detail::resolve_out_dir(cfg);
  const std::string task = cfg.get_or("task", "interpolate");
  if (task != "interpolate")
    throw ConfigError("config: task is '" + task + "', expected interpolate");

  RngStream rng(seed);
  auto [train_raw, val_raw] = detail::resolve_datasets(cfg, rng);
  const ArchitectureSpec spec = detail::resolve_arch(cfg, train_raw.dim());
  try {
    validate_spec(spec);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const OptimizerSettings opt = detail::resolve_optimizer(cfg);
  const NormScheme scheme = detail::resolve_scheme(cfg);
  const std::size_t val_every = cfg.get_size("val_every", 10);
  if (val_every < 1) throw ConfigError("config: val_every must be >= 1");

  const bool diagnostics = cfg.get_bool("diagnostics", false);
  const std::size_t norms_every = cfg.get_size("norms_every", 1);
  if (norms_every < 1) throw ConfigError("config: norms_every must be >= 1");
  const std::size_t hist_bins = cfg.get_size("hist_bins", 50);
  std::vector<std::size_t> hist_layers;
  std::vector<std::size_t> hist_epochs;
  if (diagnostics) {
    std::string default_layers;  // first, middle, last hidden layer
    for (std::size_t l : snapshot_epochs(spec.hidden_widths.size()))
      default_layers += (default_layers.empty() ? "" : ",") + std::to_string(l);
    for (const std::string& tok : cfg.get_list("hist_layers", default_layers)) {
      if (tok.size() > 9 ||
          tok.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError("config: hist_layers entry is not an integer: '" +
                          tok + "'");
      hist_layers.push_back(static_cast<std::size_t>(std::stoull(tok)));
    }
    for (std::size_t layer : hist_layers)
      if (layer < 1 || layer > spec.hidden_widths.size() + 1)
        throw ConfigError("config: hist_layers entry " + std::to_string(layer) +
                          " is outside 1.." +
                          std::to_string(spec.hidden_widths.size() + 1));
    if (opt.criteria.max_iter >= 1)
      hist_epochs = snapshot_epochs(opt.criteria.max_iter);
  } else {
    cfg.get_or("hist_layers", "");
  }
  cfg.require_all_consumed();

  // Model-space datasets; raw ones are kept for metric reporting.
  Dataset train_model, val_model;
  try {
    train_model = normalize(train_raw, scheme);
    val_model = apply_normalization(val_raw, train_model.norm);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const AffineMap target_map = train_model.norm.target;

  const Objective objective = interpolation_objective(spec, train_model);
  RngStream init_rng(seed + 0x9e3779b97f4a7c15ull);
  const Vec x0 = flatten(init_params(spec, init_rng));

  // Observation plumbing: loss history, weight norms, gradient histograms.
  std::vector<LossRecord> loss_records;
  NormHistory norm_history;
  std::vector<GradHistogram> grad_hists;
  ParameterSet scratch = zero_params(spec);
  auto val_metrics_at = [&](const ParameterSet& params) {
    Vec pred = predict(spec, params, val_model);
    for (double& v : pred) v = target_map.invert(v);
    return evaluate(pred, val_raw.targets);
  };
  IterObserver observer = [&](const IterInfo& info) {
    const bool record_loss =
        info.iter == 1 || info.iter % val_every == 0;
    const bool record_norm = diagnostics && info.iter % norms_every == 0;
    const bool record_hist =
        diagnostics && std::find(hist_epochs.begin(), hist_epochs.end(),
                                 info.iter) != hist_epochs.end();
    if (!record_loss && !record_norm && !record_hist) return;
    unflatten_into(info.x, spec, scratch);
    if (record_loss)
      loss_records.push_back(LossRecord{info.iter, info.f,
                                        val_metrics_at(scratch).rel_l2,
                                        info.elapsed_s});
    if (record_norm) record_norms(scratch, info.iter, norm_history);
    if (record_hist) {
      Vec g(info.x.size());
      objective(info.x, g);
      ParameterSet grads = unflatten(g, spec);
      for (std::size_t layer : hist_layers)
        grad_hists.push_back(histogram_gradients(grads, layer, hist_bins));
    }
  };

  auto [x_final, report] =
      opt.kind == OptimizerKind::adam
          ? adam_minimize(objective, x0, opt.lr, opt.criteria, observer)
          : lbfgs_minimize(objective, x0, opt.criteria, opt.history, observer);

  const ParameterSet params = unflatten(x_final, spec);
  if (report.iterations >= 1 &&
      (loss_records.empty() || loss_records.back().iter != report.iterations))
    loss_records.push_back(LossRecord{report.iterations, report.final_f,
                                      val_metrics_at(params).rel_l2,
                                      report.wall_time_s});

  // Final metrics in raw units.
  Vec train_pred = predict(spec, params, train_model);
  for (double& v : train_pred) v = target_map.invert(v);
  const EvalResult train_eval = evaluate(train_pred, train_raw.targets);
  Vec val_pred = predict(spec, params, val_model);
  for (double& v : val_pred) v = target_map.invert(v);
  const EvalResult val_eval = evaluate(val_pred, val_raw.targets);

  // Artifacts.
  write_loss_history_csv(loss_records,
                         detail::join_path(out_dir, "loss_history.csv"));
  write_prediction_csv(val_raw, val_pred,
                       detail::join_path(out_dir, "predictions.csv"));
  write_error_csv(val_raw, val_pred, detail::join_path(out_dir, "errors.csv"));
  save_checkpoint(detail::join_path(out_dir, "checkpoint.txt"), spec, params);
  if (diagnostics) {
    write_norms_csv(norm_history, detail::join_path(out_dir, "norms.csv"));
    write_histograms_csv(grad_hists,
                         detail::join_path(out_dir, "grad_histograms.csv"));
  }

  const bool diverged = report.stop_reason == StopReason::non_finite;
  const bool bad_metrics = !std::isfinite(val_eval.max_abs) ||
                           !std::isfinite(train_eval.mse);

  RunResult result;
  RunManifest& m = result.manifest;
  m.set("manifest_version", std::string("1"));
  m.set("code_version", std::string(kCodeVersion));
  m.set("task", std::string("interpolate"));
  m.set("status", diverged || bad_metrics ? std::string("failed")
                                          : std::string("ok"));
  if (diverged) m.set("failure_reason", "training diverged");
  else if (bad_metrics) m.set("failure_reason", "non-finite final metrics");
  detail::manifest_config_block(m, cfg);
  m.set("resolved.arch", arch_name(spec.kind));
  m.set("resolved.optimizer", optimizer_name(opt.kind));
  m.set("resolved.normalization", scheme_name(scheme));
  m.set("data.n_train", train_raw.n());
  m.set("data.n_val", val_raw.n());
  detail::manifest_skip_block(m, spec);
  detail::manifest_report_block(m, report);
  m.set("metric.train_mse", train_eval.mse);
  m.set("metric.val_mse", val_eval.mse);
  m.set("metric.val_rel_l2", val_eval.rel_l2);
  m.set("metric.val_max_abs", val_eval.max_abs);
  m.set("artifact.loss_history", std::string("loss_history.csv"));
  m.set("artifact.predictions", std::string("predictions.csv"));
  m.set("artifact.errors", std::string("errors.csv"));
  m.set("artifact.checkpoint", std::string("checkpoint.txt"));
  if (diagnostics) {
    m.set("artifact.norms", std::string("norms.csv"));
    m.set("artifact.grad_histograms", std::string("grad_histograms.csv"));
  }

  result.manifest_path = detail::join_path(out_dir, "manifest.txt");
  write_manifest(m, result.manifest_path);
  return result;
}

// ---------------------------------------------------------------------------
// Inverse Burgers runs

/// Solves the inverse problem per config and writes loss_history.csv,
/// lambda_trajectory.csv, checkpoint.txt, and manifest.txt. The reference
/// solution comes from `reference_file` or, with `generate_reference = on`,
/// is generated into the output directory first.
inline RunResult run_pinn(const ExperimentConfig& cfg) {
  const std::uint64_t seed = detail::resolve_seed(cfg);
  const std::string out_dir = detail::resolve_out_dir(cfg);
  const std::string task = cfg.get_or("task", "pinn-burgers");
  if (task != "pinn-burgers")
    throw ConfigError("config: task is '" + task + "', expected pinn-burgers");

  const double nu = cfg.get_double("nu", default_viscosity());
  if (nu <= 0.0) throw ConfigError("config: nu must be > 0");

  std::string reference_path;
  bool generated = false;
  if (cfg.has("reference_file")) {
    reference_path = cfg.get("reference_file");
    if (!std::filesystem::exists(reference_path))
      throw ConfigError("config: reference_file does not exist: " +
                        reference_path);
    cfg.get_bool("generate_reference", false);
  } else if (cfg.get_bool("generate_reference", false)) {
    const std::size_t nx = cfg.get_size("ref_nx", 256);
    const std::size_t nt = cfg.get_size("ref_nt", 101);
    const std::size_t nodes = cfg.get_size("ref_nodes", 100);
    if (nx < 2 || nt < 2)
      throw ConfigError("config: ref_nx and ref_nt must be >= 2");
    if (nodes < 1) throw ConfigError("config: ref_nodes must be >= 1");
    reference_path = detail::join_path(out_dir, "burgers_reference.csv");
    write_burgers_reference(reference_path, nx, nt, nu, nodes);
    generated = true;
  } else {
    throw ConfigError(
        "config: no reference solution (set reference_file, or "
        "generate_reference = on)");
  }
  const Dataset reference = load_burgers_reference(reference_path);

  const std::size_t n_obs = cfg.get_size("n_obs", 500);
  if (n_obs < 1 || n_obs >= reference.n())
    throw ConfigError("config: n_obs must be in [1, " +
                      std::to_string(reference.n() - 1) +
                      "] for this reference grid");
  const std::size_t n_collocation = cfg.get_size("n_collocation", 10000);
  if (n_collocation < 1)
    throw ConfigError("config: n_collocation must be >= 1");

  const ArchitectureSpec spec = detail::resolve_arch(cfg, 2);
  try {
    validate_spec(spec);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const OptimizerSettings opt = detail::resolve_optimizer(cfg);
  const std::size_t val_every = cfg.get_size("val_every", 10);
  if (val_every < 1) throw ConfigError("config: val_every must be >= 1");

  BurgersInverseProblem prob;
  prob.spec = spec;
  RngStream rng(seed);
  prob.observations = split(reference, n_obs, rng).first;
  prob.collocation =
      latin_hypercube(Domain{Vec{-1.0, 0.0}, Vec{1.0, 1.0}}, n_collocation,
                      rng);
  prob.lambda_init.l1 = cfg.get_double("lambda1_init", 2.0);
  prob.lambda_init.l2 = cfg.get_double("lambda2_init", 0.2);

  SolveSettings settings;
  settings.optimizer = opt.kind;
  settings.criteria = opt.criteria;
  settings.adam_lr = opt.lr;
  settings.lbfgs_history = opt.history;
  settings.seed = seed;
  settings.truth.l1 = cfg.get_double("lambda1_truth", 1.0);
  settings.truth.l2 = cfg.get_double("lambda2_truth", default_viscosity());
  if (settings.truth.l1 == 0.0 || settings.truth.l2 == 0.0)
    throw ConfigError("config: lambda truth values must be nonzero");
  cfg.require_all_consumed();

  const std::size_t P = parameter_count(spec);
  std::vector<LossRecord> loss_records;
  ParameterSet scratch = zero_params(spec);
  auto val_rel_l2_at = [&](const ParameterSet& params) {
    const Vec pred = predict(spec, params, reference);
    return evaluate(pred, reference.targets).rel_l2;
  };
  settings.observer = [&](const IterInfo& info) {
    if (info.iter != 1 && info.iter % val_every != 0) return;
    unflatten_into(Vec(info.x.begin(), info.x.begin() + P), spec, scratch);
    loss_records.push_back(
        LossRecord{info.iter, info.f, val_rel_l2_at(scratch), info.elapsed_s});
  };

  const InverseResult inv = solve_inverse(prob, settings);
  if (inv.report.iterations >= 1 &&
      (loss_records.empty() ||
       loss_records.back().iter != inv.report.iterations))
    loss_records.push_back(LossRecord{inv.report.iterations,
                                      inv.report.final_f,
                                      val_rel_l2_at(inv.params),
                                      inv.report.wall_time_s});

  write_loss_history_csv(loss_records,
                         detail::join_path(out_dir, "loss_history.csv"));
  {
    std::ofstream out(detail::join_path(out_dir, "lambda_trajectory.csv"));
    require(out.good(), "cannot write lambda_trajectory.csv");
    out << "iter,lambda1,lambda2\n";
    for (std::size_t i = 0; i < inv.trajectory.size(); ++i)
      out << (i + 1) << ',' << detail::fmt17(inv.trajectory[i].l1) << ','
          << detail::fmt17(inv.trajectory[i].l2) << "\n";
    require(out.good(), "write failure on lambda_trajectory.csv");
  }
  save_checkpoint(detail::join_path(out_dir, "checkpoint.txt"), spec,
                  inv.params);

  const Vec ref_pred = predict(spec, inv.params, reference);
  const EvalResult val_eval = evaluate(ref_pred, reference.targets);

  const bool diverged = inv.report.stop_reason == StopReason::non_finite ||
                        !inv.final_loss.ok();
  const bool bad_metrics = !std::isfinite(inv.lambda.l1) ||
                           !std::isfinite(inv.lambda.l2) ||
                           !std::isfinite(val_eval.rel_l2);

  RunResult result;
  RunManifest& m = result.manifest;
  m.set("manifest_version", std::string("1"));
  m.set("code_version", std::string(kCodeVersion));
  m.set("task", std::string("pinn-burgers"));
  m.set("status", diverged || bad_metrics ? std::string("failed")
                                          : std::string("ok"));
  if (diverged) m.set("failure_reason", "training diverged");
  else if (bad_metrics) m.set("failure_reason", "non-finite results");
  detail::manifest_config_block(m, cfg);
  m.set("resolved.arch", arch_name(spec.kind));
  m.set("resolved.optimizer", optimizer_name(opt.kind));
  m.set("resolved.reference", reference_path);
  m.set("resolved.reference_generated",
        generated ? std::string("yes") : std::string("no"));
  m.set("data.n_obs", prob.observations.n());
  m.set("data.n_collocation", prob.collocation.size());
  m.set("data.n_reference", reference.n());
  detail::manifest_skip_block(m, spec);
  detail::manifest_report_block(m, inv.report);
  m.set("lambda.l1", inv.lambda.l1);
  m.set("lambda.l2", inv.lambda.l2);
  m.set("lambda.pct_error_l1", inv.pct_error_l1);
  m.set("lambda.pct_error_l2", inv.pct_error_l2);
  m.set("metric.final_loss", inv.final_loss.loss);
  m.set("metric.final_mse_u", inv.final_loss.mse_u);
  m.set("metric.final_mse_g", inv.final_loss.mse_g);
  m.set("metric.val_rel_l2", val_eval.rel_l2);
  m.set("metric.val_max_abs", val_eval.max_abs);
  m.set("artifact.loss_history", std::string("loss_history.csv"));
  m.set("artifact.lambda_trajectory", std::string("lambda_trajectory.csv"));
  m.set("artifact.checkpoint", std::string("checkpoint.txt"));
  if (generated)
    m.set("artifact.reference", std::string("burgers_reference.csv"));

  result.manifest_path = detail::join_path(out_dir, "manifest.txt");
  write_manifest(m, result.manifest_path);
  return result;
}

// ---------------------------------------------------------------------------
// Reference generation as its own task

inline RunResult run_gen_burgers_ref(const ExperimentConfig& cfg) {
  detail::resolve_seed(cfg);  // required everywhere, unused here
  const std::string out_dir = detail::resolve_out_dir(cfg);
  const std::string task = cfg.get_or("task", "gen-burgers-ref");
  if (task != "gen-burgers-ref")
    throw ConfigError("config: task is '" + task +
                      "', expected gen-burgers-ref");

  const std::size_t nx = cfg.get_size("ref_nx", 256);
  const std::size_t nt = cfg.get_size("ref_nt", 101);
  const std::size_t nodes = cfg.get_size("ref_nodes", 100);
  const double nu = cfg.get_double("nu", default_viscosity());
  if (nx < 2 || nt < 2)
    throw ConfigError("config: ref_nx and ref_nt must be >= 2");
  if (nodes < 1) throw ConfigError("config: ref_nodes must be >= 1");
  if (nu <= 0.0) throw ConfigError("config: nu must be > 0");
  const std::string out_name = cfg.get_or("out", "burgers_reference.csv");
  cfg.require_all_consumed();

  const std::string path = detail::join_path(out_dir, out_name);
  write_burgers_reference(path, nx, nt, nu, nodes);
  const Dataset check = load_burgers_reference(path);  // must parse back

  RunResult result;
  RunManifest& m = result.manifest;
  m.set("manifest_version", std::string("1"));
  m.set("code_version", std::string(kCodeVersion));
  m.set("task", std::string("gen-burgers-ref"));
  m.set("status", std::string("ok"));
  detail::manifest_config_block(m, cfg);
  m.set("data.n_reference", check.n());
  m.set("artifact.reference", out_name);
  m.set("time.finished_at", detail::utc_timestamp());
  result.manifest_path = detail::join_path(out_dir, "manifest.txt");
  write_manifest(m, result.manifest_path);
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic dataset generation

inline RunResult run_gen_data(const ExperimentConfig& cfg) {
  detail::resolve_seed(cfg);  // required everywhere; generators are fixed
  const std::string out_dir = detail::resolve_out_dir(cfg);
  const std::string task = cfg.get_or("task", "gen-data");
  if (task != "gen-data")
    throw ConfigError("config: task is '" + task + "', expected gen-data");

  const std::string kind = cfg.get("dataset");
  std::string out_name;
  std::size_t n_points = 0;
  if (kind == "elevation") {
    out_name = cfg.get_or("out", "elevation.csv");
    const Dataset ds = make_synthetic_elevation_grid();
    write_elevation_csv(ds, detail::join_path(out_dir, out_name));
    n_points = ds.n();
  } else if (kind == "surface") {
    out_name = cfg.get_or("out", "surface_points.txt");
    const std::size_t n = cfg.get_size("n_points", 8171);
    if (n < 1) throw ConfigError("config: n_points must be >= 1");
    std::vector<Vec> pts = make_synthetic_surface_points(n);
    // Stored at one tenth of model scale; loaders re-scale by x10.
    for (auto& q : pts)
      for (double& v : q) v /= 10.0;
    write_point_cloud(pts, detail::join_path(out_dir, out_name));
    n_points = pts.size();
  } else {
    throw ConfigError("config: dataset must be elevation or surface");
  }
  cfg.require_all_consumed();

  RunResult result;
  RunManifest& m = result.manifest;
  m.set("manifest_version", std::string("1"));
  m.set("code_version", std::string(kCodeVersion));
  m.set("task", std::string("gen-data"));
  m.set("status", std::string("ok"));
  detail::manifest_config_block(m, cfg);
  m.set("data.n_points", n_points);
  m.set("artifact.dataset", out_name);
  m.set("time.finished_at", detail::utc_timestamp());
  result.manifest_path = detail::join_path(out_dir, "manifest.txt");
  write_manifest(m, result.manifest_path);
  return result;
}

// ---------------------------------------------------------------------------
// Benchmark suite

/// Runs the cross product of the configured axes, one interpolation run per
/// (arch, n, n_n, n_l, optimizer, seed) combination, each in its own
/// subdirectory. Failed runs are recorded in the results table, not
/// dropped. Returns the suite manifest.
inline RunResult run_suite(const ExperimentConfig& cfg) {
  detail::resolve_seed(cfg);  // consumed: seeds come from the seeds list
  const std::string out_dir = detail::resolve_out_dir(cfg);
  const std::string task = cfg.get_or("task", "suite");
  if (task != "suite")
    throw ConfigError("config: task is '" + task + "', expected suite");

  const std::vector<std::string> archs = cfg.get_list(
      "archs", "plain,resnet,skip-resnet,sqr-skip-resnet");
  const std::vector<std::string> n_list = cfg.get_list("n_list", "200,1000");
  const std::vector<std::string> n_n_list = cfg.get_list("n_n_list", "50,100");
  const std::vector<std::string> n_l_list = cfg.get_list("n_l_list", "5,10");
  const std::vector<std::string> optimizers =
      cfg.get_list("optimizers", "adam");
  const std::vector<std::string> seeds = cfg.get_list("seeds", "1");

  // Keys forwarded unchanged into each child run.
  ExperimentConfig base;
  base.kv["task"] = "interpolate";
  base.kv["function"] = cfg.get_or("function", "f1");
  for (const char* key :
       {"p", "lr", "max_iter", "grad_tol", "f_change_tol", "lbfgs_history",
        "normalization", "val_every", "data_file", "data_format", "scale"})
    if (cfg.has(key)) base.kv[key] = cfg.get(key);
  cfg.require_all_consumed();

  struct Row {
    std::string arch, n, n_n, n_l, optimizer, seed, status, stop_reason,
        run_dir;
    std::string iterations, train_mse, val_mse, val_rel_l2, val_max_abs,
        wall_s;
  };
  std::vector<Row> rows;
  std::size_t idx = 0;
  for (const std::string& arch : archs)
    for (const std::string& n : n_list)
      for (const std::string& n_n : n_n_list)
        for (const std::string& n_l : n_l_list)
          for (const std::string& optimizer : optimizers)
            for (const std::string& seed : seeds) {
              ExperimentConfig child = base;
              child.consumed.clear();
              child.kv["arch"] = arch;
              child.kv["n_train"] = n;
              child.kv["n_n"] = n_n;
              child.kv["n_l"] = n_l;
              child.kv["optimizer"] = optimizer;
              child.kv["seed"] = seed;
              const std::string run_name =
                  "run_" + std::to_string(idx++) + "_" + arch + "_n" + n +
                  "_nn" + n_n + "_nl" + n_l + "_" + optimizer + "_s" + seed;
              child.kv["out_dir"] = detail::join_path(out_dir, run_name);

              const RunResult run = run_interpolate(child);
              const RunManifest& rm = run.manifest;
              Row row;
              row.arch = arch;
              row.n = n;
              row.n_n = n_n;
              row.n_l = n_l;
              row.optimizer = optimizer;
              row.seed = seed;
              row.status = rm.at("status");
              row.stop_reason = rm.at("stop_reason");
              row.iterations = rm.at("iterations");
              row.train_mse = rm.at("metric.train_mse");
              row.val_mse = rm.at("metric.val_mse");
              row.val_rel_l2 = rm.at("metric.val_rel_l2");
              row.val_max_abs = rm.at("metric.val_max_abs");
              row.wall_s = rm.at("time.wall_s");
              row.run_dir = run_name;
              rows.push_back(row);
            }

  const std::string results_path =
      detail::join_path(out_dir, "suite_results.csv");
  {
    std::ofstream out(results_path);
    require(out.good(), "cannot write " + results_path);
    out << "arch,n,n_n,n_l,optimizer,seed,status,stop_reason,iterations,"
        << "train_mse,val_mse,val_rel_l2,val_max_abs,wall_s,run_dir\n";
    for (const Row& r : rows)
      out << r.arch << ',' << r.n << ',' << r.n_n << ',' << r.n_l << ','
          << r.optimizer << ',' << r.seed << ',' << r.status << ','
          << r.stop_reason << ',' << r.iterations << ',' << r.train_mse << ','
          << r.val_mse << ',' << r.val_rel_l2 << ',' << r.val_max_abs << ','
          << r.wall_s << ',' << r.run_dir << "\n";
    require(out.good(), "write failure on " + results_path);
  }

  RunResult result;
  RunManifest& m = result.manifest;
  m.set("manifest_version", std::string("1"));
  m.set("code_version", std::string(kCodeVersion));
  m.set("task", std::string("suite"));
  m.set("status", std::string("ok"));  // per-run failures live in the table
  detail::manifest_config_block(m, cfg);
  m.set("suite.rows", rows.size());
  std::size_t failed = 0;
  for (const Row& r : rows)
    if (r.status != "ok") ++failed;
  m.set("suite.failed_rows", failed);
  m.set("artifact.results", std::string("suite_results.csv"));
  m.set("time.finished_at", detail::utc_timestamp());
  result.manifest_path = detail::join_path(out_dir, "manifest.txt");
  write_manifest(m, result.manifest_path);
  return result;
}

}  // namespace presnet
