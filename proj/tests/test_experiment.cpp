#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "presnet/experiment.hpp"

using namespace presnet;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_config(const std::filesystem::path& dir,
                         const std::string& body) {
  const std::string path = (dir / "run.cfg").string();
  std::ofstream out(path);
  out << body;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream body;
  body << in.rdbuf();
  return body.str();
}

void expect_config_error(const std::function<void()>& fn,
                         const std::string& needle) {
  bool threw = false;
  try {
    fn();
  } catch (const ConfigError& e) {
    threw = true;
    INFO("message: " << e.what() << "\nexpected fragment: " << needle);
    CHECK(std::string(e.what()).find(needle) != std::string::npos);
  }
  CHECK(threw);
}

/// Loss histories must repeat exactly apart from the wall-clock column.
void check_same_loss_history(const std::string& path_a,
                             const std::string& path_b) {
  const auto a = load_loss_history_csv(path_a);
  const auto b = load_loss_history_csv(path_b);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].iter == b[i].iter);
    CHECK(a[i].train_mse == b[i].train_mse);
    CHECK(a[i].val_rel_l2 == b[i].val_rel_l2);
  }
}

ExperimentConfig tiny_interpolate_cfg(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.kv = {{"task", "interpolate"}, {"function", "f1"},  {"seed", "7"},
            {"n_train", "40"},       {"n_l", "2"},        {"n_n", "6"},
            {"optimizer", "lbfgs"},  {"max_iter", "23"},  {"out_dir", out_dir}};
  return cfg;
}

}  // namespace

TEST_CASE("config text parses keys, comments, and overrides", "[experiment]") {
  const ExperimentConfig cfg = parse_config_text(
      "# a comment\n"
      "seed = 42\n"
      "\n"
      "  function=f2   # trailing comment\n"
      "n_train = 100\n",
      "inline");
  CHECK(cfg.get("seed") == "42");
  CHECK(cfg.get("function") == "f2");
  CHECK(cfg.get_size("n_train", 0) == 100);
  CHECK(cfg.get_or("missing", "fallback") == "fallback");

  ExperimentConfig copy = cfg;
  apply_override(copy, "function=f3");
  apply_override(copy, "extra = 1 ");
  CHECK(copy.get("function") == "f3");
  CHECK(copy.get("extra") == "1");

  expect_config_error([] { parse_config_text("seed = 1\nseed = 2\n", "x"); },
                      "duplicate key");
  expect_config_error([] { parse_config_text("just words\n", "x"); },
                      "expected key = value");
  expect_config_error([] { parse_config_text("= 3\n", "x"); }, "empty key");
  expect_config_error([] { parse_config_text("seed =\n", "x"); },
                      "empty value");
  ExperimentConfig c2;
  expect_config_error([&] { apply_override(c2, "no_equals"); }, "key=value");
  expect_config_error([&] { apply_override(c2, "k="); }, "nonempty");
}

TEST_CASE("config typed getters validate their values", "[experiment]") {
  ExperimentConfig cfg;
  cfg.kv = {{"num", "2.5"},   {"count", "12"},    {"flag", "on"},
            {"bad", "hello"}, {"list", "a, b,,c"}};
  CHECK(cfg.get_double("num", 0.0) == 2.5);
  CHECK(cfg.get_double("absent", 1.5) == 1.5);
  CHECK(cfg.get_size("count", 0) == 12);
  CHECK(cfg.get_bool("flag", false));
  CHECK_FALSE(cfg.get_bool("absent", false));
  CHECK(cfg.get_list("list", "") ==
        std::vector<std::string>{"a", "b", "c"});
  CHECK(cfg.get_list("absent", "x,y") == std::vector<std::string>{"x", "y"});

  expect_config_error([&] { cfg.get_double("bad", 0.0); }, "finite number");
  expect_config_error([&] { cfg.get_size("bad", 0); }, "nonnegative integer");
  expect_config_error([&] { cfg.get_bool("bad", false); }, "on/off");
  expect_config_error([&] { cfg.get("absent_required"); }, "missing required");

  ExperimentConfig strict;
  strict.kv = {{"seed", "1"}, {"typo_key", "x"}};
  strict.get("seed");
  expect_config_error([&] { strict.require_all_consumed(); }, "typo_key");
}

TEST_CASE("config files load from disk", "[experiment]") {
  const auto dir = fresh_dir("presnet_cfg");
  const std::string path = write_config(dir, "seed = 9\nfunction = f1\n");
  const ExperimentConfig cfg = load_config_file(path);
  CHECK(cfg.get("seed") == "9");
  expect_config_error([] { load_config_file("/nonexistent/x.cfg"); },
                      "cannot open");
}

TEST_CASE("manifests write atomically and round trip", "[experiment]") {
  const auto dir = fresh_dir("presnet_manifest");
  RunManifest m;
  m.set("status", std::string("ok"));
  m.set("metric.val_mse", 0.125);
  m.set("iterations", std::size_t{42});
  m.set("time.wall_s", 3.5);

  const std::string path = (dir / "manifest.txt").string();
  write_manifest(m, path);
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));

  const RunManifest back = load_manifest(path);
  CHECK(back.entries == m.entries);
  CHECK(back.at("metric.val_mse") == "0.125");
  CHECK_FALSE(back.is_failed());

  RunManifest other = m;
  other.set("time.wall_s", 99.0);
  other.set("time.finished_at", std::string("later"));
  CHECK(manifests_match_excluding_timings(m, other));
  other.set("metric.val_mse", 0.5);
  CHECK_FALSE(manifests_match_excluding_timings(m, other));
}

TEST_CASE("interpolation run writes parsable artifacts and a manifest",
          "[experiment]") {
  const auto dir = fresh_dir("presnet_run_basic");
  const RunResult run = run_interpolate(tiny_interpolate_cfg(dir.string()));
  CHECK_FALSE(run.failed());

  const RunManifest& m = run.manifest;
  CHECK(m.at("status") == "ok");
  CHECK(m.at("task") == "interpolate");
  CHECK(m.at("config.seed") == "7");
  CHECK(m.at("resolved.arch") == "sqr-skip-resnet");
  CHECK(m.at("data.n_train") == "40");
  CHECK(m.at("data.n_val") == "10000");
  CHECK(m.entries.count("skip.layer_1") == 1);
  CHECK(m.entries.count("time.wall_s") == 1);

  // Every declared artifact exists and parses.
  for (const auto& [key, value] : m.entries) {
    if (key.rfind("artifact.", 0) != 0) continue;
    const std::string path = (dir / value).string();
    INFO(key << " -> " << path);
    CHECK(std::filesystem::exists(path));
  }
  const auto records =
      load_loss_history_csv((dir / "loss_history.csv").string());
  REQUIRE(!records.empty());
  CHECK(records.front().iter == 1);
  // The final iteration is always carried into the log.
  CHECK(std::to_string(records.back().iter) == m.at("iterations"));
  for (const auto& r : records) CHECK(std::isfinite(r.val_rel_l2));

  const auto [spec, params] =
      load_checkpoint((dir / "checkpoint.txt").string());
  CHECK(spec.hidden_widths == std::vector<std::size_t>{6, 6});
  CHECK(parameter_count(spec) == flatten(params).size());

  // Prediction and error surfaces cover the full validation grid.
  std::ifstream pred((dir / "predictions.csv").string());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(pred, line)) ++lines;
  CHECK(lines == 1 + 10000);
}

TEST_CASE("identical config and seed reproduce the run", "[experiment]") {
  const auto dir_a = fresh_dir("presnet_det_a");
  const auto dir_b = fresh_dir("presnet_det_b");
  const RunResult a = run_interpolate(tiny_interpolate_cfg(dir_a.string()));

  ExperimentConfig cfg_b = tiny_interpolate_cfg(dir_b.string());
  const RunResult b = run_interpolate(cfg_b);

  RunManifest ma = a.manifest, mb = b.manifest;
  // The output directory necessarily differs; neutralize it before the
  // timing-insensitive comparison.
  ma.entries["config.out_dir"] = "X";
  mb.entries["config.out_dir"] = "X";
  CHECK(manifests_match_excluding_timings(ma, mb));

  check_same_loss_history((dir_a / "loss_history.csv").string(),
                          (dir_b / "loss_history.csv").string());
  CHECK(slurp((dir_a / "checkpoint.txt").string()) ==
        slurp((dir_b / "checkpoint.txt").string()));
}

TEST_CASE("interpolation configs are validated before any training",
          "[experiment]") {
  const auto dir = fresh_dir("presnet_run_bad");
  auto with = [&](const std::string& key, const std::string& value) {
    ExperimentConfig cfg = tiny_interpolate_cfg(dir.string());
    cfg.kv[key] = value;
    return cfg;
  };

  expect_config_error([&] { run_interpolate(with("function", "f9")); },
                      "unknown function");
  expect_config_error([&] { run_interpolate(with("optimizer", "sgd")); },
                      "unknown optimizer");
  expect_config_error([&] { run_interpolate(with("arch", "dense")); },
                      "unknown architecture");
  expect_config_error([&] { run_interpolate(with("n_l", "0")); }, "n_l");
  expect_config_error([&] { run_interpolate(with("n_n", "0")); }, "n_n");
  expect_config_error([&] { run_interpolate(with("lr", "-1")); }, "lr");
  expect_config_error([&] { run_interpolate(with("seed", "abc")); }, "seed");
  expect_config_error([&] { run_interpolate(with("task", "pinn-burgers")); },
                      "expected interpolate");
  expect_config_error([&] { run_interpolate(with("mystery", "1")); },
                      "mystery");
  expect_config_error(
      [&] {
        ExperimentConfig cfg = tiny_interpolate_cfg(dir.string());
        cfg.kv.erase("seed");
        run_interpolate(cfg);
      },
      "seed");
  expect_config_error(
      [&] {
        ExperimentConfig cfg = tiny_interpolate_cfg(dir.string());
        cfg.kv.erase("function");
        run_interpolate(cfg);
      },
      "function or data_file");
  expect_config_error(
      [&] {
        ExperimentConfig cfg = tiny_interpolate_cfg(dir.string());
        cfg.kv["diagnostics"] = "on";
        cfg.kv["hist_layers"] = "9";
        run_interpolate(cfg);
      },
      "hist_layers");
  // No training output appeared during validation failures.
  CHECK_FALSE(std::filesystem::exists(dir / "manifest.txt"));
}

TEST_CASE("file-backed datasets drive interpolation runs", "[experiment]") {
  const auto data_dir = fresh_dir("presnet_run_data");

  // Synthetic elevation grid, 200 training points as in the terrain study.
  const std::string elev_path = (data_dir / "elev.csv").string();
  write_elevation_csv(make_synthetic_elevation_grid(), elev_path);

  const auto dir_e = fresh_dir("presnet_run_elev");
  ExperimentConfig cfg;
  cfg.kv = {{"task", "interpolate"}, {"data_file", elev_path},
            {"seed", "3"},           {"n_train", "200"},
            {"n_l", "2"},            {"n_n", "6"},
            {"max_iter", "8"},       {"normalization", "target_zscore"},
            {"out_dir", dir_e.string()}};
  const RunResult elev_run = run_interpolate(cfg);
  CHECK_FALSE(elev_run.failed());
  CHECK(elev_run.manifest.at("data.n_train") == "200");
  CHECK(elev_run.manifest.at("data.n_val") == "5107");
  CHECK(elev_run.manifest.at("resolved.normalization") == "target_zscore");
  // Raw-unit metrics: elevations span ~100-250, so a sane max_abs is
  // bounded by the relief, not by normalized units.
  bool ok = false;
  const double max_abs =
      detail::parse_double(elev_run.manifest.at("metric.val_max_abs"), ok);
  REQUIRE(ok);
  CHECK(max_abs > 0.0);
  CHECK(max_abs < 300.0);

  // Point-cloud inputs with analytic targets.
  std::vector<Vec> pts = make_synthetic_surface_points(120);
  for (auto& q : pts)
    for (double& v : q) v /= 10.0;
  const std::string cloud_path = (data_dir / "cloud.txt").string();
  write_point_cloud(pts, cloud_path);

  const auto dir_p = fresh_dir("presnet_run_points");
  ExperimentConfig pcfg;
  pcfg.kv = {{"task", "interpolate"}, {"data_file", cloud_path},
             {"data_format", "points"}, {"function", "f4"},
             {"seed", "5"},           {"n_train", "60"},
             {"n_l", "1"},            {"n_n", "8"},
             {"max_iter", "8"},       {"out_dir", dir_p.string()}};
  const RunResult cloud_run = run_interpolate(pcfg);
  CHECK_FALSE(cloud_run.failed());
  CHECK(cloud_run.manifest.at("data.n_train") == "60");
  CHECK(cloud_run.manifest.at("data.n_val") == "60");

  expect_config_error(
      [&] {
        ExperimentConfig bad = cfg;
        bad.kv["n_train"] = "5307";
        run_interpolate(bad);
      },
      "n_train");
  expect_config_error(
      [&] {
        ExperimentConfig bad = cfg;
        bad.kv["data_file"] = "/nonexistent/data.csv";
        run_interpolate(bad);
      },
      "does not exist");
  expect_config_error(
      [&] {
        ExperimentConfig bad = pcfg;
        bad.kv["function"] = "f1";
        run_interpolate(bad);
      },
      "3-D function");
}

TEST_CASE("diagnostics toggles produce norm and histogram artifacts",
          "[experiment]") {
  const auto dir = fresh_dir("presnet_run_diag");
  ExperimentConfig cfg = tiny_interpolate_cfg(dir.string());
  cfg.kv["diagnostics"] = "on";
  cfg.kv["norms_every"] = "2";
  cfg.kv["hist_bins"] = "10";

  const RunResult run = run_interpolate(cfg);
  CHECK_FALSE(run.failed());
  CHECK(run.manifest.entries.count("artifact.norms") == 1);
  CHECK(run.manifest.entries.count("artifact.grad_histograms") == 1);

  const NormHistory norms = load_norms_csv((dir / "norms.csv").string());
  REQUIRE(norms.size() > 0);
  CHECK(norms.n_layers == 3);  // two hidden weight matrices + output
  for (std::size_t e : norms.epochs) CHECK(e % 2 == 0);

  const auto hists =
      load_histograms_csv((dir / "grad_histograms.csv").string());
  // Default layer selection for two hidden layers is {1, 2}; snapshots fire
  // at up to three epochs, so histograms arrive in pairs.
  REQUIRE(!hists.empty());
  CHECK(hists.size() % 2 == 0);
  CHECK(hists.size() <= 6);
  for (const auto& h : hists) CHECK(h.bins() == 10);
}

TEST_CASE("pinn run produces coefficient estimates and artifacts",
          "[experiment]") {
  const auto dir = fresh_dir("presnet_run_pinn");
  ExperimentConfig cfg;
  cfg.kv = {{"task", "pinn-burgers"},
            {"seed", "11"},
            {"generate_reference", "on"},
            {"ref_nx", "21"},
            {"ref_nt", "11"},
            {"n_obs", "40"},
            {"n_collocation", "50"},
            {"n_l", "2"},
            {"n_n", "6"},
            {"max_iter", "20"},
            {"out_dir", dir.string()}};
  const RunResult run = run_pinn(cfg);
  CHECK_FALSE(run.failed());
  const RunManifest& m = run.manifest;
  CHECK(m.at("task") == "pinn-burgers");
  CHECK(m.at("data.n_obs") == "40");
  CHECK(m.at("data.n_collocation") == "50");
  CHECK(m.entries.count("lambda.l1") == 1);
  CHECK(m.entries.count("lambda.pct_error_l2") == 1);
  CHECK(m.at("resolved.reference_generated") == "yes");

  // The generated reference and the trajectory both parse.
  const Dataset ref =
      load_burgers_reference((dir / "burgers_reference.csv").string());
  CHECK(ref.n() == 21 * 11);
  const std::string traj = slurp((dir / "lambda_trajectory.csv").string());
  CHECK(traj.rfind("iter,lambda1,lambda2\n", 0) == 0);
  const auto records =
      load_loss_history_csv((dir / "loss_history.csv").string());
  REQUIRE(!records.empty());
  CHECK(std::to_string(records.back().iter) == m.at("iterations"));

  // Determinism across a re-run into another directory.
  const auto dir2 = fresh_dir("presnet_run_pinn2");
  ExperimentConfig cfg2 = cfg;
  cfg2.consumed.clear();
  cfg2.kv["out_dir"] = dir2.string();
  const RunResult run2 = run_pinn(cfg2);
  RunManifest ma = run.manifest, mb = run2.manifest;
  ma.entries["config.out_dir"] = "X";
  mb.entries["config.out_dir"] = "X";
  ma.entries["resolved.reference"] = "X";
  mb.entries["resolved.reference"] = "X";
  CHECK(manifests_match_excluding_timings(ma, mb));
  check_same_loss_history((dir / "loss_history.csv").string(),
                          (dir2 / "loss_history.csv").string());
}

TEST_CASE("pinn run requires a reference solution", "[experiment]") {
  const auto dir = fresh_dir("presnet_run_pinn_bad");
  ExperimentConfig cfg;
  cfg.kv = {{"task", "pinn-burgers"}, {"seed", "1"},
            {"out_dir", dir.string()}};
  expect_config_error([&] { run_pinn(cfg); }, "reference");

  cfg.kv["reference_file"] = "/nonexistent/ref.csv";
  expect_config_error([&] { run_pinn(cfg); }, "does not exist");
}

TEST_CASE("pinn divergence is reported, not thrown", "[experiment]") {
  const auto dir = fresh_dir("presnet_run_pinn_div");
  ExperimentConfig cfg;
  cfg.kv = {{"task", "pinn-burgers"},
            {"seed", "2"},
            {"generate_reference", "on"},
            {"ref_nx", "11"},
            {"ref_nt", "6"},
            {"n_obs", "10"},
            {"n_collocation", "10"},
            {"n_l", "1"},
            {"n_n", "4"},
            {"max_iter", "10"},
            {"lambda1_init", "1e308"},
            {"out_dir", dir.string()}};
  const RunResult run = run_pinn(cfg);
  CHECK(run.failed());
  CHECK(run.manifest.at("status") == "failed");
  CHECK(run.manifest.at("stop_reason") == "non_finite");
  CHECK(run.manifest.entries.count("failure_reason") == 1);
  CHECK(std::filesystem::exists(dir / "manifest.txt"));
}

TEST_CASE("reference generation task writes a validated grid",
          "[experiment]") {
  const auto dir = fresh_dir("presnet_run_genref");
  ExperimentConfig cfg;
  cfg.kv = {{"task", "gen-burgers-ref"}, {"seed", "1"}, {"ref_nx", "9"},
            {"ref_nt", "5"},             {"out_dir", dir.string()}};
  const RunResult run = run_gen_burgers_ref(cfg);
  CHECK_FALSE(run.failed());
  CHECK(run.manifest.at("data.n_reference") == "45");

  const Dataset ref =
      load_burgers_reference((dir / "burgers_reference.csv").string());
  REQUIRE(ref.n() == 45);
  // Spot check one corner against the analytic solution.
  CHECK(ref.inputs(0, 0) == -1.0);
  CHECK(ref.targets[0] == cole_hopf_reference(-1.0, 0.0, default_viscosity()));
}

TEST_CASE("synthetic dataset generation round trips through the loaders",
          "[experiment]") {
  const auto dir = fresh_dir("presnet_run_gendata");
  ExperimentConfig cfg;
  cfg.kv = {{"task", "gen-data"}, {"dataset", "elevation"}, {"seed", "1"},
            {"out_dir", dir.string()}};
  const RunResult elev = run_gen_data(cfg);
  CHECK_FALSE(elev.failed());
  const Dataset grid = load_elevation_grid((dir / "elevation.csv").string());
  CHECK(grid.n() == 5307);

  ExperimentConfig scfg;
  scfg.kv = {{"task", "gen-data"}, {"dataset", "surface"}, {"seed", "1"},
             {"n_points", "150"},  {"out_dir", dir.string()}};
  const RunResult surf = run_gen_data(scfg);
  CHECK_FALSE(surf.failed());
  const std::vector<Vec> pts =
      load_point_cloud((dir / "surface_points.txt").string());  // x10 rescale
  REQUIRE(pts.size() == 150);
  for (const auto& q : pts)
    for (double v : q) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }

  ExperimentConfig bad;
  bad.kv = {{"task", "gen-data"}, {"dataset", "volume"}, {"seed", "1"},
            {"out_dir", dir.string()}};
  expect_config_error([&] { run_gen_data(bad); }, "elevation or surface");
}

TEST_CASE("suite runs the full grid and keeps failed rows", "[experiment]") {
  const auto dir = fresh_dir("presnet_run_suite");
  ExperimentConfig cfg;
  cfg.kv = {{"task", "suite"},
            {"seed", "1"},
            {"function", "f1"},
            {"archs", "plain,sqr-skip-resnet"},
            {"n_list", "25"},
            {"n_n_list", "5"},
            {"n_l_list", "1,3"},
            {"optimizers", "lbfgs"},
            {"seeds", "2,4"},
            {"max_iter", "6"},
            {"out_dir", dir.string()}};
  const RunResult run = run_suite(cfg);
  CHECK_FALSE(run.failed());
  CHECK(run.manifest.at("suite.rows") == "8");  // 2 archs x 2 n_l x 2 seeds

  const std::string csv = slurp((dir / "suite_results.csv").string());
  std::size_t lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 9);
  CHECK(csv.rfind("arch,n,n_n,n_l,optimizer,seed,status,", 0) == 0);

  // Each child run produced a manifest of its own.
  std::size_t manifests = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_directory() &&
        std::filesystem::exists(entry.path() / "manifest.txt"))
      ++manifests;
  CHECK(manifests == 8);

  expect_config_error(
      [&] {
        ExperimentConfig empty = cfg;
        empty.consumed.clear();
        empty.kv["archs"] = ",";
        run_suite(empty);
      },
      "lists no entries");
}
