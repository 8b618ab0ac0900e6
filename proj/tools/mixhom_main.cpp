// mixhom: EM-test for homogeneity in two-component location-scale mixtures.
//
// Subcommands: test, lrt, calibrate, matrices, experiment, curves.
// Exit codes: 0 success, 1 configuration, 2 parse, 3 domain, 4 numerical.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mixhom/errors.hpp"
#include "mixhom/experiments.hpp"
#include "mixhom/io.hpp"
#include "mixhom/version.hpp"

namespace {

using nlohmann::ordered_json;

constexpr std::uint64_t kDefaultSeed = 20260814;

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw mixhom::config_error("cannot open output file '" + out_path + "'");
  os << content;
  if (!os) throw mixhom::config_error("write failed for '" + out_path + "'");
}

double parse_a_n_flag(const std::string& s) {
  if (s == "auto") return 0.0;
  double v = 0.0;
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(s.data(), last, v);
  if (res.ec != std::errc{} || res.ptr != last || !(v > 0.0)) {
    throw mixhom::config_error("--a-n expects a positive number or 'auto'");
  }
  return v;
}

// Build (or fetch from --cache-dir) the limiting-law calibration.
mixhom::LimitLaw obtain_law(const mixhom::Kernel& kernel, std::size_t draws,
                            std::uint64_t seed, int threads,
                            const std::string& cache_dir) {
  if (!cache_dir.empty()) {
    const std::string path =
        cache_dir + "/" + mixhom::calibration_cache_name(kernel, draws, seed);
    if (auto cached = mixhom::load_limit_table(path, kernel, draws, seed)) {
      return std::move(*cached);
    }
    mixhom::LimitLaw law = mixhom::limit_law_for(kernel, draws, seed, threads);
    if (law.limit_case.tag == mixhom::CaseTag::case_i) {
      std::error_code ec;
      std::filesystem::create_directories(cache_dir, ec);
      if (ec) {
        throw mixhom::config_error("cannot create cache directory '" +
                                   cache_dir + "': " + ec.message());
      }
      mixhom::save_limit_table(path, kernel, law);
    }
    return law;
  }
  return mixhom::limit_law_for(kernel, draws, seed, threads);
}

// Flags shared by the data-consuming commands.
struct DataFlags {
  std::string kernel_name;
  std::string data_path;
  std::size_t column = 0;
  bool header = false;
  bool log_transform = false;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--kernel", f.kernel_name,
                  "Kernel family: logistic, extreme, normal, or t<dof>")
      ->required();
  cmd->add_option("--data", f.data_path, "CSV file with the observations")
      ->required();
  cmd->add_option("--column", f.column, "0-based CSV column (default 0)");
  cmd->add_flag("--header", f.header, "Skip one header row");
  cmd->add_flag("--log", f.log_transform,
                "Analyze the natural log of the column");
}

std::vector<double> load_from(const DataFlags& f) {
  mixhom::LoadOptions opt;
  opt.column = f.column;
  opt.has_header = f.header;
  opt.log_transform = f.log_transform;
  return mixhom::load_series(f.data_path, opt);
}

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

const char* case_label(mixhom::CaseTag tag) {
  switch (tag) {
    case mixhom::CaseTag::case_i: return "case_i";
    case mixhom::CaseTag::case_ii: return "case_ii";
    case mixhom::CaseTag::normal_degenerate: return "normal_degenerate";
  }
  return "unknown";
}

// --- experiment spec parsing ------------------------------------------------

template <typename T>
T req_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) {
    throw mixhom::config_error(std::string("experiment spec: missing '") +
                               key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw mixhom::config_error(std::string("experiment spec: bad type for '") +
                               key + "'");
  }
}

template <typename T>
T field_or(const nlohmann::json& j, const char* key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw mixhom::config_error(std::string("experiment spec: bad type for '") +
                               key + "'");
  }
}

nlohmann::json load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mixhom::config_error("cannot open spec file '" + path + "'");
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw mixhom::parse_error("experiment spec '" + path + "': " + e.what());
  }
}

mixhom::EmConfig config_from_spec(const nlohmann::json& spec, int threads) {
  mixhom::EmConfig config;
  if (spec.contains("a_n")) {
    if (spec.at("a_n").is_string()) {
      config.a_n = parse_a_n_flag(spec.at("a_n").get<std::string>());
    } else {
      config.a_n = req_field<double>(spec, "a_n");
      if (!(config.a_n > 0.0)) {
        throw mixhom::config_error("experiment spec: a_n must be positive");
      }
    }
  }
  config.K = field_or<int>(spec, "K", config.K);
  config.pis = field_or<std::vector<double>>(spec, "pis", config.pis);
  config.calibration_draws = field_or<std::size_t>(spec, "calibration_draws",
                                                   config.calibration_draws);
  config.calibration_seed = field_or<std::uint64_t>(spec, "calibration_seed",
                                                    config.calibration_seed);
  config.threads = threads;
  return config;
}

mixhom::Theta theta_from_spec(const nlohmann::json& j, const char* key) {
  const nlohmann::json t = req_field<nlohmann::json>(j, key);
  return mixhom::Theta{req_field<double>(t, "mu"), req_field<double>(t, "sigma")};
}

mixhom::MixingDistribution mixture_from_spec(const nlohmann::json& j,
                                             const char* key) {
  const nlohmann::json g = req_field<nlohmann::json>(j, key);
  mixhom::MixingDistribution out;
  out.alpha1 = req_field<double>(g, "alpha1");
  out.theta1 = theta_from_spec(g, "theta1");
  out.theta2 = theta_from_spec(g, "theta2");
  return out;
}

// --- subcommand bodies -------------------------------------------------------

struct TestOpts {
  DataFlags data;
  bool with_lrt = false;
  std::size_t lrt_reps = 0;
  std::string a_n = "auto";
  int K = 3;
  std::vector<double> pis;
  std::size_t draws = 100000;
  std::uint64_t cal_seed = kDefaultSeed;
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
  std::string cache_dir;
  std::string out;
};

void run_test(const TestOpts& o) {
  mixhom::ReportArgs args;
  args.kernel = mixhom::Kernel::parse(o.data.kernel_name);
  args.data = load_from(o.data);
  args.transform = o.data.log_transform ? "log" : "none";
  args.config.a_n = parse_a_n_flag(o.a_n);
  args.config.K = o.K;
  if (!o.pis.empty()) args.config.pis = o.pis;
  args.config.calibration_draws = o.draws;
  args.config.calibration_seed = o.cal_seed;
  args.config.threads = o.threads;
  args.with_lrt = o.with_lrt || o.lrt_reps > 0;
  args.lrt_reps = o.lrt_reps;
  args.seed = o.seed;

  const mixhom::LimitLaw law = obtain_law(args.kernel, o.draws, o.cal_seed,
                                          o.threads, o.cache_dir);
  const mixhom::TestReport report = mixhom::run_report(args, &law);
  emit(o.out, mixhom::report_json(report));
}

struct LrtOpts {
  DataFlags data;
  std::size_t reps = 10000;
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
  std::string out;
};

void run_lrt(const LrtOpts& o) {
  const mixhom::Kernel kernel = mixhom::Kernel::parse(o.data.kernel_name);
  const std::vector<double> data = load_from(o.data);
  mixhom::LrtResult r = mixhom::lrt_statistic(kernel, data);
  if (o.reps > 0) {
    const std::vector<double> table = mixhom::bootstrap_null(
        kernel, data.size(), o.reps, o.seed, mixhom::StatisticKind::lrt, {},
        o.threads);
    const auto ge = std::lower_bound(table.begin(), table.end(), r.statistic);
    r.p_value = (1.0 + static_cast<double>(table.end() - ge)) /
                (static_cast<double>(table.size()) + 1.0);
  }

  ordered_json j;
  j["tool"] = mixhom::kToolName;
  j["version"] = mixhom::kVersion;
  j["kernel"] = kernel.name();
  j["n"] = data.size();
  j["transform"] = o.data.log_transform ? "log" : "none";
  j["statistic"] = r.statistic;
  if (r.p_value.has_value()) {
    j["p_value"] = *r.p_value;
    j["null_reps"] = o.reps;
    j["seed"] = o.seed;
  }
  j["null_fit"] = {{"mu", r.null_fit.mu_hat},
                   {"sigma", r.null_fit.sigma_hat},
                   {"loglik", r.null_fit.loglik}};
  j["full_fit"] = {{"alpha1", r.full_fit.alpha1},
                   {"theta1", {{"mu", r.full_fit.theta1.mu},
                               {"sigma", r.full_fit.theta1.sigma}}},
                   {"theta2", {{"mu", r.full_fit.theta2.mu},
                               {"sigma", r.full_fit.theta2.sigma}}}};
  emit(o.out, j.dump(2) + "\n");
}

struct CalibrateOpts {
  std::string kernel_name;
  std::size_t draws = 100000;
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
  std::string cache_dir;
  std::string out;
};

void run_calibrate(const CalibrateOpts& o) {
  const mixhom::Kernel kernel = mixhom::Kernel::parse(o.kernel_name);
  const mixhom::LimitLaw law =
      obtain_law(kernel, o.draws, o.seed, o.threads, o.cache_dir);

  ordered_json j;
  j["tool"] = mixhom::kToolName;
  j["version"] = mixhom::kVersion;
  j["kernel"] = kernel.name();
  j["case"] = case_label(law.limit_case.tag);
  j["draws"] = law.draws;
  j["seed"] = law.seed;
  ordered_json crit;
  for (const double level : {0.10, 0.05, 0.01}) {
    char key[16];
    std::snprintf(key, sizeof key, "%g", level);
    crit[key] = mixhom::critical_value(law, level);
  }
  j["critical_values"] = std::move(crit);
  emit(o.out, j.dump(2) + "\n");
}

struct MatricesOpts {
  std::string kernel_name;
  std::string out;
};

void run_matrices(const MatricesOpts& o) {
  const mixhom::Kernel kernel = mixhom::Kernel::parse(o.kernel_name);
  const mixhom::ScoreMatrices& sm = mixhom::score_matrices_cached(kernel);
  const mixhom::LimitCase lc = mixhom::classify_limit(kernel, sm);

  ordered_json j;
  j["tool"] = mixhom::kToolName;
  j["version"] = mixhom::kVersion;
  j["kernel"] = kernel.name();
  j["B11"] = matrix_json(sm.B11);
  j["B12"] = matrix_json(sm.B12);
  j["B22"] = matrix_json(sm.B22);
  j["tildeB22"] = matrix_json(sm.tildeB22);
  j["case"] = case_label(lc.tag);
  if (lc.null_eigenvector.has_value()) {
    j["null_eigenvector"] = {(*lc.null_eigenvector)(0),
                             (*lc.null_eigenvector)(1),
                             (*lc.null_eigenvector)(2)};
  }
  j["integration_window"] = {sm.lo, sm.hi};
  emit(o.out, j.dump(2) + "\n");
}

struct ExperimentOpts {
  std::string spec_path;
  int threads = 1;
  std::string out;
};

void run_experiment_type1(const ExperimentOpts& o) {
  const nlohmann::json spec = load_spec(o.spec_path);
  const mixhom::Kernel kernel =
      mixhom::Kernel::parse(req_field<std::string>(spec, "kernel"));
  const auto n = req_field<std::size_t>(spec, "n");
  const auto reps = req_field<std::size_t>(spec, "reps");
  const auto levels = field_or<std::vector<double>>(spec, "levels", {0.05});
  const auto seed = field_or<std::uint64_t>(spec, "seed", kDefaultSeed);
  const mixhom::EmConfig config = config_from_spec(spec, o.threads);

  const mixhom::Type1Result res =
      mixhom::type1_experiment(kernel, n, reps, levels, config, seed);

  ordered_json j;
  j["experiment"] = "type1";
  j["kernel"] = kernel.name();
  j["n"] = n;
  j["reps"] = res.reps;
  j["seed"] = seed;
  j["a_n"] = (config.a_n > 0.0) ? config.a_n : mixhom::a_n_formula(kernel, n);
  j["levels"] = res.levels;
  j["critical_values"] = res.critical_values;
  j["rates"] = res.rates;
  emit(o.out, j.dump(2) + "\n");
}

void run_experiment_power(const ExperimentOpts& o) {
  const nlohmann::json spec = load_spec(o.spec_path);
  const mixhom::Kernel kernel =
      mixhom::Kernel::parse(req_field<std::string>(spec, "kernel"));
  const auto n = req_field<std::size_t>(spec, "n");
  const auto reps = req_field<std::size_t>(spec, "reps");
  const double level = field_or<double>(spec, "level", 0.05);
  const auto seed = field_or<std::uint64_t>(spec, "seed", kDefaultSeed);
  const auto null_reps = field_or<std::size_t>(spec, "null_reps", 10000);
  const auto null_seed = field_or<std::uint64_t>(
      spec, "null_seed", seed ^ 0x9e3779b97f4a7c15ull);
  const std::string stat_name =
      field_or<std::string>(spec, "statistic", "em");
  mixhom::StatisticKind kind;
  if (stat_name == "em") {
    kind = mixhom::StatisticKind::em;
  } else if (stat_name == "lrt") {
    kind = mixhom::StatisticKind::lrt;
  } else {
    throw mixhom::config_error("experiment spec: statistic must be em or lrt");
  }
  const mixhom::MixingDistribution alt = mixture_from_spec(spec, "alt");
  const mixhom::EmConfig config = config_from_spec(spec, o.threads);

  const std::vector<double> table = mixhom::bootstrap_null(
      kernel, n, null_reps, null_seed, kind, config, o.threads);
  const double power = mixhom::power_experiment(kernel, alt, n, reps, level,
                                                table, seed, kind, config);

  ordered_json j;
  j["experiment"] = "power";
  j["kernel"] = kernel.name();
  j["statistic"] = stat_name;
  j["n"] = n;
  j["reps"] = reps;
  j["level"] = level;
  j["null_reps"] = null_reps;
  j["null_seed"] = null_seed;
  j["seed"] = seed;
  j["critical_value"] = mixhom::empirical_upper_quantile(table, level);
  j["power"] = power;
  emit(o.out, j.dump(2) + "\n");
}

void run_experiment_tuning(const ExperimentOpts& o) {
  const nlohmann::json spec = load_spec(o.spec_path);
  std::vector<mixhom::DesignRow> rows;
  std::string source;
  if (spec.contains("rows")) {
    source = "spec";
    for (const nlohmann::json& rj : req_field<nlohmann::json>(spec, "rows")) {
      mixhom::DesignRow row;
      row.a_n = req_field<double>(rj, "a_n");
      row.n = req_field<std::size_t>(rj, "n");
      row.q = field_or<double>(rj, "q", 0.05);
      row.q_hat = req_field<double>(rj, "q_hat");
      row.y = mixhom::discrepancy(row.q_hat, row.q);
      rows.push_back(row);
    }
  } else {
    source = "table1";
    const mixhom::Kernel kernel =
        mixhom::Kernel::parse(req_field<std::string>(spec, "kernel"));
    rows = mixhom::table1_rows(kernel.family);
  }
  const mixhom::TuningModel model = mixhom::fit_tuning_model(rows);

  ordered_json j;
  j["experiment"] = "tuning";
  j["source"] = source;
  j["rows"] = rows.size();
  j["c0"] = model.c0;
  j["c1"] = model.c1;
  ordered_json curve;
  for (const std::size_t n : {50u, 100u, 300u, 500u}) {
    curve[std::to_string(n)] = model.a_n(n);
  }
  j["a_n_curve"] = std::move(curve);
  emit(o.out, j.dump(2) + "\n");
}

struct CurvesOpts {
  DataFlags data;
  std::string a_n = "auto";
  int K = 3;
  double lo = 0.0;
  double hi = 0.0;
  bool range_set = false;
  std::size_t points = 200;
  std::string out;
};

void run_curves(const CurvesOpts& o) {
  const mixhom::Kernel kernel = mixhom::Kernel::parse(o.data.kernel_name);
  const std::vector<double> data = load_from(o.data);

  mixhom::EmConfig config;
  config.a_n = parse_a_n_flag(o.a_n);
  config.K = o.K;
  const mixhom::EmTestResult res =
      mixhom::em_statistic(kernel, data, config, nullptr);

  // The mixture that attained the max over the initial proportions.
  const mixhom::PiTrace* best = &res.per_pi.front();
  for (const mixhom::PiTrace& t : res.per_pi) {
    if (t.m_final > best->m_final) best = &t;
  }

  double lo = o.lo, hi = o.hi;
  if (!o.range_set) {
    const auto [mn, mx] = std::minmax_element(data.begin(), data.end());
    const double pad = 0.1 * (*mx - *mn);
    lo = *mn - pad;
    hi = *mx + pad;
  }
  const std::vector<mixhom::CurvePoint> pts = mixhom::density_curves(
      kernel, best->fitted, res.null_fit, lo, hi, o.points);
  emit(o.out, mixhom::curves_csv(pts));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "EM-test for homogeneity in two-component location-scale mixtures"};
  app.set_version_flag("--version", mixhom::kVersion);
  app.require_subcommand(1);

  TestOpts test_opts;
  CLI::App* test_cmd = app.add_subcommand(
      "test", "EM-test with limiting-law p-value (optionally the LRT too)");
  add_data_flags(test_cmd, test_opts.data);
  test_cmd->add_flag("--with-lrt", test_opts.with_lrt,
                     "Also fit the full model and report the LRT statistic");
  test_cmd->add_option("--lrt-reps", test_opts.lrt_reps,
                       "Simulated null size for an LRT p-value (implies "
                       "--with-lrt; needs >= 100)");
  test_cmd->add_option("--a-n", test_opts.a_n,
                       "Penalty strength: positive number or 'auto'");
  test_cmd->add_option("--K", test_opts.K, "EM iterations (default 3)");
  test_cmd->add_option("--pi", test_opts.pis,
                       "Initial proportions (default 0.1 0.3 0.5)");
  test_cmd->add_option("--draws", test_opts.draws,
                       "Calibration draws for the Case-I table");
  test_cmd->add_option("--cal-seed", test_opts.cal_seed, "Calibration seed");
  test_cmd->add_option("--seed", test_opts.seed, "Bootstrap seed");
  test_cmd->add_option("--threads", test_opts.threads, "Worker threads");
  test_cmd->add_option("--cache-dir", test_opts.cache_dir,
                       "Directory for calibration-table caching");
  test_cmd->add_option("--out", test_opts.out, "Write JSON here (else stdout)");
  test_cmd->callback([&] { run_test(test_opts); });

  LrtOpts lrt_opts;
  CLI::App* lrt_cmd = app.add_subcommand(
      "lrt", "Penalized likelihood-ratio test with a simulated null");
  add_data_flags(lrt_cmd, lrt_opts.data);
  lrt_cmd->add_option("--reps", lrt_opts.reps,
                      "Null-table replicates (0 = statistic only)");
  lrt_cmd->add_option("--seed", lrt_opts.seed, "Simulation seed");
  lrt_cmd->add_option("--threads", lrt_opts.threads, "Worker threads");
  lrt_cmd->add_option("--out", lrt_opts.out, "Write JSON here (else stdout)");
  lrt_cmd->callback([&] { run_lrt(lrt_opts); });

  CalibrateOpts cal_opts;
  CLI::App* cal_cmd = app.add_subcommand(
      "calibrate", "Simulate the limiting-law quantile table");
  cal_cmd->add_option("--kernel", cal_opts.kernel_name, "Kernel family")
      ->required();
  cal_cmd->add_option("--draws", cal_opts.draws, "Monte Carlo draws");
  cal_cmd->add_option("--seed", cal_opts.seed, "Simulation seed");
  cal_cmd->add_option("--threads", cal_opts.threads, "Worker threads");
  cal_cmd->add_option("--cache-dir", cal_opts.cache_dir,
                      "Directory for calibration-table caching");
  cal_cmd->add_option("--out", cal_opts.out, "Write JSON here (else stdout)");
  cal_cmd->callback([&] { run_calibrate(cal_opts); });

  MatricesOpts mat_opts;
  CLI::App* mat_cmd = app.add_subcommand(
      "matrices", "Score covariance blocks and limit-case classification");
  mat_cmd->add_option("--kernel", mat_opts.kernel_name, "Kernel family")
      ->required();
  mat_cmd->add_option("--out", mat_opts.out, "Write JSON here (else stdout)");
  mat_cmd->callback([&] { run_matrices(mat_opts); });

  CLI::App* exp_cmd =
      app.add_subcommand("experiment", "Simulation studies driven by a JSON spec");
  exp_cmd->require_subcommand(1);
  ExperimentOpts type1_opts, power_opts, tuning_opts;
  auto add_experiment = [&](const char* name, const char* desc,
                            ExperimentOpts& opts,
                            void (*fn)(const ExperimentOpts&)) {
    CLI::App* sub = exp_cmd->add_subcommand(name, desc);
    sub->add_option("--spec", opts.spec_path, "JSON experiment spec")
        ->required();
    sub->add_option("--threads", opts.threads, "Worker threads");
    sub->add_option("--out", opts.out, "Write JSON here (else stdout)");
    sub->callback([&opts, fn] { fn(opts); });
  };
  add_experiment("type1", "Type-I error sweep at limiting-law critical values",
                 type1_opts, run_experiment_type1);
  add_experiment("power", "Power against a two-component alternative",
                 power_opts, run_experiment_power);
  add_experiment("tuning", "Penalty-strength regression on discrepancy rows",
                 tuning_opts, run_experiment_tuning);

  CurvesOpts curves_opts;
  CLI::App* curves_cmd = app.add_subcommand(
      "curves", "Fitted mixture and null densities on a grid (CSV)");
  add_data_flags(curves_cmd, curves_opts.data);
  curves_cmd->add_option("--a-n", curves_opts.a_n,
                         "Penalty strength: positive number or 'auto'");
  curves_cmd->add_option("--K", curves_opts.K, "EM iterations");
  CLI::Option* lo_opt =
      curves_cmd->add_option("--min", curves_opts.lo, "Grid lower end");
  CLI::Option* hi_opt =
      curves_cmd->add_option("--max", curves_opts.hi, "Grid upper end");
  curves_cmd->add_option("--points", curves_opts.points, "Grid size");
  curves_cmd->add_option("--out", curves_opts.out,
                         "Write CSV here (else stdout)");
  curves_cmd->callback([&, lo_opt, hi_opt] {
    curves_opts.range_set = lo_opt->count() > 0 || hi_opt->count() > 0;
    if ((lo_opt->count() > 0) != (hi_opt->count() > 0)) {
      throw mixhom::config_error("curves: give both --min and --max or neither");
    }
    run_curves(curves_opts);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // config mistakes map to exit 1
  } catch (const mixhom::error& e) {
    std::cerr << "mixhom: " << e.what() << "\n";
    return mixhom::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "mixhom: unexpected failure: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
