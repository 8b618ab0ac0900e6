#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "mixhom/errors.hpp"
#include "mixhom/io.hpp"
#include "mixhom/rng.hpp"
#include "mixhom/version.hpp"

using mixhom::Kernel;
using mixhom::LoadOptions;
using mixhom::MixingDistribution;

namespace {

std::vector<double> parse_string(const std::string& text,
                                 const LoadOptions& options = {}) {
  std::istringstream in(text);
  return mixhom::parse_series(in, options, "test");
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path("io_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("parse_series: plain, header, column selection, line endings") {
  CHECK(parse_string("1\n2.5\n-3e2\n") ==
        std::vector<double>{1.0, 2.5, -300.0});

  LoadOptions header;
  header.has_header = true;
  CHECK(parse_string("value\n1\n2\n", header) == std::vector<double>{1.0, 2.0});

  LoadOptions second;
  second.column = 1;
  CHECK(parse_string("a,10\nb,20\n", second) == std::vector<double>{10.0, 20.0});

  // CRLF endings, UTF-8 BOM, and blank lines are tolerated.
  LoadOptions bom_opts;
  bom_opts.has_header = true;
  CHECK(parse_string("\xEF\xBB\xBFvalue\r\n1.5\r\n\r\n2.5\r\n", bom_opts) ==
        std::vector<double>{1.5, 2.5});

  // Values parse round-trip-exactly.
  const double x = 0.1 + 0.2;  // 0.30000000000000004
  std::ostringstream row;
  row.precision(17);
  row << x << "\n";
  CHECK(parse_string(row.str())[0] == x);
}

TEST_CASE("parse_series: log transform") {
  LoadOptions log_opts;
  log_opts.log_transform = true;
  const std::vector<double> got =
      parse_string("1\n2.718281828459045\n", log_opts);
  REQUIRE(got.size() == 2);
  CHECK(got[0] == 0.0);
  CHECK(got[1] == doctest::Approx(1.0).epsilon(1e-15));

  const std::string msg = message_of(
      [&] { parse_string("4\n-1\n", log_opts); });
  CHECK_THROWS_AS(parse_string("4\n-1\n", log_opts), mixhom::domain_error);
  CHECK_THROWS_AS(parse_string("4\n0\n", log_opts), mixhom::domain_error);
  CHECK(msg.find("line 2") != std::string::npos);
}

TEST_CASE("parse_series: malformed input diagnostics") {
  CHECK_THROWS_AS(parse_string("1\nabc\n"), mixhom::parse_error);
  CHECK_THROWS_AS(parse_string("1\n2x\n"), mixhom::parse_error);  // trailing junk
  CHECK_THROWS_AS(parse_string("1\nnan\n"), mixhom::parse_error);
  CHECK_THROWS_AS(parse_string("1\ninf\n"), mixhom::parse_error);
  CHECK_THROWS_AS(parse_string(""), mixhom::domain_error);  // no data
  LoadOptions second;
  second.column = 1;
  CHECK_THROWS_AS(parse_string("1,2\n3\n", second), mixhom::parse_error);

  const std::string msg = message_of([&] { parse_string("1\n2\nxyz\n"); });
  CHECK(msg.find("line 3") != std::string::npos);
  CHECK(msg.find("test") != std::string::npos);  // origin label

  // Header line offsets the numbering by one.
  LoadOptions header;
  header.has_header = true;
  const std::string msg2 =
      message_of([&] { parse_string("v\n1\nbad\n", header); });
  CHECK(msg2.find("line 3") != std::string::npos);
}

TEST_CASE("load_series: filesystem behaviour") {
  CHECK_THROWS_AS(mixhom::load_series("definitely_missing_file.csv"),
                  mixhom::config_error);
  TempFile tmp("series.csv");
  {
    std::ofstream out(tmp.path);
    out << "value\n3.5\n4.5\n";
  }
  LoadOptions opts;
  opts.has_header = true;
  CHECK(mixhom::load_series(tmp.path, opts) == std::vector<double>{3.5, 4.5});
}

TEST_CASE("density_curves: normalization and shape") {
  const Kernel k = Kernel::parse("logistic");
  MixingDistribution g;
  g.alpha1 = 0.4;
  g.theta1 = {-3.0, 0.8};
  g.theta2 = {3.0, 1.1};
  mixhom::NullFit nf;
  nf.mu_hat = 0.0;
  nf.sigma_hat = 3.0;

  const auto pts = mixhom::density_curves(k, g, nf, -40.0, 40.0, 4001);
  REQUIRE(pts.size() == 4001);
  CHECK(pts.front().x == -40.0);
  CHECK(pts.back().x == 40.0);
  double mix_mass = 0.0, null_mass = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dx = pts[i].x - pts[i - 1].x;
    CHECK(dx == doctest::Approx(80.0 / 4000.0).epsilon(1e-9));
    mix_mass += 0.5 * dx * (pts[i].mixture + pts[i - 1].mixture);
    null_mass += 0.5 * dx * (pts[i].null + pts[i - 1].null);
  }
  CHECK(mix_mass == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(null_mass == doctest::Approx(1.0).epsilon(1e-3));

  // Two separated components give two interior local maxima.
  int maxima = 0;
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    if (pts[i].mixture > pts[i - 1].mixture &&
        pts[i].mixture > pts[i + 1].mixture) {
      ++maxima;
    }
  }
  CHECK(maxima == 2);

  // alpha1 = 1 collapses the mixture onto component 1.
  MixingDistribution one = g;
  one.alpha1 = 1.0;
  const auto solo = mixhom::density_curves(k, one, nf, -10.0, 10.0, 101);
  for (const auto& p : solo) {
    CHECK(p.mixture ==
          doctest::Approx(std::exp(mixhom::log_density(k, p.x, one.theta1)))
              .epsilon(1e-12));
  }

  CHECK_THROWS_AS(mixhom::density_curves(k, g, nf, -1.0, 1.0, 1),
                  mixhom::domain_error);
  CHECK_THROWS_AS(mixhom::density_curves(k, g, nf, 2.0, 2.0, 10),
                  mixhom::domain_error);
  MixingDistribution bad = g;
  bad.alpha1 = 1.5;
  CHECK_THROWS_AS(mixhom::density_curves(k, bad, nf, -1.0, 1.0, 10),
                  mixhom::domain_error);

  const std::string csv = mixhom::curves_csv(solo);
  CHECK(csv.rfind("x,mixture,null\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 102);  // header + 101 rows
}

TEST_CASE("run_report: deterministic JSON that round-trips exactly") {
  const Kernel k = Kernel::parse("t10");  // chi-square law: no simulation
  mixhom::ReportArgs args;
  args.kernel = k;
  args.data = mixhom::sample(k, 60, 123u);

  const mixhom::TestReport rep = mixhom::run_report(args);
  const std::string json1 = mixhom::report_json(rep);
  const std::string json2 = mixhom::report_json(mixhom::run_report(args));
  CHECK(json1 == json2);

  // The report carries exactly the library's statistic.
  const mixhom::EmTestResult direct =
      mixhom::em_statistic(k, args.data, args.config);
  CHECK(rep.em.statistic == direct.statistic);
  CHECK(rep.em.p_value == direct.p_value);
  CHECK(rep.n == args.data.size());
  CHECK(rep.kernel_name == "t10");
  CHECK(rep.transform == "none");
  CHECK(rep.version == mixhom::kVersion);
  CHECK(rep.calibration_case == mixhom::CaseTag::case_ii);
  CHECK_FALSE(rep.lrt.has_value());

  // Doubles survive the JSON round trip bit-for-bit.
  const nlohmann::json parsed = nlohmann::json::parse(json1);
  CHECK(parsed.at("em").at("statistic").get<double>() == rep.em.statistic);
  CHECK(parsed.at("em").at("p_value").get<double>() == rep.em.p_value);
  CHECK(parsed.at("null_fit").at("sigma").get<double>() ==
        rep.null_fit.sigma_hat);
  CHECK(parsed.at("n").get<std::size_t>() == 60);
}

TEST_CASE("run_report: optional LRT block with a bootstrap p-value") {
  const Kernel k = Kernel::parse("normal");
  mixhom::ReportArgs args;
  args.kernel = k;
  args.data = mixhom::sample(k, 40, 9u);
  args.with_lrt = true;
  args.lrt_reps = 100;

  const mixhom::TestReport rep = mixhom::run_report(args);
  REQUIRE(rep.lrt.has_value());
  REQUIRE(rep.lrt->p_value.has_value());
  CHECK(*rep.lrt->p_value > 0.0);
  CHECK(*rep.lrt->p_value <= 1.0);
  CHECK(rep.lrt_reps == std::optional<std::size_t>(100));
  const nlohmann::json parsed = nlohmann::json::parse(mixhom::report_json(rep));
  CHECK(parsed.at("lrt").at("statistic").get<double>() == rep.lrt->statistic);

  // Statistic-only mode leaves the p-value out.
  args.lrt_reps = 0;
  const mixhom::TestReport bare = mixhom::run_report(args);
  REQUIRE(bare.lrt.has_value());
  CHECK_FALSE(bare.lrt->p_value.has_value());
  const nlohmann::json parsed2 =
      nlohmann::json::parse(mixhom::report_json(bare));
  CHECK_FALSE(parsed2.at("lrt").contains("p_value"));
  CHECK(parsed2.at("lrt").contains("statistic"));
}

TEST_CASE("calibration cache: round trip, key mismatch, corruption") {
  const Kernel k = Kernel::parse("logistic");
  const mixhom::LimitLaw law = mixhom::limit_law_for(k, 400, 99u);
  TempFile tmp("calib.bin");
  mixhom::save_limit_table(tmp.path, k, law);

  const auto loaded = mixhom::load_limit_table(tmp.path, k, 400, 99u);
  REQUIRE(loaded.has_value());
  CHECK(loaded->draws == law.draws);
  CHECK(loaded->seed == law.seed);
  CHECK(loaded->limit_case.tag == law.limit_case.tag);
  REQUIRE(loaded->quantile_table.size() == law.quantile_table.size());
  for (std::size_t i = 0; i < law.quantile_table.size(); ++i) {
    REQUIRE(loaded->quantile_table[i] == law.quantile_table[i]);
  }

  // Any key mismatch is a miss, not an error.
  CHECK_FALSE(mixhom::load_limit_table(tmp.path, k, 400, 100u).has_value());
  CHECK_FALSE(mixhom::load_limit_table(tmp.path, k, 401, 99u).has_value());
  CHECK_FALSE(mixhom::load_limit_table(tmp.path, Kernel::parse("extreme"), 400, 99u)
                  .has_value());
  CHECK_FALSE(mixhom::load_limit_table("nope.bin", k, 400, 99u).has_value());

  // Truncation and bit flips are misses too.
  std::string bytes;
  {
    std::ifstream in(tmp.path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    bytes = buf.str();
  }
  {
    std::ofstream out(tmp.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_FALSE(mixhom::load_limit_table(tmp.path, k, 400, 99u).has_value());
  {
    std::string flipped = bytes;
    flipped[0] ^= 0x40;
    std::ofstream out(tmp.path, std::ios::binary | std::ios::trunc);
    out.write(flipped.data(), static_cast<std::streamsize>(flipped.size()));
  }
  CHECK_FALSE(mixhom::load_limit_table(tmp.path, k, 400, 99u).has_value());

  const std::string name = mixhom::calibration_cache_name(k, 400, 99u);
  CHECK(name == std::string("calib_logistic_d400_s99_v") + mixhom::kVersion +
                    ".bin");
}
