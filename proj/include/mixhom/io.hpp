#ifndef MIXHOM_IO_HPP
#define MIXHOM_IO_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mixhom/em.hpp"
#include "mixhom/experiments.hpp"
#include "mixhom/lrt.hpp"

namespace mixhom {

// CSV ingestion: comma-separated UTF-8, one numeric column selected by
// 0-based index, optional single header row.  No quoted-field support; the
// inputs here are plain numeric tables.
struct LoadOptions {
  std::size_t column = 0;
  bool has_header = false;
  bool log_transform = false;
};

// Reads the series from a file.  Unopenable path -> config error;
// non-numeric or missing cell -> parse error naming the line; nonpositive
// value under log_transform -> domain error naming the line.
std::vector<double> load_series(const std::string& path,
                                const LoadOptions& options = {});

// Same, from any stream; `origin` labels error messages.
std::vector<double> parse_series(std::istream& in, const LoadOptions& options,
                                 const std::string& origin);

// Everything the `test` command reports.  Kept as plain data; report_json
// renders it with deterministic key order and round-trip-exact numbers.
struct TestReport {
  std::string kernel_name;
  std::size_t n = 0;
  std::string transform;  // "none" or "log"
  NullFit null_fit;
  EmTestResult em;
  std::optional<LrtResult> lrt;
  std::optional<std::size_t> lrt_reps;
  CaseTag calibration_case = CaseTag::case_i;
  std::size_t calibration_draws = 0;
  std::uint64_t calibration_seed = 0;
  std::string version;
};

struct ReportArgs {
  Kernel kernel;
  std::vector<double> data;
  std::string transform = "none";
  EmConfig config;
  bool with_lrt = false;
  // > 0: simulate an LRT null table of this size for a finite-sample
  // p-value (needs >= 100); 0: report the LRT statistic alone.
  std::size_t lrt_reps = 0;
  std::uint64_t seed = 20260814;  // bootstrap stream; calibration has its own
};

// Orchestrates null fit + EM-test (+ optional LRT) on a loaded series.
// `law` may supply a precomputed calibration (it must match the kernel);
// when null, the law is built from config.calibration_draws / seed.
TestReport run_report(const ReportArgs& args, const LimitLaw* law = nullptr);

// Deterministic JSON rendering (ordered keys, shortest round-trip numbers;
// NaN prints as null).
std::string report_json(const TestReport& report);

struct CurvePoint {
  double x = 0.0;
  double mixture = 0.0;
  double null = 0.0;
};

// Fitted-density table on an evenly spaced grid over [lo, hi]: the
// two-component mixture density of G next to the homogeneous fit.
// points >= 2; lo < hi, both finite; sigma's positive; alpha1 in [0, 1]
// (the closed interval: a one-component G is a legitimate curve).
std::vector<CurvePoint> density_curves(const Kernel& kernel,
                                       const MixingDistribution& G,
                                       const NullFit& null_fit, double lo,
                                       double hi, std::size_t points);

// "x,mixture,null" CSV with round-trip-exact values.
std::string curves_csv(const std::vector<CurvePoint>& points);

// --- Calibration cache ---------------------------------------------------
// Case-I quantile tables are expensive (1e5 optimizer calls); they are
// cacheable on disk keyed by (kernel, draws, seed, tool version).

std::string calibration_cache_name(const Kernel& kernel, std::size_t draws,
                                   std::uint64_t seed);

// nullopt when the file is missing, corrupt, or keyed differently.
std::optional<LimitLaw> load_limit_table(const std::string& path,
                                         const Kernel& kernel,
                                         std::size_t draws,
                                         std::uint64_t seed);

void save_limit_table(const std::string& path, const Kernel& kernel,
                      const LimitLaw& law);

}  // namespace mixhom

#endif  // MIXHOM_IO_HPP
