#include "mixhom/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>
#include <utility>

#include "json.hpp"
#include "mixhom/errors.hpp"
#include "mixhom/version.hpp"

namespace mixhom {

namespace {

// Shortest round-trip decimal form (std::to_chars default format).
std::string fmt_double(double v) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_cell(std::string_view token, const std::string& origin,
                  std::size_t line_no) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last || token.empty()) {
    throw parse_error(origin + ": line " + std::to_string(line_no) +
                      ": non-numeric cell '" + std::string(token) + "'");
  }
  if (!std::isfinite(v)) {
    throw parse_error(origin + ": line " + std::to_string(line_no) +
                      ": non-finite value");
  }
  return v;
}

}  // namespace

std::vector<double> parse_series(std::istream& in, const LoadOptions& options,
                                 const std::string& origin) {
  std::vector<double> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = options.has_header;
  bool first_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (first_line) {
      first_line = false;
      if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);  // UTF-8 BOM
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }

    std::string_view rest = line;
    std::string_view cell;
    std::size_t col = 0;
    bool found = false;
    while (true) {
      const std::size_t comma = rest.find(',');
      const std::string_view piece =
          (comma == std::string_view::npos) ? rest : rest.substr(0, comma);
      if (col == options.column) {
        cell = piece;
        found = true;
        break;
      }
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
      ++col;
    }
    if (!found) {
      throw parse_error(origin + ": line " + std::to_string(line_no) +
                        ": no column " + std::to_string(options.column));
    }

    double v = parse_cell(cell, origin, line_no);
    if (options.log_transform) {
      if (!(v > 0.0)) {
        throw domain_error(origin + ": line " + std::to_string(line_no) +
                           ": nonpositive value under log transform");
      }
      v = std::log(v);
    }
    out.push_back(v);
  }
  if (out.empty()) {
    throw domain_error(origin + ": no data rows");
  }
  return out;
}

std::vector<double> load_series(const std::string& path,
                                const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) {
    throw config_error("io: cannot open '" + path + "'");
  }
  return parse_series(in, options, path);
}

TestReport run_report(const ReportArgs& args, const LimitLaw* law) {
  LimitLaw local;
  if (law == nullptr) {
    local = limit_law_for(args.kernel, args.config.calibration_draws,
                          args.config.calibration_seed, args.config.threads);
    law = &local;
  }

  TestReport rep;
  rep.kernel_name = args.kernel.name();
  rep.n = args.data.size();
  rep.transform = args.transform;
  rep.em = em_statistic(args.kernel, args.data, args.config, law);
  rep.null_fit = rep.em.null_fit;

  if (args.with_lrt) {
    LrtResult lrt = lrt_statistic(args.kernel, args.data);
    if (args.lrt_reps > 0) {
      std::vector<double> table =
          bootstrap_null(args.kernel, rep.n, args.lrt_reps, args.seed,
                         StatisticKind::lrt, args.config, args.config.threads);
      const auto ge =
          std::lower_bound(table.begin(), table.end(), lrt.statistic);
      const auto count = static_cast<double>(table.end() - ge);
      lrt.p_value =
          (1.0 + count) / (static_cast<double>(table.size()) + 1.0);
      lrt.null_table = std::move(table);
      rep.lrt_reps = args.lrt_reps;
    }
    rep.lrt = std::move(lrt);
  }

  rep.calibration_case = law->limit_case.tag;
  rep.calibration_draws = law->draws;
  rep.calibration_seed = law->seed;
  rep.version = kVersion;
  return rep;
}

namespace {

const char* case_name(CaseTag tag) {
  switch (tag) {
    case CaseTag::case_i: return "case_i";
    case CaseTag::case_ii: return "case_ii";
    case CaseTag::normal_degenerate: return "normal_degenerate";
  }
  return "unknown";
}

nlohmann::ordered_json theta_json(const Theta& t) {
  return {{"mu", t.mu}, {"sigma", t.sigma}};
}

nlohmann::ordered_json mixture_json(const MixingDistribution& g) {
  return {{"alpha1", g.alpha1},
          {"theta1", theta_json(g.theta1)},
          {"theta2", theta_json(g.theta2)}};
}

}  // namespace

std::string report_json(const TestReport& report) {
  nlohmann::ordered_json j;
  j["tool"] = kToolName;
  j["version"] = report.version;
  j["kernel"] = report.kernel_name;
  j["n"] = report.n;
  j["transform"] = report.transform;
  j["null_fit"] = {{"mu", report.null_fit.mu_hat},
                   {"sigma", report.null_fit.sigma_hat},
                   {"loglik", report.null_fit.loglik},
                   {"penalized_loglik", report.null_fit.penalized_loglik}};

  nlohmann::ordered_json em;
  em["a_n"] = report.em.a_n;
  em["statistic"] = report.em.statistic;
  em["p_value"] = report.em.p_value;  // NaN renders as null
  nlohmann::ordered_json per_pi = nlohmann::ordered_json::array();
  for (const PiTrace& t : report.em.per_pi) {
    nlohmann::ordered_json row;
    row["pi"] = t.pi;
    row["m_trace"] = t.m_trace;
    row["m_final"] = t.m_final;
    row["fitted"] = mixture_json(t.fitted);
    per_pi.push_back(std::move(row));
  }
  em["per_pi"] = std::move(per_pi);
  j["em"] = std::move(em);

  if (report.lrt.has_value()) {
    nlohmann::ordered_json lrt;
    lrt["statistic"] = report.lrt->statistic;
    if (report.lrt->p_value.has_value()) {
      lrt["p_value"] = *report.lrt->p_value;
      lrt["null_reps"] = report.lrt_reps.value_or(0);
    }
    lrt["full_fit"] = mixture_json(report.lrt->full_fit);
    j["lrt"] = std::move(lrt);
  }

  j["calibration"] = {{"case", case_name(report.calibration_case)},
                      {"draws", report.calibration_draws},
                      {"seed", report.calibration_seed}};
  return j.dump(2) + "\n";
}

std::vector<CurvePoint> density_curves(const Kernel& kernel,
                                       const MixingDistribution& G,
                                       const NullFit& null_fit, double lo,
                                       double hi, std::size_t points) {
  if (points < 2) {
    throw domain_error("io: density_curves needs at least 2 points");
  }
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) {
    throw domain_error("io: degenerate curve range");
  }
  if (!(G.alpha1 >= 0.0 && G.alpha1 <= 1.0) || !(G.theta1.sigma > 0.0) ||
      !(G.theta2.sigma > 0.0) || !(null_fit.sigma_hat > 0.0)) {
    throw domain_error("io: invalid fitted parameters for curves");
  }
  const Theta null_theta{null_fit.mu_hat, null_fit.sigma_hat};
  std::vector<CurvePoint> out;
  out.reserve(points);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) {
    CurvePoint p;
    p.x = lo + step * static_cast<double>(i);
    p.mixture = G.alpha1 * std::exp(log_density(kernel, p.x, G.theta1)) +
                (1.0 - G.alpha1) * std::exp(log_density(kernel, p.x, G.theta2));
    p.null = std::exp(log_density(kernel, p.x, null_theta));
    out.push_back(p);
  }
  return out;
}

std::string curves_csv(const std::vector<CurvePoint>& points) {
  std::string out = "x,mixture,null\n";
  for (const CurvePoint& p : points) {
    out += fmt_double(p.x);
    out += ',';
    out += fmt_double(p.mixture);
    out += ',';
    out += fmt_double(p.null);
    out += '\n';
  }
  return out;
}

// --- Calibration cache -----------------------------------------------------

namespace {

constexpr char kCacheMagic[8] = {'M', 'I', 'X', 'H', 'O', 'M', 'C', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool get(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof v));
}

void put_string(std::ostream& os, const std::string& s) {
  const auto len = static_cast<std::uint32_t>(s.size());
  put(os, len);
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

bool get_string(std::istream& is, std::string& s) {
  std::uint32_t len = 0;
  if (!get(is, len) || len > 4096) return false;
  s.resize(len);
  return static_cast<bool>(is.read(s.data(), len));
}

}  // namespace

std::string calibration_cache_name(const Kernel& kernel, std::size_t draws,
                                   std::uint64_t seed) {
  return "calib_" + kernel.name() + "_d" + std::to_string(draws) + "_s" +
         std::to_string(seed) + "_v" + kVersion + ".bin";
}

std::optional<LimitLaw> load_limit_table(const std::string& path,
                                         const Kernel& kernel,
                                         std::size_t draws,
                                         std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kCacheMagic)) {
    return std::nullopt;
  }
  std::string name, version;
  if (!get_string(in, name) || name != kernel.name()) return std::nullopt;
  if (!get_string(in, version) || version != kVersion) return std::nullopt;
  std::uint64_t file_draws = 0, file_seed = 0;
  if (!get(in, file_draws) || file_draws != draws) return std::nullopt;
  if (!get(in, file_seed) || file_seed != seed) return std::nullopt;

  LimitLaw law;
  std::uint8_t tag = 0, has_vec = 0;
  if (!get(in, tag) || tag > 2) return std::nullopt;
  law.limit_case.tag = static_cast<CaseTag>(tag);
  if (!get(in, has_vec)) return std::nullopt;
  if (has_vec != 0) {
    Eigen::Vector3d v;
    for (int i = 0; i < 3; ++i) {
      if (!get(in, v(i))) return std::nullopt;
    }
    law.limit_case.null_eigenvector = v;
  }
  std::uint64_t size = 0;
  if (!get(in, size) || size != draws) return std::nullopt;
  law.quantile_table.resize(size);
  for (auto& q : law.quantile_table) {
    if (!get(in, q)) return std::nullopt;
  }
  if (!std::is_sorted(law.quantile_table.begin(), law.quantile_table.end())) {
    return std::nullopt;
  }
  law.draws = draws;
  law.seed = seed;
  return law;
}

void save_limit_table(const std::string& path, const Kernel& kernel,
                      const LimitLaw& law) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw config_error("io: cannot write '" + tmp + "'");
    os.write(kCacheMagic, 8);
    put_string(os, kernel.name());
    put_string(os, std::string(kVersion));
    put(os, static_cast<std::uint64_t>(law.draws));
    put(os, static_cast<std::uint64_t>(law.seed));
    put(os, static_cast<std::uint8_t>(law.limit_case.tag));
    const std::uint8_t has_vec =
        law.limit_case.null_eigenvector.has_value() ? 1 : 0;
    put(os, has_vec);
    if (has_vec != 0) {
      for (int i = 0; i < 3; ++i) put(os, (*law.limit_case.null_eigenvector)(i));
    }
    put(os, static_cast<std::uint64_t>(law.quantile_table.size()));
    for (const double q : law.quantile_table) put(os, q);
    if (!os) throw config_error("io: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw config_error("io: cannot move cache into place at '" + path + "'");
  }
}

}  // namespace mixhom
