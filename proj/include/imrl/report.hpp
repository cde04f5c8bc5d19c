#pragma once

// Metrics report: one row per variant x suite x environment, written as CSV
// plus a JSON summary. Both carry the config hash and read back exactly.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "imrl/errors.hpp"
#include "imrl/io.hpp"
#include "imrl/pipeline/evaluate.hpp"

namespace imrl {

struct MetricsRow {
  std::string variant;
  std::string suite;
  std::string env;
  std::uint64_t seed = 0;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  double sur = 0.0;
  double sfr = 0.0;
  double afs = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

struct MetricsReport {
  std::string config_hash;
  std::vector<MetricsRow> rows;

  bool operator==(const MetricsReport&) const = default;
};

/// Mean SUR/SFR/AFS of one variant on one suite, pooled over seeds.
struct SummaryRow {
  std::string variant;
  std::string suite;
  std::size_t seeds = 0;
  double sur = 0.0;  // mean over seeds of the pooled per-seed SUR
  double sfr = 0.0;
  double afs = 0.0;
};

inline void append_suite(MetricsReport& report, const std::string& variant, const std::string& suite,
                         std::uint64_t seed, const SuiteMetrics& m) {
  for (const auto& e : m.envs)
    report.rows.push_back({variant, suite, e.env, seed, e.episodes, e.successes, e.sur, e.sfr, e.afs});
}

inline void validate(const MetricsRow& r) {
  for (const std::string* s : {&r.variant, &r.suite, &r.env})
    if (s->empty() || s->find_first_of(",\n\r\"") != std::string::npos)
      throw MetricsError("report field '" + *s + "' is empty or contains a separator");
  if (r.successes > r.episodes) throw MetricsError("more successes than episodes in " + r.env);
  if (!(r.sur >= 0.0 && r.sur <= 1.0) || !(r.sfr >= 0.0 && r.sfr <= 1.0) || !std::isfinite(r.afs))
    throw MetricsError("rate out of range in " + r.env);
}

inline std::vector<SummaryRow> summarize(const MetricsReport& report) {
  // pooled SUR per (variant, suite, seed) first, then averaged over seeds
  struct Acc {
    std::size_t episodes = 0, successes = 0, envs = 0;
    double afs = 0.0;
  };
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::map<std::uint64_t, Acc>> acc;
  for (const auto& r : report.rows) {
    const auto key = std::make_pair(r.variant, r.suite);
    if (!acc.count(key)) order.push_back(key);
    Acc& a = acc[key][r.seed];
    a.episodes += r.episodes;
    a.successes += r.successes;
    a.afs += r.afs;
    ++a.envs;
  }
  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    SummaryRow s{key.first, key.second};
    for (const auto& [seed, a] : acc[key]) {
      const double sur = a.episodes ? static_cast<double>(a.successes) / static_cast<double>(a.episodes) : 0.0;
      s.sur += sur;
      s.sfr += 1.0 - sur;
      s.afs += a.afs / static_cast<double>(a.envs);
      ++s.seeds;
    }
    s.sur /= static_cast<double>(s.seeds);
    s.sfr /= static_cast<double>(s.seeds);
    s.afs /= static_cast<double>(s.seeds);
    out.push_back(s);
  }
  return out;
}

inline const SummaryRow& find_summary(const std::vector<SummaryRow>& rows, std::string_view variant,
                                      std::string_view suite) {
  for (const auto& r : rows)
    if (r.variant == variant && r.suite == suite) return r;
  throw MetricsError("no summary for " + std::string(variant) + " on " + std::string(suite));
}

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kReportHeader = "variant,suite,env,seed,episodes,successes,sur,sfr,afs";

template <typename T>
T parse_field(const std::string& s, const char* what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw MetricsError(std::string("bad ") + what + " '" + s + "'");
  return v;
}

}  // namespace detail

inline std::filesystem::path summary_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  return p.replace_extension(".json");
}

/// Writes `path` (CSV) and the JSON summary next to it.
inline void write_report(const MetricsReport& report, const std::filesystem::path& path) {
  for (const auto& r : report.rows) validate(r);
  {
    auto out = open_for_write(path);
    out << "# config_hash=" << report.config_hash << '\n' << detail::kReportHeader << '\n';
    for (const auto& r : report.rows)
      out << r.variant << ',' << r.suite << ',' << r.env << ',' << r.seed << ',' << r.episodes << ',' << r.successes
          << ',' << detail::fmt17(r.sur) << ',' << detail::fmt17(r.sfr) << ',' << detail::fmt17(r.afs) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
  }
  nlohmann::ordered_json j;
  j["config_hash"] = report.config_hash;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows)
    j["rows"].push_back({{"variant", r.variant}, {"suite", r.suite}, {"env", r.env}, {"seed", r.seed},
                         {"episodes", r.episodes}, {"successes", r.successes}, {"sur", r.sur}, {"sfr", r.sfr},
                         {"afs", r.afs}});
  j["summary"] = nlohmann::ordered_json::array();
  for (const auto& s : summarize(report))
    j["summary"].push_back({{"variant", s.variant}, {"suite", s.suite}, {"seeds", s.seeds}, {"sur", s.sur},
                            {"sfr", s.sfr}, {"afs", s.afs}});
  auto out = open_for_write(summary_path(path));
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + summary_path(path).string());
}

inline MetricsReport read_report_csv(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  MetricsReport report;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# config_hash=", 0) != 0) throw MetricsError("missing config hash line");
  report.config_hash = line.substr(14);
  if (!std::getline(in, line) || line != detail::kReportHeader) throw MetricsError("unexpected CSV header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 9) throw MetricsError("expected 9 fields: " + line);
    MetricsRow r{f[0], f[1], f[2]};
    r.seed = detail::parse_field<std::uint64_t>(f[3], "seed");
    r.episodes = detail::parse_field<std::size_t>(f[4], "episodes");
    r.successes = detail::parse_field<std::size_t>(f[5], "successes");
    r.sur = detail::parse_field<double>(f[6], "sur");
    r.sfr = detail::parse_field<double>(f[7], "sfr");
    r.afs = detail::parse_field<double>(f[8], "afs");
    validate(r);
    report.rows.push_back(std::move(r));
  }
  return report;
}

inline MetricsReport read_report_json(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  nlohmann::json j;
  try {
    in >> j;
    MetricsReport report;
    report.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& r : j.at("rows"))
      report.rows.push_back({r.at("variant").get<std::string>(), r.at("suite").get<std::string>(),
                             r.at("env").get<std::string>(), r.at("seed").get<std::uint64_t>(),
                             r.at("episodes").get<std::size_t>(), r.at("successes").get<std::size_t>(),
                             r.at("sur").get<double>(), r.at("sfr").get<double>(), r.at("afs").get<double>()});
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw MetricsError("malformed report JSON: " + std::string(e.what()));
  }
}

}  // namespace imrl
