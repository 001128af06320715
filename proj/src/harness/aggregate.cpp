#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "hetcomm/error.hpp"
#include "hetcomm/harness.hpp"

namespace hetcomm::harness {

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error("percentile rank must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<PercentileRow> aggregate_percentiles(const std::vector<std::filesystem::path>& metric_files) {
  if (metric_files.size() < 2) throw ConfigError("aggregation needs metric files from at least two seeds");
  std::vector<std::vector<MetricRow>> runs;
  std::set<std::uint64_t> all_steps;
  for (const auto& path : metric_files) {
    runs.push_back(read_metrics(path));
    for (const auto& r : runs.back()) all_steps.insert(r.env_step);
  }
  std::string missing;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    std::set<std::uint64_t> have;
    for (const auto& r : runs[k]) have.insert(r.env_step);
    std::string list;
    for (auto s : all_steps) {
      if (!have.contains(s)) list += " " + std::to_string(s);
    }
    if (!list.empty()) missing += "\n  " + metric_files[k].string() + " lacks steps" + list;
  }
  if (!missing.empty()) throw ConfigError("metric files are not aligned:" + missing);

  using Getter = double (*)(const MetricRow&);
  const std::vector<std::pair<std::string, Getter>> metrics = {
      {"win_rate", [](const MetricRow& r) { return r.win_rate; }},
      {"mean_defeated", [](const MetricRow& r) { return r.mean_defeated; }},
      {"mean_reward", [](const MetricRow& r) { return r.mean_reward; }},
      {"loss", [](const MetricRow& r) { return r.loss; }},
      {"epsilon", [](const MetricRow& r) { return r.epsilon; }},
  };
  std::vector<PercentileRow> out;
  for (auto step : all_steps) {
    for (const auto& [name, get] : metrics) {
      std::vector<double> values;
      for (const auto& run : runs) {
        for (const auto& r : run) {
          if (r.env_step == step && !std::isnan(get(r))) values.push_back(get(r));
        }
      }
      PercentileRow row;
      row.env_step = step;
      row.metric = name;
      if (values.empty()) {
        row.p25 = row.p50 = row.p75 = std::nan("");
      } else {
        row.p25 = percentile(values, 0.25);
        row.p50 = percentile(values, 0.50);
        row.p75 = percentile(values, 0.75);
      }
      out.push_back(row);
    }
  }
  return out;
}

void write_percentile_table(const std::filesystem::path& path, const std::vector<PercentileRow>& rows) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write aggregate table: " + path.string());
  os << "env_step,metric,p25,p50,p75\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", r.p25, r.p50, r.p75);
    os << r.env_step << ',' << r.metric << ',' << buf << '\n';
  }
}

}  // namespace hetcomm::harness
