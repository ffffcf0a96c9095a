#include "fruitlet/growth/growth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <tuple>

namespace fruitlet::growth {

ZScoreResult zscore_filter(const std::vector<double>& values, double z_thr) {
  ZScoreResult out;
  if (values.size() < 2) {
    out.kept = values;
    out.warning = "z-score filter needs at least two values; passing through";
    return out;
  }
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (sd > 0.0 && std::abs(values[i] - mean) > z_thr * sd) {
      out.removed.push_back(i);
    } else {
      out.kept.push_back(values[i]);
    }
  }
  return out;
}

namespace {

using Key = std::pair<std::string, std::string>;  // cluster, fruitlet

std::map<Key, double> day_sizes(const std::vector<FruitletRecord>& records, const std::string& day) {
  std::map<Key, double> out;
  for (const auto& r : records) {
    if (!(r.diameter_mm > 0.0) || !std::isfinite(r.diameter_mm)) {
      throw GrowthDataError("fruitlet " + r.cluster_id + "/" + r.key + " on " + r.day +
                            " has non-positive diameter");
    }
    if (r.day != day) continue;
    if (!out.emplace(Key{r.cluster_id, r.key}, r.diameter_mm).second) {
      throw GrowthDataError("duplicate record for " + r.cluster_id + "/" + r.key + " on " + day);
    }
  }
  return out;
}

}  // namespace

RateResult chain_and_rate(const std::vector<FruitletRecord>& records, const std::string& day_start,
                          const std::string& day_end, const std::vector<DayMatch>& matches) {
  const auto start = day_sizes(records, day_start);
  const auto end = day_sizes(records, day_end);
  std::set<Key> used_start, used_end;
  RateResult out;
  for (const auto& m : matches) {
    const Key ks{m.cluster_id, m.start_key}, ke{m.cluster_id, m.end_key};
    if (!used_start.insert(ks).second || !used_end.insert(ke).second) {
      throw GrowthDataError("fruitlet matched twice in cluster " + m.cluster_id + ": " + m.start_key +
                            " -> " + m.end_key);
    }
    const auto s = start.find(ks);
    const auto e = end.find(ke);
    if (s == start.end() || e == end.end()) continue;
    out.rates.push_back({m.cluster_id, m.start_key, m.end_key, s->second, e->second, e->second - s->second});
  }
  std::sort(out.rates.begin(), out.rates.end(), [](const GrowthRate& a, const GrowthRate& b) {
    return std::tie(a.cluster_id, a.start_key) < std::tie(b.cluster_id, b.start_key);
  });
  out.unmatched = start.size() - out.rates.size();
  return out;
}

std::vector<DayMatch> matches_by_key(const std::vector<FruitletRecord>& records,
                                     const std::string& day_start, const std::string& day_end) {
  const auto start = day_sizes(records, day_start);
  const auto end = day_sizes(records, day_end);
  std::vector<DayMatch> out;
  for (const auto& [k, d] : start) {
    if (end.count(k)) out.push_back({k.first, k.second, k.second});
  }
  return out;
}

GrowthReport abscise_report(const std::vector<double>& rates, double top_frac) {
  if (rates.empty()) throw GrowthDataError("abscise report needs at least one growth rate");
  if (!(top_frac > 0.0 && top_frac <= 1.0)) throw GrowthDataError("top_frac must lie in (0, 1]");
  const std::size_t n = rates.size();
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(top_frac * static_cast<double>(n) - 1e-9)));
  std::vector<double> sorted = rates;
  std::sort(sorted.begin(), sorted.end());
  // top k ascending occupy [n - k, n); lower-middle of those
  const double mfg = sorted[n - k + (k - 1) / 2];
  GrowthReport report;
  report.rates_mm = rates;
  report.mfg_mm = mfg;
  report.abscise_threshold_mm = 0.5 * mfg;
  const auto below = std::count_if(rates.begin(), rates.end(),
                                   [&](double r) { return r < report.abscise_threshold_mm; });
  report.abscise_percent = 100.0 * static_cast<double>(below) / static_cast<double>(n);
  return report;
}

GrowthReport growth_report(const std::vector<FruitletRecord>& records, const std::string& day_start,
                           const std::string& day_end, const std::vector<DayMatch>& matches,
                           const GrowthOptions& options) {
  if (day_start == day_end) throw GrowthDataError("growth interval needs two distinct days");
  std::vector<FruitletRecord> sized = records;
  std::size_t removed = 0;
  if (options.filter_sizes) {
    sized.clear();
    for (const auto& day : {day_start, day_end}) {
      std::vector<const FruitletRecord*> of_day;
      std::vector<double> d;
      for (const auto& r : records) {
        if (r.day == day) {
          of_day.push_back(&r);
          d.push_back(r.diameter_mm);
        }
      }
      const auto z = zscore_filter(d, options.z_thr);
      std::set<std::size_t> drop(z.removed.begin(), z.removed.end());
      removed += drop.size();
      for (std::size_t i = 0; i < of_day.size(); ++i)
        if (!drop.count(i)) sized.push_back(*of_day[i]);
    }
  }
  RateResult chained = chain_and_rate(sized, day_start, day_end, matches);

  std::vector<GrowthRate> kept = chained.rates;
  if (options.filter_rates) {
    std::vector<double> r;
    for (const auto& g : chained.rates) r.push_back(g.rate_mm);
    const auto z = zscore_filter(r, options.z_thr);
    std::set<std::size_t> drop(z.removed.begin(), z.removed.end());
    removed += drop.size();
    kept.clear();
    for (std::size_t i = 0; i < chained.rates.size(); ++i)
      if (!drop.count(i)) kept.push_back(chained.rates[i]);
  }
  std::vector<double> rates;
  for (const auto& g : kept) rates.push_back(g.rate_mm);
  GrowthReport report = abscise_report(rates, options.top_frac);
  report.day_start = day_start;
  report.day_end = day_end;
  report.fruitlets = std::move(kept);
  report.outliers_removed = removed;
  report.unmatched = chained.unmatched;
  return report;
}

std::string rates_csv(const GrowthReport& report) {
  std::string out = "cluster_id,start_key,end_key,start_mm,end_mm,rate_mm\n";
  for (const auto& g : report.fruitlets) {
    char line[96];
    std::snprintf(line, sizeof line, ",%.6f,%.6f,%.6f\n", g.start_mm, g.end_mm, g.rate_mm);
    out += g.cluster_id + "," + g.start_key + "," + g.end_key + line;
  }
  return out;
}

void to_json(nlohmann::json& j, const FruitletRecord& r) {
  j = {{"cluster_id", r.cluster_id}, {"key", r.key}, {"day", r.day}, {"diameter_mm", r.diameter_mm}};
}

void from_json(const nlohmann::json& j, FruitletRecord& r) {
  j.at("cluster_id").get_to(r.cluster_id);
  j.at("key").get_to(r.key);
  j.at("day").get_to(r.day);
  j.at("diameter_mm").get_to(r.diameter_mm);
}

void to_json(nlohmann::json& j, const DayMatch& m) {
  j = {{"cluster_id", m.cluster_id}, {"start_key", m.start_key}, {"end_key", m.end_key}};
}

void from_json(const nlohmann::json& j, DayMatch& m) {
  j.at("cluster_id").get_to(m.cluster_id);
  j.at("start_key").get_to(m.start_key);
  j.at("end_key").get_to(m.end_key);
}

void to_json(nlohmann::json& j, const GrowthRate& r) {
  j = {{"cluster_id", r.cluster_id}, {"start_key", r.start_key}, {"end_key", r.end_key},
       {"start_mm", r.start_mm},     {"end_mm", r.end_mm},       {"rate_mm", r.rate_mm}};
}

void from_json(const nlohmann::json& j, GrowthRate& r) {
  j.at("cluster_id").get_to(r.cluster_id);
  j.at("start_key").get_to(r.start_key);
  j.at("end_key").get_to(r.end_key);
  j.at("start_mm").get_to(r.start_mm);
  j.at("end_mm").get_to(r.end_mm);
  j.at("rate_mm").get_to(r.rate_mm);
}

void to_json(nlohmann::json& j, const GrowthReport& r) {
  j = {{"day_start", r.day_start},
       {"day_end", r.day_end},
       {"fruitlets", r.fruitlets},
       {"rates_mm", r.rates_mm},
       {"mfg_mm", r.mfg_mm},
       {"abscise_threshold_mm", r.abscise_threshold_mm},
       {"abscise_percent", r.abscise_percent},
       {"outliers_removed", r.outliers_removed},
       {"unmatched", r.unmatched}};
}

void from_json(const nlohmann::json& j, GrowthReport& r) {
  j.at("day_start").get_to(r.day_start);
  j.at("day_end").get_to(r.day_end);
  j.at("fruitlets").get_to(r.fruitlets);
  j.at("rates_mm").get_to(r.rates_mm);
  j.at("mfg_mm").get_to(r.mfg_mm);
  j.at("abscise_threshold_mm").get_to(r.abscise_threshold_mm);
  j.at("abscise_percent").get_to(r.abscise_percent);
  j.at("outliers_removed").get_to(r.outliers_removed);
  j.at("unmatched").get_to(r.unmatched);
}

}  // namespace fruitlet::growth
