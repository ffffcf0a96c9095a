#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fruitlet::growth {

class GrowthDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One sized fruitlet on one day.
struct FruitletRecord {
  std::string cluster_id;
  std::string key;  // fruitlet id within the cluster on that day
  std::string day;
  double diameter_mm = 0.0;
  bool operator==(const FruitletRecord&) const = default;
};

/// Links a fruitlet seen on the start day to one seen on the end day.
struct DayMatch {
  std::string cluster_id;
  std::string start_key;
  std::string end_key;
  bool operator==(const DayMatch&) const = default;
};

struct ZScoreResult {
  std::vector<double> kept;
  std::vector<std::size_t> removed;  // indices into the input, ascending
  std::string warning;               // set when the input was too short to filter
};

/// Drops values with |v - mean| > z_thr * std, population std over the whole
/// list, in one pass. Nothing is removed when std is 0 or fewer than two
/// values are given.
ZScoreResult zscore_filter(const std::vector<double>& values,
                           double z_thr = 3.0);

struct GrowthRate {
  std::string cluster_id;
  std::string start_key;
  std::string end_key;
  double start_mm = 0.0;
  double end_mm = 0.0;
  double rate_mm = 0.0;  // end - start over the interval
  bool operator==(const GrowthRate&) const = default;
};

struct RateResult {
  std::vector<GrowthRate> rates;  // ordered by (cluster_id, start_key)
  std::size_t unmatched = 0;      // start-day fruitlets without a usable match
};

/// Throws GrowthDataError on duplicate records, non-positive diameters,
/// matches naming unknown fruitlets, or a fruitlet matched twice.
RateResult chain_and_rate(const std::vector<FruitletRecord>& records, const std::string& day_start,
                          const std::string& day_end, const std::vector<DayMatch>& matches);

/// Matches by equal keys, for records whose key already identifies a
/// fruitlet across days.
std::vector<DayMatch> matches_by_key(const std::vector<FruitletRecord>& records,
                                     const std::string& day_start, const std::string& day_end);

struct GrowthReport {
  std::string day_start;
  std::string day_end;
  std::vector<GrowthRate> fruitlets;  // kept rates with their fruitlets, when known
  std::vector<double> rates_mm;
  double mfg_mm = 0.0;
  double abscise_threshold_mm = 0.0;  // 0.5 * MFG
  double abscise_percent = 0.0;
  std::size_t outliers_removed = 0;
  std::size_t unmatched = 0;
  bool operator==(const GrowthReport&) const = default;
};

/// MFG is the lower-middle median of the ceil(top_frac * n) largest rates.
/// A fruitlet is predicted to abscise when its rate is strictly below half
/// of MFG. Throws GrowthDataError on an empty list or top_frac outside (0, 1].
GrowthReport abscise_report(const std::vector<double>& rates, double top_frac = 0.15);

struct GrowthOptions {
  double z_thr = 3.0;
  double top_frac = 0.15;
  bool filter_sizes = true;  // per-day z-score filtering of diameters
  bool filter_rates = true;
};

/// Sizes filtered per day, rates chained across the interval and filtered,
/// then the abscise statistics. outliers_removed counts both filters.
GrowthReport growth_report(const std::vector<FruitletRecord>& records, const std::string& day_start,
                           const std::string& day_end, const std::vector<DayMatch>& matches,
                           const GrowthOptions& options = {});

/// cluster_id,start_key,end_key,start_mm,end_mm,rate_mm
std::string rates_csv(const GrowthReport& report);

void to_json(nlohmann::json& j, const FruitletRecord& r);
void from_json(const nlohmann::json& j, FruitletRecord& r);
void to_json(nlohmann::json& j, const DayMatch& m);
void from_json(const nlohmann::json& j, DayMatch& m);
void to_json(nlohmann::json& j, const GrowthRate& r);
void from_json(const nlohmann::json& j, GrowthRate& r);
void to_json(nlohmann::json& j, const GrowthReport& r);
void from_json(const nlohmann::json& j, GrowthReport& r);

}  // namespace fruitlet::growth
