#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fruitlet/assoc/network.hpp"
#include "fruitlet/growth/growth.hpp"
#include "fruitlet/sizing/sizing.hpp"
#include "fruitlet/synth/synth.hpp"
#include "fruitlet/train/trainer.hpp"

namespace fruitlet::io {

inline constexpr int kSchemaVersion = 1;

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Detection as stored on disk: raw crops rather than the derived grids.
struct DetectionRecord {
  std::string id;
  assoc::BBox bbox;
  double cluster_score = 0.0;
  bool is_tag = false;
  bool is_cluster = false;
  sizing::ProbMask mask;           // segmentation crop over the bbox
  sizing::DisparityPatch disparity;  // aligned with the mask
  std::size_t visual_channels = 0;
  std::vector<double> visual;  // C_v x 7 x 7; empty when rgb is given
  std::size_t rgb_width = 0;
  std::size_t rgb_height = 0;
  std::vector<double> rgb;  // 3 x h x w in [0, 1], fallback descriptor source
  std::optional<double> true_diameter_mm;
  bool operator==(const DetectionRecord&) const = default;
};

struct ObservationRecord {
  std::string cluster_id;
  std::string day;
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  double max_disparity = 0.0;
  double baseline_mm = 0.0;
  std::vector<DetectionRecord> detections;
  bool operator==(const ObservationRecord&) const = default;
};

nlohmann::json to_json(const ObservationRecord& obs);
ObservationRecord observation_from_json(const nlohmann::json& j);

/// Builds the network input: positional grids from the crops, visual grids
/// as stored or from the rgb fallback encoder.
assoc::ClusterObservation to_observation(const ObservationRecord& record, std::size_t positional_size,
                                         std::size_t visual_channels);

/// Record for one generated observation, crops included.
ObservationRecord record_from_synthetic(const synth::SyntheticObservation& obs, double baseline_mm);

struct ClusterEntry {
  std::string cluster_id;
  std::vector<std::string> days;
  std::vector<std::string> observations;  // paths relative to the manifest, one per day
  std::string labels;                     // empty when the pair is unlabeled
  bool operator==(const ClusterEntry&) const = default;
};

struct DatasetManifest {
  int schema_version = kSchemaVersion;
  std::vector<ClusterEntry> clusters;
  std::optional<synth::SceneConfig> generator;
  std::vector<std::uint64_t> seeds;
  bool operator==(const DatasetManifest&) const = default;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

nlohmann::json to_json(const assoc::MatchLabels& labels);
assoc::MatchLabels labels_from_json(const nlohmann::json& j);

/// Writes manifest.json plus clusters/<id>/<day>.json and labels.json.
void write_synthetic_dataset(const std::filesystem::path& dir, const synth::SceneConfig& config,
                             std::uint64_t first_seed, std::size_t pairs);

/// Throws util::MissingFileError for absent files and SchemaError for a
/// version mismatch or malformed content.
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }
  ObservationRecord observation(std::size_t cluster, std::size_t day) const;
  std::optional<assoc::MatchLabels> labels(std::size_t cluster) const;

 private:
  std::filesystem::path root_;
  DatasetManifest manifest_;
};

/// Labeled two-day pairs of a dataset as network inputs.
class DatasetPairSource : public train::PairSource {
 public:
  DatasetPairSource(const Dataset& dataset, const assoc::NetConfig& net);
  std::size_t size() const override { return index_.size(); }
  train::LabeledPair get(std::size_t index) const override;

 private:
  const Dataset* dataset_;
  assoc::NetConfig net_;
  std::vector<std::size_t> index_;
};

struct MeasurementRecord {
  growth::FruitletRecord fruitlet;
  sizing::SizeMeasurement size;
  sizing::EllipseParams ellipse;
  bool operator==(const MeasurementRecord&) const = default;
};

struct NotSized {
  std::string cluster_id;
  std::string day;
  std::string key;
  std::string reason;
  bool operator==(const NotSized&) const = default;
};

struct MeasurementsFile {
  std::vector<MeasurementRecord> measurements;
  std::vector<NotSized> not_sized;
  bool operator==(const MeasurementsFile&) const = default;
};

nlohmann::json to_json(const MeasurementsFile& m);
MeasurementsFile measurements_from_json(const nlohmann::json& j);

/// Sizes every clustered fruitlet of every observation.
MeasurementsFile size_dataset(const Dataset& dataset, const sizing::SizingOptions& options);

struct PairMatches {
  std::string cluster_id;
  std::string day_a;
  std::string day_b;
  std::vector<std::string> ids_a;
  std::vector<std::string> ids_b;
  assoc::MatchSet matches;
  bool operator==(const PairMatches&) const = default;
};

struct MatchesFile {
  double threshold = 0.0;
  std::vector<PairMatches> pairs;
  bool operator==(const MatchesFile&) const = default;
};

nlohmann::json to_json(const MatchesFile& m);
MatchesFile matches_from_json(const nlohmann::json& j);

/// Runs inference on every two-day cluster of the dataset.
MatchesFile match_dataset(const Dataset& dataset, const assoc::AssocNet& net, double threshold);

/// Matches as start-to-end fruitlet links for the growth pipeline.
std::vector<growth::DayMatch> day_matches(const MatchesFile& matches, const std::string& day_start,
                                          const std::string& day_end);

/// Reads a JSON file, checking schema_version when `versioned`.
nlohmann::json read_json(const std::filesystem::path& path, bool versioned = true);
/// Atomic write with schema_version stamped in.
void write_json(const std::filesystem::path& path, nlohmann::json j, bool versioned = true);

}  // namespace fruitlet::io
