#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fruitlet/assoc/observation.hpp"
#include "fruitlet/sizing/sizing.hpp"

namespace fruitlet::synth {

struct SceneConfig {
  std::size_t fruitlets_min = 2;
  std::size_t fruitlets_max = 6;
  double diameter_min_mm = 6.0;
  double diameter_max_mm = 10.0;
  double growth_min_mm = 0.5;  // per interval
  double growth_max_mm = 4.5;
  double drop_prob = 0.15;
  double non_cluster_prob = 0.5;  // chance of one persistent non-cluster fruitlet
  double camera_shift_px = 40.0;
  double position_jitter_px = 6.0;
  double appearance_drift_std = 0.3;
  double descriptor_noise_std = 0.05;
  double score_noise_std = 0.05;

  std::size_t image_width = 1440;
  std::size_t image_height = 1080;
  double focal_px = 2000.0;
  double baseline_mm = 60.0;
  double depth_min_mm = 250.0;
  double depth_max_mm = 400.0;
  double background_offset_mm = 150.0;

  std::size_t visual_channels = 32;
  std::size_t positional_size = 64;
  std::size_t latent_dim = 8;
  std::uint64_t appearance_seed = 1234;  // fixes the latent-to-grid map

  std::string day_a = "2021-05-21";
  std::string day_b = "2021-05-25";

  /// Throws std::invalid_argument for empty ranges or probabilities outside [0, 1].
  void validate() const;
  /// Largest disparity any synthetic pixel can take; normalizes channel 0.
  double max_disparity() const;
  bool operator==(const SceneConfig&) const = default;
};

void to_json(nlohmann::json& j, const SceneConfig& c);
void from_json(const nlohmann::json& j, SceneConfig& c);

/// Generator-side facts about one node.
struct NodeTruth {
  std::string fruitlet_id;
  double diameter_mm = 0.0;  // 0 for the tag
  double depth_mm = 0.0;
  sizing::EllipseParams ellipse;  // full-image coordinates
  bool operator==(const NodeTruth&) const = default;
};

/// An observation together with the crops its positional grids came from.
/// Crop pixel (u, v) has its center at (bbox.x0 + u, bbox.y0 + v).
struct SyntheticObservation {
  assoc::ClusterObservation obs;
  std::vector<sizing::ProbMask> masks;
  std::vector<sizing::DisparityPatch> disparities;
  std::vector<NodeTruth> truth;
};

struct SyntheticPair {
  SyntheticObservation a;
  SyntheticObservation b;
  assoc::MatchLabels labels;
};

/// Day-A cluster of K fruitlets around a tag, and the same cluster on day B
/// after growth, camera shift, jitter, appearance drift, and drops. Node order
/// is tag, clustered fruitlets, then the optional non-cluster fruitlet. A
/// dropped fruitlet is visible on exactly one day. Pure function of
/// (config, seed).
SyntheticPair gen_pair(const SceneConfig& config, std::uint64_t seed);

struct SizingSceneConfig {
  double diameter_min_mm = 6.0;
  double diameter_max_mm = 12.0;
  double depth_min_mm = 80.0;
  double depth_max_mm = 140.0;
  double focal_px = 3000.0;
  double baseline_mm = 60.0;
  double background_offset_mm = 60.0;
  double max_elongation = 0.25;  // major = minor * (1 + U(0, max_elongation))
  std::size_t supersample = 4;
  std::size_t margin_px = 12;
  double center_jitter_px = 1.0;
  std::size_t crop_px = 0;  // 0 sizes the square crop to the ellipse
  // Overrides for a fixed scene; negative values draw from the ranges.
  double diameter_mm = -1.0;
  double depth_mm = -1.0;
  double elongation = -1.0;

  void validate() const;
};

struct SizingScene {
  sizing::ProbMask mask;
  sizing::DisparityPatch disparity;
  double true_diameter_mm = 0.0;
  double depth_mm = 0.0;
  double baseline_mm = 0.0;
  sizing::EllipseParams ellipse;  // crop coordinates
};

/// Renders one fruitlet as an ellipse whose minor axis is
/// focal * diameter / depth pixels. Mask values are pixel coverage from
/// supersampling; fruit pixels carry disparity baseline * focal / depth and
/// the background a farther plane. Throws std::invalid_argument when a fixed
/// crop cannot hold the ellipse.
SizingScene gen_sizing_scene(const SizingSceneConfig& config, std::uint64_t seed);

}  // namespace fruitlet::synth
