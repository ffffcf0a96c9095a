#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fruitlet::assoc {

class ObservationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis-aligned box in full-image pixel coordinates.
struct BBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool operator==(const BBox&) const = default;
};

/// One detected fruitlet, or the cluster tag.
struct DetectionNode {
  std::string id;
  BBox bbox;
  double cluster_score = 0.0;  // s_i
  bool is_tag = false;         // t_i
  bool is_cluster = false;     // belongs to the imaged cluster
  std::vector<double> positional;  // 4 x S x S: disparity, segmentation, x, y
  std::vector<double> visual;      // C_v x 7 x 7

  bool operator==(const DetectionNode&) const = default;
};

/// All detections of one cluster on one day.
struct ClusterObservation {
  std::string cluster_id;
  std::string day;
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  double max_disparity = 0.0;
  std::vector<DetectionNode> nodes;

  bool operator==(const ClusterObservation&) const = default;
};

/// Ground-truth correspondences between two observations, by node index.
struct MatchLabels {
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  std::vector<std::size_t> unmatched_a;
  std::vector<std::size_t> unmatched_b;

  bool operator==(const MatchLabels&) const = default;
};

/// Checks box sanity, a single tag node, and grid sizes.
void validate(const ClusterObservation& obs, std::size_t visual_channels,
              std::size_t positional_size, std::size_t visual_size = 7);

/// Checks that label indices are in range, refer to clustered fruitlets, and
/// that no index is used twice.
void validate(const MatchLabels& labels, const ClusterObservation& a, const ClusterObservation& b);

}  // namespace fruitlet::assoc
