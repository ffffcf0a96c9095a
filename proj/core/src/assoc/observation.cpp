#include "fruitlet/assoc/observation.hpp"

#include <cmath>
#include <set>

namespace fruitlet::assoc {

void validate(const ClusterObservation& obs, std::size_t visual_channels,
              std::size_t positional_size, std::size_t visual_size) {
  const std::string where = "observation " + obs.cluster_id + "/" + obs.day + ": ";
  if (obs.image_width == 0 || obs.image_height == 0) throw ObservationError(where + "zero image size");
  if (obs.nodes.empty()) throw ObservationError(where + "no nodes");
  std::size_t tags = 0;
  const std::size_t pos_len = 4 * positional_size * positional_size;
  const std::size_t vis_len = visual_channels * visual_size * visual_size;
  for (std::size_t i = 0; i < obs.nodes.size(); ++i) {
    const auto& n = obs.nodes[i];
    const std::string at = where + "node " + std::to_string(i) + ": ";
    if (!(n.bbox.x1 > n.bbox.x0 && n.bbox.y1 > n.bbox.y0)) throw ObservationError(at + "empty bbox");
    if (!(n.cluster_score >= 0.0 && n.cluster_score <= 1.0)) {
      throw ObservationError(at + "cluster score outside [0, 1]");
    }
    if (n.is_tag && n.is_cluster) throw ObservationError(at + "tag marked as clustered fruitlet");
    tags += n.is_tag;
    if (n.positional.size() != pos_len) {
      throw ObservationError(at + "positional grid has " + std::to_string(n.positional.size()) +
                             " values, expected " + std::to_string(pos_len));
    }
    if (n.visual.size() != vis_len) {
      throw ObservationError(at + "visual grid has " + std::to_string(n.visual.size()) +
                             " values, expected " + std::to_string(vis_len));
    }
    for (double v : n.positional) {
      if (!(v >= 0.0 && v <= 1.0)) throw ObservationError(at + "positional value outside [0, 1]");
    }
    for (double v : n.visual) {
      if (!std::isfinite(v)) throw ObservationError(at + "non-finite visual value");
    }
  }
  if (tags != 1) throw ObservationError(where + "expected exactly one tag node, found " + std::to_string(tags));
}

void validate(const MatchLabels& labels, const ClusterObservation& a, const ClusterObservation& b) {
  std::set<std::size_t> used_a, used_b;
  auto check = [](std::size_t idx, const ClusterObservation& obs, std::set<std::size_t>& used,
                  const char* side) {
    if (idx >= obs.nodes.size()) {
      throw ObservationError(std::string("label index ") + std::to_string(idx) + " out of range for side " + side);
    }
    if (!obs.nodes[idx].is_cluster) {
      throw ObservationError(std::string("label index ") + std::to_string(idx) + " on side " + side +
                             " is not a clustered fruitlet");
    }
    if (!used.insert(idx).second) {
      throw ObservationError(std::string("label index ") + std::to_string(idx) + " used twice on side " + side);
    }
  };
  for (auto [i, j] : labels.matches) {
    check(i, a, used_a, "A");
    check(j, b, used_b, "B");
  }
  for (auto i : labels.unmatched_a) check(i, a, used_a, "A");
  for (auto j : labels.unmatched_b) check(j, b, used_b, "B");
}

}  // namespace fruitlet::assoc
