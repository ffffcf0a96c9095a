#include <algorithm>
#include <cmath>

#include "fruitlet/assoc/positional.hpp"
#include "fruitlet/train/trainer.hpp"

namespace fruitlet::train {

namespace {

void mirror_rows(std::vector<double>& grid, std::size_t side) {
  for (std::size_t row = 0; row * side < grid.size(); ++row) {
    std::reverse(grid.begin() + row * side, grid.begin() + (row + 1) * side);
  }
}

std::size_t grid_side(std::size_t values, std::size_t channels) {
  return static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(values / channels))));
}

}  // namespace

void AugmentConfig::validate() const {
  for (double p : {flip_prob, node_drop_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("AugmentConfig: probability outside [0, 1]");
  }
  if (bbox_shift_px < 0 || score_jitter_std < 0 || bbox_scale_range < 0 || bbox_scale_range >= 1) {
    throw std::invalid_argument("AugmentConfig: jitter magnitudes must be >= 0 (scale range < 1)");
  }
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.flip_prob = 0.0;
  c.bbox_shift_px = 0.0;
  c.bbox_scale_range = 0.0;
  c.node_drop_prob = 0.0;
  c.score_jitter_std = 0.0;
  return c;
}

void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = {{"flip_prob", c.flip_prob},           {"bbox_shift_px", c.bbox_shift_px},
       {"bbox_scale_range", c.bbox_scale_range}, {"node_drop_prob", c.node_drop_prob},
       {"score_jitter_std", c.score_jitter_std}, {"rng_seed", c.rng_seed}};
}

void from_json(const nlohmann::json& j, AugmentConfig& c) {
  const AugmentConfig d;
  c.flip_prob = j.value("flip_prob", d.flip_prob);
  c.bbox_shift_px = j.value("bbox_shift_px", d.bbox_shift_px);
  c.bbox_scale_range = j.value("bbox_scale_range", d.bbox_scale_range);
  c.node_drop_prob = j.value("node_drop_prob", d.node_drop_prob);
  c.score_jitter_std = j.value("score_jitter_std", d.score_jitter_std);
  c.rng_seed = j.value("rng_seed", d.rng_seed);
}

assoc::ClusterObservation flip_observation(const assoc::ClusterObservation& obs,
                                           std::size_t positional_size, std::size_t visual_channels) {
  assoc::ClusterObservation out = obs;
  const double w = static_cast<double>(obs.image_width);
  const std::size_t plane = positional_size * positional_size;
  for (auto& n : out.nodes) {
    n.bbox = {w - n.bbox.x1, n.bbox.y0, w - n.bbox.x0, n.bbox.y1};
    mirror_rows(n.positional, positional_size);
    for (std::size_t k = 2 * plane; k < 3 * plane && k < n.positional.size(); ++k) {
      n.positional[k] = 1.0 - n.positional[k];
    }
    if (!n.visual.empty()) mirror_rows(n.visual, grid_side(n.visual.size(), visual_channels));
  }
  return out;
}

LabeledPair augment_pair(const LabeledPair& pair, const AugmentConfig& config, std::mt19937_64& rng) {
  config.validate();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  LabeledPair out = pair;

  auto side_of = [](const assoc::ClusterObservation& o) {
    return o.nodes.empty() ? assoc::kPositionalSize
                           : grid_side(o.nodes.front().positional.size(), assoc::kPositionalChannels);
  };
  const std::size_t side_a = side_of(pair.a), side_b = side_of(pair.b);
  auto channels_of = [](const assoc::ClusterObservation& o) {
    const std::size_t cells = assoc::kVisualSize * assoc::kVisualSize;
    return o.nodes.empty() ? std::size_t{1} : std::max<std::size_t>(1, o.nodes.front().visual.size() / cells);
  };

  if (u01(rng) < config.flip_prob) {
    out.a = flip_observation(out.a, side_a, channels_of(out.a));
    out.b = flip_observation(out.b, side_b, channels_of(out.b));
  }

  const bool jitter = config.bbox_shift_px > 0 || config.bbox_scale_range > 0;
  for (auto* obs : {&out.a, &out.b}) {
    const std::size_t side = obs == &out.a ? side_a : side_b;
    for (auto& n : obs->nodes) {
      const double dx = config.bbox_shift_px * (2 * u01(rng) - 1);
      const double dy = config.bbox_shift_px * (2 * u01(rng) - 1);
      const double sx = 1 + config.bbox_scale_range * (2 * u01(rng) - 1);
      const double sy = 1 + config.bbox_scale_range * (2 * u01(rng) - 1);
      if (!jitter) continue;
      const double cx = 0.5 * (n.bbox.x0 + n.bbox.x1) + dx, cy = 0.5 * (n.bbox.y0 + n.bbox.y1) + dy;
      const double hw = 0.5 * n.bbox.width() * sx, hh = 0.5 * n.bbox.height() * sy;
      n.bbox = {cx - hw, cy - hh, cx + hw, cy + hh};
      assoc::write_coordinate_channels(n.positional, n.bbox, obs->image_width, obs->image_height, side);
    }
  }

  // Drops, never the tag.
  std::vector<bool> keep_a(out.a.nodes.size(), true), keep_b(out.b.nodes.size(), true);
  for (auto* keep : {&keep_a, &keep_b}) {
    const auto& nodes = keep == &keep_a ? out.a.nodes : out.b.nodes;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const bool drop = u01(rng) < config.node_drop_prob;
      if (drop && !nodes[k].is_tag) (*keep)[k] = false;
    }
  }
  auto compact = [](assoc::ClusterObservation& obs, const std::vector<bool>& keep) {
    std::vector<long> index(keep.size(), -1);
    std::vector<assoc::DetectionNode> kept;
    for (std::size_t k = 0; k < keep.size(); ++k) {
      if (!keep[k]) continue;
      index[k] = static_cast<long>(kept.size());
      kept.push_back(std::move(obs.nodes[k]));
    }
    obs.nodes = std::move(kept);
    return index;
  };
  const auto map_a = compact(out.a, keep_a);
  const auto map_b = compact(out.b, keep_b);
  assoc::MatchLabels labels;
  for (auto i : pair.labels.unmatched_a)
    if (map_a[i] >= 0) labels.unmatched_a.push_back(map_a[i]);
  for (auto j : pair.labels.unmatched_b)
    if (map_b[j] >= 0) labels.unmatched_b.push_back(map_b[j]);
  for (auto [i, j] : pair.labels.matches) {
    if (map_a[i] >= 0 && map_b[j] >= 0) {
      labels.matches.emplace_back(map_a[i], map_b[j]);
    } else if (map_a[i] >= 0) {
      labels.unmatched_a.push_back(map_a[i]);
    } else if (map_b[j] >= 0) {
      labels.unmatched_b.push_back(map_b[j]);
    }
  }
  out.labels = std::move(labels);

  for (auto* obs : {&out.a, &out.b}) {
    for (auto& n : obs->nodes) {
      const double noise = gauss(rng);
      if (n.is_tag || config.score_jitter_std == 0.0) continue;
      n.cluster_score = std::clamp(n.cluster_score + config.score_jitter_std * noise, 0.0, 1.0);
    }
  }
  return out;
}

LabeledPair augment_pair(const LabeledPair& pair, const AugmentConfig& config) {
  std::mt19937_64 rng(config.rng_seed);
  return augment_pair(pair, config, rng);
}

}  // namespace fruitlet::train
