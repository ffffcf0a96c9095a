#include "fruitlet/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "fruitlet/assoc/positional.hpp"

namespace fruitlet::synth {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTagSizeMm = 30.0;
constexpr double kDepthSpreadMm = 30.0;
constexpr double kDepthChangeMm = 15.0;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

bool inside_ellipse(const sizing::EllipseParams& e, double x, double y) {
  const double dx = x - e.cx, dy = y - e.cy;
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double p = (c * dx + s * dy) / (0.5 * e.major_len);
  const double q = (-s * dx + c * dy) / (0.5 * e.minor_len);
  return p * p + q * q <= 1.0;
}

// Fraction of each pixel covered by the ellipse; pixel (u, v) is centered at
// (x0 + u, y0 + v).
sizing::Grid<double> coverage(const sizing::EllipseParams& e, long x0, long y0, std::size_t w,
                              std::size_t h, std::size_t ss) {
  sizing::Grid<double> out(w, h);
  const double step = 1.0 / static_cast<double>(ss);
  const double inv = 1.0 / static_cast<double>(ss * ss);
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      const double px = static_cast<double>(x0 + static_cast<long>(u));
      const double py = static_cast<double>(y0 + static_cast<long>(v));
      std::size_t hits = 0;
      for (std::size_t sy = 0; sy < ss; ++sy)
        for (std::size_t sx = 0; sx < ss; ++sx)
          hits += inside_ellipse(e, px - 0.5 + (sx + 0.5) * step, py - 0.5 + (sy + 0.5) * step);
      out.at(u, v) = static_cast<double>(hits) * inv;
    }
  }
  return out;
}

struct Object {
  std::string id;
  bool is_tag = false;
  bool is_cluster = false;
  double base_score = 0.0;
  std::vector<double> latent;
  double diameter_mm = 0.0;
  double elongation = 0.0;
  double angle = 0.0;
  double depth_offset_mm = 0.0;
  double off_x = 0.0;  // image offset from the tag at the tag's depth
  double off_y = 0.0;
};

class Renderer {
 public:
  Renderer(const SceneConfig& c) : c_(c) {
    std::mt19937_64 rng(c.appearance_seed);
    std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(c.latent_dim)));
    map_.resize(c.visual_channels * assoc::kVisualSize * assoc::kVisualSize * c.latent_dim);
    for (auto& m : map_) m = g(rng);
  }

  std::vector<double> visual(const std::vector<double>& latent, std::mt19937_64& rng) const {
    std::normal_distribution<double> noise(0.0, c_.descriptor_noise_std);
    const std::size_t len = c_.visual_channels * assoc::kVisualSize * assoc::kVisualSize;
    std::vector<double> out(len);
    for (std::size_t k = 0; k < len; ++k) {
      double acc = 0.0;
      for (std::size_t l = 0; l < c_.latent_dim; ++l) acc += map_[k * c_.latent_dim + l] * latent[l];
      out[k] = acc + (c_.descriptor_noise_std > 0 ? noise(rng) : 0.0);
    }
    return out;
  }

  // Renders one node at image position (cx, cy) and the given depth.
  void add_node(SyntheticObservation& so, const Object& obj, double cx, double cy, double depth_mm,
                double diameter_mm, double angle, const std::vector<double>& latent,
                double score, std::mt19937_64& rng) const {
    const double bf = c_.baseline_mm * c_.focal_px;
    sizing::EllipseParams e;
    e.cx = cx;
    e.cy = cy;
    double hx, hy;
    if (obj.is_tag) {
      const double side = c_.focal_px * kTagSizeMm / depth_mm;
      e.major_len = e.minor_len = side;
      hx = hy = 0.5 * side;
    } else {
      e.minor_len = c_.focal_px * diameter_mm / depth_mm;
      e.major_len = e.minor_len * (1.0 + obj.elongation);
      e.angle = angle;
      const double a = 0.5 * e.major_len, b = 0.5 * e.minor_len;
      const double ca = std::cos(angle), sa = std::sin(angle);
      hx = std::sqrt(a * a * ca * ca + b * b * sa * sa);
      hy = std::sqrt(a * a * sa * sa + b * b * ca * ca);
    }
    const long max_x = static_cast<long>(c_.image_width) - 1;
    const long max_y = static_cast<long>(c_.image_height) - 1;
    const long x0 = std::clamp(static_cast<long>(std::floor(cx - hx - 2)), 0L, max_x - 1);
    const long y0 = std::clamp(static_cast<long>(std::floor(cy - hy - 2)), 0L, max_y - 1);
    const long x1 = std::clamp(static_cast<long>(std::ceil(cx + hx + 2)), x0 + 1, max_x);
    const long y1 = std::clamp(static_cast<long>(std::ceil(cy + hy + 2)), y0 + 1, max_y);
    const std::size_t w = static_cast<std::size_t>(x1 - x0 + 1), h = static_cast<std::size_t>(y1 - y0 + 1);

    sizing::ProbMask mask(w, h);
    sizing::DisparityPatch disp(w, h);
    const double d_obj = bf / depth_mm, d_bg = bf / (depth_mm + c_.background_offset_mm);
    if (obj.is_tag) {
      std::fill(mask.values.begin(), mask.values.end(), 0.98);
      std::fill(disp.values.begin(), disp.values.end(), d_obj);
    } else {
      const auto cov = coverage(e, x0, y0, w, h, 4);
      for (std::size_t k = 0; k < cov.values.size(); ++k) {
        mask.values[k] = 0.02 + 0.96 * cov.values[k];
        disp.values[k] = cov.values[k] > 0.0 ? d_obj : d_bg;
      }
    }

    assoc::DetectionNode node;
    node.id = obj.id;
    node.bbox = {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1),
                 static_cast<double>(y1)};
    node.cluster_score = score;
    node.is_tag = obj.is_tag;
    node.is_cluster = obj.is_cluster;
    node.positional = assoc::build_positional(disp, mask, node.bbox, c_.image_width, c_.image_height,
                                              c_.max_disparity(), c_.positional_size);
    node.visual = visual(latent, rng);
    so.obs.nodes.push_back(std::move(node));
    so.masks.push_back(std::move(mask));
    so.disparities.push_back(std::move(disp));
    so.truth.push_back({obj.id, obj.is_tag ? 0.0 : diameter_mm, depth_mm, e});
  }

 private:
  const SceneConfig& c_;
  std::vector<double> map_;
};

}  // namespace

void SceneConfig::validate() const {
  require(fruitlets_min >= 1 && fruitlets_min <= fruitlets_max, "SceneConfig: empty fruitlet range");
  require(diameter_min_mm > 0 && diameter_min_mm <= diameter_max_mm, "SceneConfig: bad diameter range");
  require(growth_min_mm <= growth_max_mm && diameter_min_mm + growth_min_mm > 0,
          "SceneConfig: bad growth range");
  for (double p : {drop_prob, non_cluster_prob}) {
    require(p >= 0.0 && p <= 1.0, "SceneConfig: probability outside [0, 1]");
  }
  for (double s : {camera_shift_px, position_jitter_px, appearance_drift_std, descriptor_noise_std,
                   score_noise_std}) {
    require(s >= 0.0, "SceneConfig: negative jitter magnitude");
  }
  require(image_width >= 64 && image_height >= 64, "SceneConfig: image too small");
  require(focal_px > 0 && baseline_mm > 0, "SceneConfig: camera parameters must be positive");
  require(depth_min_mm > kDepthSpreadMm + kDepthChangeMm + 1 && depth_min_mm <= depth_max_mm,
          "SceneConfig: bad depth range");
  require(visual_channels > 0 && positional_size > 1 && latent_dim > 0, "SceneConfig: empty grids");
}

double SceneConfig::max_disparity() const {
  return baseline_mm * focal_px / (depth_min_mm - kDepthSpreadMm - kDepthChangeMm);
}

void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = {{"fruitlets_min", c.fruitlets_min},
       {"fruitlets_max", c.fruitlets_max},
       {"diameter_min_mm", c.diameter_min_mm},
       {"diameter_max_mm", c.diameter_max_mm},
       {"growth_min_mm", c.growth_min_mm},
       {"growth_max_mm", c.growth_max_mm},
       {"drop_prob", c.drop_prob},
       {"non_cluster_prob", c.non_cluster_prob},
       {"camera_shift_px", c.camera_shift_px},
       {"position_jitter_px", c.position_jitter_px},
       {"appearance_drift_std", c.appearance_drift_std},
       {"descriptor_noise_std", c.descriptor_noise_std},
       {"score_noise_std", c.score_noise_std},
       {"image_width", c.image_width},
       {"image_height", c.image_height},
       {"focal_px", c.focal_px},
       {"baseline_mm", c.baseline_mm},
       {"depth_min_mm", c.depth_min_mm},
       {"depth_max_mm", c.depth_max_mm},
       {"background_offset_mm", c.background_offset_mm},
       {"visual_channels", c.visual_channels},
       {"positional_size", c.positional_size},
       {"latent_dim", c.latent_dim},
       {"appearance_seed", c.appearance_seed},
       {"day_a", c.day_a},
       {"day_b", c.day_b}};
}

void from_json(const nlohmann::json& j, SceneConfig& c) {
  const SceneConfig d;
#define FRUITLET_FIELD(name) c.name = j.value(#name, d.name)
  FRUITLET_FIELD(fruitlets_min);
  FRUITLET_FIELD(fruitlets_max);
  FRUITLET_FIELD(diameter_min_mm);
  FRUITLET_FIELD(diameter_max_mm);
  FRUITLET_FIELD(growth_min_mm);
  FRUITLET_FIELD(growth_max_mm);
  FRUITLET_FIELD(drop_prob);
  FRUITLET_FIELD(non_cluster_prob);
  FRUITLET_FIELD(camera_shift_px);
  FRUITLET_FIELD(position_jitter_px);
  FRUITLET_FIELD(appearance_drift_std);
  FRUITLET_FIELD(descriptor_noise_std);
  FRUITLET_FIELD(score_noise_std);
  FRUITLET_FIELD(image_width);
  FRUITLET_FIELD(image_height);
  FRUITLET_FIELD(focal_px);
  FRUITLET_FIELD(baseline_mm);
  FRUITLET_FIELD(depth_min_mm);
  FRUITLET_FIELD(depth_max_mm);
  FRUITLET_FIELD(background_offset_mm);
  FRUITLET_FIELD(visual_channels);
  FRUITLET_FIELD(positional_size);
  FRUITLET_FIELD(latent_dim);
  FRUITLET_FIELD(appearance_seed);
  FRUITLET_FIELD(day_a);
  FRUITLET_FIELD(day_b);
#undef FRUITLET_FIELD
}

SyntheticPair gen_pair(const SceneConfig& c, std::uint64_t seed) {
  c.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto latent = [&] {
    std::vector<double> v(c.latent_dim);
    for (auto& x : v) x = gauss(rng);
    return v;
  };
  auto jittered_score = [&](double base) {
    return c.score_noise_std > 0 ? std::clamp(base + c.score_noise_std * gauss(rng), 0.0, 1.0) : base;
  };

  // Scene layout on day A.
  const std::size_t count =
      std::uniform_int_distribution<std::size_t>(c.fruitlets_min, c.fruitlets_max)(rng);
  const double tag_depth = uniform(c.depth_min_mm, c.depth_max_mm);
  const double scale = c.focal_px / tag_depth;  // px per mm at the tag
  const double tag_x = 0.5 * c.image_width + uniform(-0.1, 0.1) * c.image_width;
  const double tag_y = 0.5 * c.image_height + uniform(-0.1, 0.1) * c.image_height;

  std::vector<Object> objects;
  Object tag;
  tag.id = "tag";
  tag.is_tag = true;
  tag.base_score = 1.0;
  tag.latent = latent();
  objects.push_back(tag);
  const double phase = uniform(0.0, 2 * kPi);
  for (std::size_t i = 0; i < count; ++i) {
    Object f;
    f.id = "f" + std::to_string(i);
    f.is_cluster = true;
    f.base_score = uniform(0.6, 0.98);
    f.latent = latent();
    f.diameter_mm = uniform(c.diameter_min_mm, c.diameter_max_mm);
    f.elongation = uniform(0.0, 0.2);
    f.angle = uniform(0.0, kPi);
    f.depth_offset_mm = uniform(-kDepthSpreadMm, kDepthSpreadMm);
    const double theta = phase + 2 * kPi * static_cast<double>(i) / static_cast<double>(count) + uniform(-0.3, 0.3);
    const double radius_mm = uniform(18.0, 45.0);
    f.off_x = scale * radius_mm * std::cos(theta);
    f.off_y = scale * radius_mm * std::sin(theta);
    objects.push_back(std::move(f));
  }
  if (u01(rng) < c.non_cluster_prob) {
    Object f;
    f.id = "x0";
    f.base_score = uniform(0.02, 0.35);
    f.latent = latent();
    f.diameter_mm = uniform(c.diameter_min_mm, c.diameter_max_mm);
    f.elongation = uniform(0.0, 0.2);
    f.angle = uniform(0.0, kPi);
    f.depth_offset_mm = uniform(-kDepthSpreadMm, kDepthSpreadMm);
    const double theta = uniform(0.0, 2 * kPi), radius_mm = uniform(55.0, 75.0);
    f.off_x = scale * radius_mm * std::cos(theta);
    f.off_y = scale * radius_mm * std::sin(theta);
    objects.push_back(std::move(f));
  }

  // Visibility: a dropped clustered fruitlet shows on one day only.
  std::vector<bool> in_a(objects.size(), true), in_b(objects.size(), true);
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (!objects[i].is_cluster) continue;
    if (u01(rng) < c.drop_prob) (u01(rng) < 0.5 ? in_a : in_b)[i] = false;
  }

  // Day B camera and growth.
  const double shift_x = uniform(-c.camera_shift_px, c.camera_shift_px);
  const double shift_y = uniform(-c.camera_shift_px, c.camera_shift_px);
  const double depth_change = uniform(-kDepthChangeMm, kDepthChangeMm);
  std::vector<double> growth(objects.size(), 0.0), jx(objects.size(), 0.0), jy(objects.size(), 0.0),
      dangle(objects.size(), 0.0);
  std::vector<std::vector<double>> latent_b(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (!objects[i].is_tag) {
      growth[i] = uniform(c.growth_min_mm, c.growth_max_mm);
      jx[i] = c.position_jitter_px * gauss(rng);
      jy[i] = c.position_jitter_px * gauss(rng);
      dangle[i] = 0.2 * gauss(rng);
    }
    latent_b[i] = objects[i].latent;
    for (auto& v : latent_b[i]) v += c.appearance_drift_std * gauss(rng);
  }

  const Renderer renderer(c);
  SyntheticPair pair;
  auto init = [&](SyntheticObservation& so, const std::string& day) {
    so.obs.cluster_id = "c" + std::to_string(seed);
    so.obs.day = day;
    so.obs.image_width = c.image_width;
    so.obs.image_height = c.image_height;
    so.obs.max_disparity = c.max_disparity();
  };
  init(pair.a, c.day_a);
  init(pair.b, c.day_b);

  std::vector<long> index_a(objects.size(), -1), index_b(objects.size(), -1);
  const double tag_depth_b = tag_depth + depth_change;
  const double ratio = tag_depth / tag_depth_b;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const Object& o = objects[i];
    if (in_a[i]) {
      index_a[i] = static_cast<long>(pair.a.obs.nodes.size());
      renderer.add_node(pair.a, o, tag_x + o.off_x, tag_y + o.off_y, tag_depth + o.depth_offset_mm,
                        o.diameter_mm, o.angle, o.latent, jittered_score(o.base_score), rng);
    }
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const Object& o = objects[i];
    if (in_b[i]) {
      index_b[i] = static_cast<long>(pair.b.obs.nodes.size());
      double angle = std::fmod(o.angle + dangle[i], kPi);
      if (angle < 0) angle += kPi;
      renderer.add_node(pair.b, o, tag_x + shift_x + o.off_x * ratio + jx[i],
                        tag_y + shift_y + o.off_y * ratio + jy[i], tag_depth_b + o.depth_offset_mm,
                        o.diameter_mm + growth[i], angle, latent_b[i], jittered_score(o.base_score), rng);
    }
  }

  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (!objects[i].is_cluster) continue;
    if (index_a[i] >= 0 && index_b[i] >= 0) {
      pair.labels.matches.emplace_back(index_a[i], index_b[i]);
    } else if (index_a[i] >= 0) {
      pair.labels.unmatched_a.push_back(index_a[i]);
    } else {
      pair.labels.unmatched_b.push_back(index_b[i]);
    }
  }
  return pair;
}

void SizingSceneConfig::validate() const {
  require(diameter_min_mm > 0 && diameter_min_mm <= diameter_max_mm, "SizingSceneConfig: bad diameter range");
  require(depth_min_mm > 0 && depth_min_mm <= depth_max_mm, "SizingSceneConfig: bad depth range");
  require(focal_px > 0 && baseline_mm > 0, "SizingSceneConfig: camera parameters must be positive");
  require(background_offset_mm > 0, "SizingSceneConfig: background must lie behind the fruitlet");
  require(max_elongation >= 0 && supersample >= 1 && center_jitter_px >= 0, "SizingSceneConfig: bad rendering settings");
}

SizingScene gen_sizing_scene(const SizingSceneConfig& c, std::uint64_t seed) {
  c.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  SizingScene scene;
  scene.true_diameter_mm = c.diameter_mm > 0 ? c.diameter_mm : uniform(c.diameter_min_mm, c.diameter_max_mm);
  scene.depth_mm = c.depth_mm > 0 ? c.depth_mm : uniform(c.depth_min_mm, c.depth_max_mm);
  scene.baseline_mm = c.baseline_mm;
  const double elongation = c.elongation >= 0 ? c.elongation : uniform(0.0, c.max_elongation);
  const double angle = uniform(0.0, kPi);
  const double jitter_x = uniform(-c.center_jitter_px, c.center_jitter_px);
  const double jitter_y = uniform(-c.center_jitter_px, c.center_jitter_px);

  auto& e = scene.ellipse;
  e.minor_len = c.focal_px * scene.true_diameter_mm / scene.depth_mm;
  e.major_len = e.minor_len * (1.0 + elongation);
  e.angle = elongation > 0 ? angle : 0.0;

  const std::size_t needed = static_cast<std::size_t>(std::ceil(e.major_len)) + 2 * c.margin_px;
  const std::size_t side = c.crop_px > 0 ? c.crop_px : needed;
  if (static_cast<double>(side) < e.major_len + 4.0) {
    throw std::invalid_argument("gen_sizing_scene: ellipse of " + std::to_string(e.major_len) +
                                " px exceeds the " + std::to_string(side) + " px crop");
  }
  e.cx = 0.5 * static_cast<double>(side - 1) + jitter_x;
  e.cy = 0.5 * static_cast<double>(side - 1) + jitter_y;

  scene.mask = coverage(e, 0, 0, side, side, c.supersample);
  scene.disparity = sizing::DisparityPatch(side, side);
  const double bf = c.baseline_mm * c.focal_px;
  const double d_fruit = bf / scene.depth_mm, d_bg = bf / (scene.depth_mm + c.background_offset_mm);
  for (std::size_t k = 0; k < scene.mask.values.size(); ++k) {
    scene.disparity.values[k] = scene.mask.values[k] > 0.0 ? d_fruit : d_bg;
  }
  return scene;
}

}  // namespace fruitlet::synth
