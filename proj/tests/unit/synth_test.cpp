#include <gtest/gtest.h>

#include <set>

#include "fruitlet/assoc/network.hpp"
#include "fruitlet/synth/synth.hpp"

namespace {

using namespace fruitlet;
using namespace fruitlet::synth;

SceneConfig quiet_config() {
  SceneConfig c;
  c.drop_prob = 0.0;
  c.camera_shift_px = 0.0;
  c.position_jitter_px = 0.0;
  c.appearance_drift_std = 0.0;
  c.descriptor_noise_std = 0.0;
  c.score_noise_std = 0.0;
  return c;
}

TEST(GenPair, NoDropsGiveIdentityMatches) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = gen_pair(quiet_config(), seed);
    EXPECT_TRUE(p.labels.unmatched_a.empty());
    EXPECT_TRUE(p.labels.unmatched_b.empty());
    ASSERT_FALSE(p.labels.matches.empty());
    for (auto [i, j] : p.labels.matches) {
      EXPECT_EQ(i, j);
      EXPECT_EQ(p.a.obs.nodes[i].id, p.b.obs.nodes[j].id);
    }
    const std::size_t clustered = std::count_if(p.a.obs.nodes.begin(), p.a.obs.nodes.end(),
                                                [](const auto& n) { return n.is_cluster; });
    EXPECT_EQ(p.labels.matches.size(), clustered);
  }
}

TEST(GenPair, SameSeedSameOutput) {
  const SceneConfig c;
  const auto p = gen_pair(c, 42), q = gen_pair(c, 42);
  EXPECT_EQ(p.a.obs, q.a.obs);
  EXPECT_EQ(p.b.obs, q.b.obs);
  EXPECT_EQ(p.labels, q.labels);
  EXPECT_EQ(p.a.masks, q.a.masks);
  EXPECT_EQ(p.b.disparities, q.b.disparities);
  EXPECT_NE(gen_pair(c, 43).a.obs, p.a.obs);
}

TEST(GenPair, AllDroppedGivesNoMatches) {
  SceneConfig c;
  c.drop_prob = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = gen_pair(c, seed);
    EXPECT_TRUE(p.labels.matches.empty());
    std::set<std::string> ids;
    for (auto i : p.labels.unmatched_a) ids.insert(p.a.obs.nodes[i].id);
    for (auto j : p.labels.unmatched_b) EXPECT_TRUE(ids.insert(p.b.obs.nodes[j].id).second);
    std::size_t clustered = 0;
    for (const auto* o : {&p.a.obs, &p.b.obs})
      for (const auto& n : o->nodes) clustered += n.is_cluster;
    EXPECT_EQ(p.labels.unmatched_a.size() + p.labels.unmatched_b.size(), clustered);
  }
}

TEST(GenPair, StructuralInvariants) {
  SceneConfig c;
  c.drop_prob = 0.3;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto p = gen_pair(c, seed);
    for (const auto* so : {&p.a, &p.b}) {
      EXPECT_NO_THROW(assoc::validate(so->obs, c.visual_channels, c.positional_size));
      EXPECT_TRUE(so->obs.nodes.front().is_tag);
      EXPECT_EQ(so->masks.size(), so->obs.nodes.size());
      EXPECT_EQ(so->truth.size(), so->obs.nodes.size());
      for (std::size_t k = 0; k < so->obs.nodes.size(); ++k) {
        const auto& n = so->obs.nodes[k];
        EXPECT_EQ(so->masks[k].width, static_cast<std::size_t>(n.bbox.width()) + 1);
        EXPECT_EQ(so->masks[k].height, static_cast<std::size_t>(n.bbox.height()) + 1);
      }
    }
    EXPECT_NO_THROW(assoc::validate(p.labels, p.a.obs, p.b.obs));
    // K counts every clustered fruitlet of the scene, whichever day shows it.
    std::set<std::string> ids;
    for (const auto* o : {&p.a.obs, &p.b.obs})
      for (const auto& n : o->nodes)
        if (n.is_cluster) ids.insert(n.id);
    EXPECT_GE(ids.size(), c.fruitlets_min);
    EXPECT_LE(ids.size(), c.fruitlets_max);
  }
}

TEST(GenPair, FruitletsGrowBetweenDays) {
  const auto p = gen_pair(quiet_config(), 5);
  for (auto [i, j] : p.labels.matches) {
    const double g = p.b.truth[j].diameter_mm - p.a.truth[i].diameter_mm;
    EXPECT_GE(g, SceneConfig{}.growth_min_mm);
    EXPECT_LE(g, SceneConfig{}.growth_max_mm);
  }
}

TEST(GenPair, ConfigJsonRoundTrip) {
  SceneConfig c;
  c.drop_prob = 0.25;
  c.day_b = "2021-05-26";
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<SceneConfig>(), c);
  c.fruitlets_min = 7;
  EXPECT_THROW(gen_pair(c, 1), std::invalid_argument);
}

sizing::FruitletSize measure(const SizingScene& s) {
  return sizing::measure_fruitlet(s.mask, s.disparity, {.baseline_mm = s.baseline_mm});
}

TEST(GenSizingScene, TenMillimetreFruitletRecovered) {
  SizingSceneConfig c;
  c.diameter_mm = 10.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = gen_sizing_scene(c, seed);
    EXPECT_NEAR(measure(s).size.diameter_mm, 10.0, 0.1);
  }
}

TEST(GenSizingScene, CenteredCircleFitsAsCircle) {
  SizingSceneConfig c;
  c.elongation = 0.0;
  c.center_jitter_px = 0.0;
  const auto s = gen_sizing_scene(c, 3);
  const auto e = measure(s).ellipse;
  EXPECT_NEAR(e.major_len, e.minor_len, 1e-6);
}

TEST(GenSizingScene, DepthChangesPixelsNotMillimetres) {
  SizingSceneConfig c;
  c.diameter_mm = 8.0;
  c.depth_mm = 90.0;
  const auto near = measure(gen_sizing_scene(c, 11));
  c.depth_mm = 135.0;
  const auto far = measure(gen_sizing_scene(c, 11));
  EXPECT_GT(near.ellipse.minor_len, far.ellipse.minor_len);
  EXPECT_NEAR(near.size.diameter_mm / far.size.diameter_mm, 1.0, 0.01);
}

TEST(GenSizingScene, SmallCropRejected) {
  SizingSceneConfig c;
  c.crop_px = 40;
  EXPECT_THROW(gen_sizing_scene(c, 0), std::invalid_argument);
}

TEST(GenSizingScene, Deterministic) {
  const auto a = gen_sizing_scene({}, 8), b = gen_sizing_scene({}, 8);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.disparity, b.disparity);
  EXPECT_EQ(a.true_diameter_mm, b.true_diameter_mm);
}

}  // namespace
