#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "fruitlet/assoc/positional.hpp"
#include "fruitlet/train/trainer.hpp"
#include "fruitlet/util/encoding.hpp"
#include "random_observation.hpp"

namespace {

using namespace fruitlet;
using namespace fruitlet::train;

synth::SceneConfig scene_for(const assoc::NetConfig& net) {
  synth::SceneConfig c;
  c.visual_channels = net.visual_channels;
  c.positional_size = net.positional_size;
  return c;
}

LabeledPair synthetic(std::uint64_t seed, const synth::SceneConfig& c) {
  return SyntheticPairSource(c, seed, 1).get(0);
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fruitlet_train_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

void expect_near_obs(const assoc::ClusterObservation& x, const assoc::ClusterObservation& y) {
  ASSERT_EQ(x.nodes.size(), y.nodes.size());
  for (std::size_t k = 0; k < x.nodes.size(); ++k) {
    const auto &a = x.nodes[k], &b = y.nodes[k];
    EXPECT_EQ(a.id, b.id);
    EXPECT_NEAR(a.bbox.x0, b.bbox.x0, 1e-9);
    EXPECT_NEAR(a.bbox.x1, b.bbox.x1, 1e-9);
    ASSERT_EQ(a.positional.size(), b.positional.size());
    for (std::size_t i = 0; i < a.positional.size(); ++i) ASSERT_NEAR(a.positional[i], b.positional[i], 1e-12);
    EXPECT_EQ(a.visual, b.visual);
  }
}

// Every clustered node appears exactly once in the labels, matched ids agree.
void expect_consistent(const LabeledPair& p) {
  EXPECT_NO_THROW(assoc::validate(p.labels, p.a, p.b));
  std::multiset<std::size_t> seen_a, seen_b;
  for (auto [i, j] : p.labels.matches) {
    EXPECT_EQ(p.a.nodes[i].id, p.b.nodes[j].id);
    seen_a.insert(i);
    seen_b.insert(j);
  }
  seen_a.insert(p.labels.unmatched_a.begin(), p.labels.unmatched_a.end());
  seen_b.insert(p.labels.unmatched_b.begin(), p.labels.unmatched_b.end());
  for (std::size_t i = 0; i < p.a.nodes.size(); ++i) EXPECT_EQ(seen_a.count(i), p.a.nodes[i].is_cluster ? 1u : 0u);
  for (std::size_t j = 0; j < p.b.nodes.size(); ++j) EXPECT_EQ(seen_b.count(j), p.b.nodes[j].is_cluster ? 1u : 0u);
}

TEST(Augment, NoneIsIdentity) {
  const auto cfg = fruitlet::testing::tiny_config();
  const auto pair = synthetic(3, scene_for(cfg));
  const auto out = augment_pair(pair, AugmentConfig::none());
  EXPECT_EQ(out.a, pair.a);
  EXPECT_EQ(out.b, pair.b);
  EXPECT_EQ(out.labels, pair.labels);
}

TEST(Augment, FlipTwiceIsIdentity) {
  const auto cfg = fruitlet::testing::tiny_config();
  const auto pair = synthetic(4, scene_for(cfg));
  const auto once = flip_observation(pair.a, cfg.positional_size, cfg.visual_channels);
  EXPECT_NE(once.nodes[0].visual, pair.a.nodes[0].visual);
  expect_near_obs(flip_observation(once, cfg.positional_size, cfg.visual_channels), pair.a);
}

TEST(Augment, FlippedCoordinatesMatchFlippedBox) {
  const auto cfg = fruitlet::testing::tiny_config();
  const auto pair = synthetic(5, scene_for(cfg));
  const auto flipped = flip_observation(pair.a, cfg.positional_size, cfg.visual_channels);
  for (const auto& n : flipped.nodes) {
    auto expected = n.positional;
    assoc::write_coordinate_channels(expected, n.bbox, flipped.image_width, flipped.image_height,
                                     cfg.positional_size);
    for (std::size_t i = 0; i < expected.size(); ++i) ASSERT_NEAR(n.positional[i], expected[i], 1e-12);
  }
}

TEST(Augment, SameSeedSameOutput) {
  const auto cfg = fruitlet::testing::tiny_config();
  const auto pair = synthetic(6, scene_for(cfg));
  AugmentConfig a;
  a.rng_seed = 77;
  const auto x = augment_pair(pair, a), y = augment_pair(pair, a);
  EXPECT_EQ(x.a, y.a);
  EXPECT_EQ(x.b, y.b);
  EXPECT_EQ(x.labels, y.labels);
}

TEST(Augment, DropsKeepLabelsConsistent) {
  const auto cfg = fruitlet::testing::tiny_config();
  AugmentConfig a;
  a.node_drop_prob = 0.4;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto pair = synthetic(seed, scene_for(cfg));
    a.rng_seed = seed;
    const auto out = augment_pair(pair, a);
    expect_consistent(out);
    ASSERT_FALSE(out.a.nodes.empty());
    EXPECT_TRUE(out.a.nodes[0].is_tag);
    EXPECT_EQ(out.a.nodes[0].cluster_score, pair.a.nodes[0].cluster_score);
    for (const auto& n : out.b.nodes) {
      EXPECT_GE(n.cluster_score, 0.0);
      EXPECT_LE(n.cluster_score, 1.0);
    }
    EXPECT_NO_THROW(assoc::validate(out.b, cfg.visual_channels, cfg.positional_size));
  }
}

TEST(Augment, FullDropLeavesOnlyTags) {
  const auto cfg = fruitlet::testing::tiny_config();
  AugmentConfig a = AugmentConfig::none();
  a.node_drop_prob = 1.0;
  const auto out = augment_pair(synthetic(8, scene_for(cfg)), a);
  EXPECT_EQ(out.a.nodes.size(), 1u);
  EXPECT_EQ(out.b.nodes.size(), 1u);
  EXPECT_TRUE(out.labels.matches.empty());
  EXPECT_TRUE(out.labels.unmatched_a.empty());
}

TEST(Augment, RejectsBadConfig) {
  AugmentConfig a;
  a.flip_prob = 1.5;
  EXPECT_THROW(a.validate(), std::invalid_argument);
  a = {};
  a.bbox_scale_range = 1.0;
  EXPECT_THROW(a.validate(), std::invalid_argument);
}

TEST(Train, OverfitsSinglePairAtDeskScale) {
  const assoc::NetConfig cfg;
  assoc::AssocNet net(cfg, 1);
  VectorPairSource data({synthetic(11, scene_for(cfg))});
  TrainConfig tc;
  tc.epochs = 200;
  tc.accumulate = 1;
  tc.augment = false;
  const auto result = train::train(net, data, tc);
  ASSERT_EQ(result.loss_curve.size(), 200u);
  EXPECT_LT(result.loss_curve.back(), 0.5 * result.loss_curve.front());
}

TEST(Train, ZeroEpochsCheckpointIsInitialization) {
  const auto cfg = fruitlet::testing::tiny_config();
  assoc::AssocNet net(cfg, 2);
  const assoc::AssocNet init(cfg, 2);
  TrainConfig tc;
  tc.epochs = 0;
  tc.checkpoint_dir = scratch("zero");
  const auto result = train::train(net, SyntheticPairSource(scene_for(cfg), 0, 2), tc);
  EXPECT_TRUE(result.loss_curve.empty());
  EXPECT_EQ(result.last_checkpoint, tc.checkpoint_dir / "epoch-0000.json");
  const auto loaded = load_checkpoint(result.last_checkpoint);
  EXPECT_TRUE(loaded.params().identical(init.params()));
  EXPECT_EQ(loaded.config(), cfg);
}

TEST(Train, SameSeedsSameRun) {
  const auto cfg = fruitlet::testing::tiny_config();
  const SyntheticPairSource data(scene_for(cfg), 100, 6);
  TrainConfig tc;
  tc.epochs = 3;
  tc.accumulate = 4;
  tc.seed = 9;
  assoc::AssocNet x(cfg, 5), y(cfg, 5);
  const auto rx = train::train(x, data, tc), ry = train::train(y, data, tc);
  EXPECT_EQ(rx.loss_curve, ry.loss_curve);
  EXPECT_TRUE(x.params().identical(y.params()));
  tc.seed = 10;
  assoc::AssocNet z(cfg, 5);
  EXPECT_NE(train::train(z, data, tc).loss_curve, rx.loss_curve);
}

TEST(Train, CheckpointsEveryEpochWithLossCsv) {
  const auto cfg = fruitlet::testing::tiny_config();
  assoc::AssocNet net(cfg, 3);
  TrainConfig tc;
  tc.epochs = 2;
  tc.checkpoint_dir = scratch("every");
  const auto result = train::train(net, SyntheticPairSource(scene_for(cfg), 0, 3), tc);
  for (std::size_t e = 0; e <= 2; ++e) EXPECT_TRUE(std::filesystem::exists(tc.checkpoint_dir / checkpoint_name(e)));
  EXPECT_EQ(result.last_checkpoint, tc.checkpoint_dir / "epoch-0002.json");
  EXPECT_TRUE(load_checkpoint(result.last_checkpoint).params().identical(net.params()));
  const auto csv = util::read_file(tc.checkpoint_dir / "loss.csv");
  EXPECT_EQ(csv.rfind("epoch,loss\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Train, NonFiniteParameterAbortsWithLastGoodCheckpoint) {
  const auto cfg = fruitlet::testing::tiny_config();
  assoc::AssocNet net(cfg, 4);
  TrainConfig tc;
  tc.epochs = 3;
  tc.checkpoint_dir = scratch("nan");
  auto poison = [&](std::size_t epoch, double) {
    if (epoch == 1) net.params().get("dustbin").mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  };
  try {
    train::train(net, SyntheticPairSource(scene_for(cfg), 0, 2), tc, poison);
    FAIL() << "expected divergence";
  } catch (const TrainingDivergedError& e) {
    EXPECT_EQ(e.last_good_checkpoint(), tc.checkpoint_dir / "epoch-0001.json");
  }
}

TEST(Train, RejectsEmptyDataAndZeroAccumulation) {
  const auto cfg = fruitlet::testing::tiny_config();
  assoc::AssocNet net(cfg, 1);
  EXPECT_THROW(train::train(net, VectorPairSource({}), TrainConfig{}), std::invalid_argument);
  TrainConfig tc;
  tc.accumulate = 0;
  EXPECT_THROW(train::train(net, SyntheticPairSource(scene_for(cfg), 0, 1), tc), std::invalid_argument);
}

TEST(Train, ConfigJsonRoundTrip) {
  TrainConfig tc;
  tc.epochs = 7;
  tc.seed = 3;
  tc.adam.lr = 5e-4;
  tc.augmentation.flip_prob = 0.25;
  tc.checkpoint_dir = "ckpt";
  const TrainConfig back = nlohmann::json(tc).get<TrainConfig>();
  EXPECT_EQ(back.epochs, 7u);
  EXPECT_EQ(back.seed, 3u);
  EXPECT_EQ(back.adam.lr, 5e-4);
  EXPECT_EQ(back.augmentation, tc.augmentation);
  EXPECT_EQ(back.checkpoint_dir, tc.checkpoint_dir);
}

struct Toy {
  assoc::ClusterObservation a, b;
  assoc::MatchLabels labels;
};

// Tag plus three clustered fruitlets per side; 1 <-> 1 and 2 <-> 3 labeled,
// a3 and b2 unmatched.
Toy toy() {
  std::mt19937_64 rng(0);
  const auto cfg = fruitlet::testing::tiny_config();
  Toy t{fruitlet::testing::random_observation(rng, 4, cfg), fruitlet::testing::random_observation(rng, 4, cfg), {}};
  t.labels.matches = {{1, 1}, {2, 3}};
  t.labels.unmatched_a = {3};
  t.labels.unmatched_b = {2};
  return t;
}

TEST(ScorePair, PerfectPrediction) {
  const auto t = toy();
  assoc::MatchSet p{{{1, 1, 0.9}, {2, 3, 0.8}}, {3}, {2}};
  const auto o = score_pair(p, t.labels, t.a, t.b);
  EXPECT_EQ(o.correct, 6u);
  EXPECT_EQ(o.clustered, 6u);
  EXPECT_EQ(o.correct_matches, 2u);
}

TEST(ScorePair, EmptyPredictionCreditsLabeledUnmatched) {
  const auto t = toy();
  const auto o = score_pair(assoc::MatchSet{{}, {1, 2, 3}, {1, 2, 3}}, t.labels, t.a, t.b);
  EXPECT_EQ(o.correct, 2u);
  EXPECT_EQ(o.predicted_matches, 0u);
  EXPECT_EQ(o.labeled_matches, 2u);
}

TEST(ScorePair, SwappedMatchIsWrongOnBothSides) {
  const auto t = toy();
  assoc::MatchSet p{{{1, 3, 0.9}, {2, 1, 0.8}}, {3}, {2}};
  const auto o = score_pair(p, t.labels, t.a, t.b);
  EXPECT_EQ(o.correct, 2u);
  EXPECT_EQ(o.correct_matches, 0u);
}

TEST(Evaluate, CurveShapeAndBounds) {
  const auto cfg = fruitlet::testing::tiny_config();
  const assoc::AssocNet net(cfg, 1);
  const auto curve = evaluate(net, SyntheticPairSource(scene_for(cfg), 0, 5), default_thresholds());
  ASSERT_EQ(curve.thresholds.size(), 21u);
  EXPECT_EQ(curve.pairs_evaluated, 5u);
  for (std::size_t k = 0; k < 21; ++k) {
    for (double v : {curve.precision[k], curve.recall[k], curve.matching_score[k]}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    if (k > 0) EXPECT_LE(curve.recall[k], curve.recall[k - 1]);
  }
  // Nothing clears a threshold of 1, so recall is 0 and precision is vacuous.
  EXPECT_EQ(curve.recall.back(), 0.0);
  EXPECT_EQ(curve.precision.back(), 1.0);
}

TEST(Evaluate, PairsWithoutClusterAreExcluded) {
  const auto cfg = fruitlet::testing::tiny_config();
  auto pair = synthetic(1, scene_for(cfg));
  for (auto* o : {&pair.a, &pair.b}) o->nodes.resize(1);
  pair.labels = {};
  const auto curve = evaluate(assoc::AssocNet(cfg, 1), VectorPairSource({pair}), {0.5});
  EXPECT_EQ(curve.pairs_evaluated, 0u);
  EXPECT_EQ(curve.pairs_excluded, 1u);
}

TEST(Evaluate, CsvFormat) {
  EvalCurve c;
  c.thresholds = {0.5};
  c.precision = {1.0};
  c.recall = {0.25};
  c.matching_score = {2.0 / 3.0};
  EXPECT_EQ(eval_csv(c), "threshold,precision,recall,matching_score\n0.500000,1.000000,0.250000,0.666667\n");
}

}  // namespace
