#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fruitlet/assoc/network.hpp"
#include "fruitlet/synth/synth.hpp"
#include "fruitlet/tensor/optimizer.hpp"

namespace fruitlet::train {

struct LabeledPair {
  assoc::ClusterObservation a;
  assoc::ClusterObservation b;
  assoc::MatchLabels labels;
};

struct AugmentConfig {
  double flip_prob = 0.5;
  double bbox_shift_px = 4.0;
  double bbox_scale_range = 0.1;  // each side scaled by U(1 - r, 1 + r)
  double node_drop_prob = 0.1;
  double score_jitter_std = 0.05;
  std::uint64_t rng_seed = 0;

  void validate() const;
  /// No-op settings.
  static AugmentConfig none();
  bool operator==(const AugmentConfig&) const = default;
};

void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);

/// Horizontal flip of both images (x -> width - x on boxes; grids mirrored and
/// the x channel replaced by 1 - x), independent box jitter with recomputed
/// coordinate channels, node drops with consistent relabeling, and clamped
/// Gaussian score noise. The tag node is never dropped or re-scored.
LabeledPair augment_pair(const LabeledPair& pair, const AugmentConfig& config, std::mt19937_64& rng);
LabeledPair augment_pair(const LabeledPair& pair, const AugmentConfig& config);

/// Mirror one observation horizontally.
assoc::ClusterObservation flip_observation(const assoc::ClusterObservation& obs,
                                           std::size_t positional_size, std::size_t visual_channels);

/// Random-access pairs, materialized on demand.
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual std::size_t size() const = 0;
  virtual LabeledPair get(std::size_t index) const = 0;
};

class VectorPairSource : public PairSource {
 public:
  explicit VectorPairSource(std::vector<LabeledPair> pairs) : pairs_(std::move(pairs)) {}
  std::size_t size() const override { return pairs_.size(); }
  LabeledPair get(std::size_t index) const override { return pairs_.at(index); }

 private:
  std::vector<LabeledPair> pairs_;
};

/// Pair i is gen_pair(config, seeds[i]).
class SyntheticPairSource : public PairSource {
 public:
  SyntheticPairSource(synth::SceneConfig config, std::vector<std::uint64_t> seeds);
  /// Seeds first_seed, first_seed + 1, ...
  SyntheticPairSource(synth::SceneConfig config, std::uint64_t first_seed, std::size_t count);
  std::size_t size() const override { return seeds_.size(); }
  LabeledPair get(std::size_t index) const override;

 private:
  synth::SceneConfig config_;
  std::vector<std::uint64_t> seeds_;
};

class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(const std::string& what, std::filesystem::path last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  /// Checkpoint written before the divergence; empty if none was saved.
  const std::filesystem::path& last_good_checkpoint() const { return last_good_; }

 private:
  std::filesystem::path last_good_;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::uint64_t seed = 0;  // shuffling and augmentation
  tensor::AdamOptions adam;
  std::size_t accumulate = 8;  // pairs per optimizer step
  bool augment = true;
  AugmentConfig augmentation;
  std::filesystem::path checkpoint_dir;  // empty disables checkpoints

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainResult {
  std::vector<double> loss_curve;  // mean training loss per epoch
  std::filesystem::path last_checkpoint;
};

/// Per-epoch progress hook: (epoch starting at 1, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

/// Adam on the partial assignment loss. Checkpoints land in checkpoint_dir as
/// epoch-NNNN.json (epoch 0 is the initialization) plus loss.csv. A non-finite
/// loss or gradient throws TrainingDivergedError naming the last good
/// checkpoint. Deterministic given the network seed and config.seed.
TrainResult train(assoc::AssocNet& net, const PairSource& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Name of the checkpoint for an epoch, e.g. epoch-0003.json.
std::string checkpoint_name(std::size_t epoch);

/// Stores the network config with the parameters so a checkpoint is
/// self-describing.
void save_checkpoint(const assoc::AssocNet& net, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object());
assoc::AssocNet load_checkpoint(const std::filesystem::path& path);

struct EvalCurve {
  std::vector<double> thresholds;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> matching_score;
  std::size_t pairs_evaluated = 0;
  std::size_t pairs_excluded = 0;  // no clustered fruitlets
};

/// 0.00, 0.05, ..., 1.00.
std::vector<double> default_thresholds();

struct PairOutcome {
  std::size_t correct = 0;  // clustered fruitlets whose association is right
  std::size_t clustered = 0;
  std::size_t predicted_matches = 0;
  std::size_t correct_matches = 0;
  std::size_t labeled_matches = 0;
};

/// Scores one prediction against labels. A clustered fruitlet is correct when
/// its predicted partner equals its labeled partner, or when it is predicted
/// and labeled unmatched. Unlabeled clustered fruitlets count as unmatched.
PairOutcome score_pair(const assoc::MatchSet& predicted, const assoc::MatchLabels& labels,
                       const assoc::ClusterObservation& a, const assoc::ClusterObservation& b);

/// Matching score is the mean over pairs of correct / clustered. Precision and
/// recall pool matches over all pairs; each is 1 when its denominator is 0.
EvalCurve evaluate(const assoc::AssocNet& net, const PairSource& data,
                   const std::vector<double>& thresholds);

/// threshold,precision,recall,matching_score with fixed six-decimal formatting.
std::string eval_csv(const EvalCurve& curve);

}  // namespace fruitlet::train
