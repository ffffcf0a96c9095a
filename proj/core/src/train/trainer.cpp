#include "fruitlet/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <numeric>

#include "fruitlet/tensor/ops.hpp"
#include "fruitlet/util/encoding.hpp"

namespace fruitlet::train {

namespace t = fruitlet::tensor;

SyntheticPairSource::SyntheticPairSource(synth::SceneConfig config, std::vector<std::uint64_t> seeds)
    : config_(std::move(config)), seeds_(std::move(seeds)) {
  config_.validate();
}

SyntheticPairSource::SyntheticPairSource(synth::SceneConfig config, std::uint64_t first_seed,
                                         std::size_t count)
    : SyntheticPairSource(std::move(config), [&] {
        std::vector<std::uint64_t> s(count);
        std::iota(s.begin(), s.end(), first_seed);
        return s;
      }()) {}

LabeledPair SyntheticPairSource::get(std::size_t index) const {
  auto p = synth::gen_pair(config_, seeds_.at(index));
  return {std::move(p.a.obs), std::move(p.b.obs), std::move(p.labels)};
}

void TrainConfig::validate() const {
  if (accumulate == 0) throw std::invalid_argument("TrainConfig: accumulate must be >= 1");
  if (!(adam.lr >= 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be >= 0");
  augmentation.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"seed", c.seed},
       {"lr", c.adam.lr},
       {"beta1", c.adam.beta1},
       {"beta2", c.adam.beta2},
       {"eps", c.adam.eps},
       {"accumulate", c.accumulate},
       {"augment", c.augment},
       {"augmentation", c.augmentation},
       {"checkpoint_dir", c.checkpoint_dir.string()}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.seed = j.value("seed", d.seed);
  c.adam.lr = j.value("lr", d.adam.lr);
  c.adam.beta1 = j.value("beta1", d.adam.beta1);
  c.adam.beta2 = j.value("beta2", d.adam.beta2);
  c.adam.eps = j.value("eps", d.adam.eps);
  c.accumulate = j.value("accumulate", d.accumulate);
  c.augment = j.value("augment", d.augment);
  c.augmentation = j.value("augmentation", d.augmentation);
  c.checkpoint_dir = j.value("checkpoint_dir", std::string());
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch-%04zu.json", epoch);
  return buf;
}

void save_checkpoint(const assoc::AssocNet& net, const std::filesystem::path& path,
                     const nlohmann::json& extra) {
  t::ParameterStore store = [&] {
    std::shared_lock lock(net.params().mutex());
    return net.params();
  }();
  store.metadata() = extra;
  store.metadata()["net_config"] = net.config();
  store.save(path);
}

assoc::AssocNet load_checkpoint(const std::filesystem::path& path) {
  t::ParameterStore store = t::ParameterStore::load(path);
  if (!store.metadata().contains("net_config")) {
    throw t::CheckpointError("checkpoint " + path.string() + " lacks net_config metadata");
  }
  const auto config = store.metadata().at("net_config").get<assoc::NetConfig>();
  return assoc::AssocNet(config, std::move(store));
}

TrainResult train(assoc::AssocNet& net, const PairSource& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (data.size() == 0) throw std::invalid_argument("train: dataset has no labeled pairs");
  TrainResult result;
  const bool checkpoints = !config.checkpoint_dir.empty();
  if (checkpoints) std::filesystem::create_directories(config.checkpoint_dir);

  nlohmann::json recorded = config;
  recorded.erase("checkpoint_dir");
  auto save = [&](std::size_t epoch) {
    if (!checkpoints) return;
    const auto path = config.checkpoint_dir / checkpoint_name(epoch);
    save_checkpoint(net, path, {{"epoch", epoch}, {"loss_curve", result.loss_curve}, {"train", recorded}});
    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
      char line[64];
      std::snprintf(line, sizeof line, "%zu,%.9f\n", e + 1, result.loss_curve[e]);
      csv += line;
    }
    util::write_file_atomic(config.checkpoint_dir / "loss.csv", csv);
    result.last_checkpoint = path;
  };
  save(0);

  t::Adam adam(config.adam);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::seed_seq shuffle_seed{config.seed, static_cast<std::uint64_t>(epoch), std::uint64_t{0x5f}};
    std::mt19937_64 shuffle_rng(shuffle_seed);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double total = 0.0;
    net.params().zero_grad();
    for (std::size_t start = 0; start < order.size(); start += config.accumulate) {
      const std::size_t group = std::min(config.accumulate, order.size() - start);
      for (std::size_t k = start; k < start + group; ++k) {
        LabeledPair pair = data.get(order[k]);
        if (config.augment) {
          std::seed_seq s{config.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(order[k])};
          std::mt19937_64 rng(s);
          pair = augment_pair(pair, config.augmentation, rng);
        }
        t::Tensor loss;
        try {
          loss = assoc::assoc_loss(net.forward(pair.a, pair.b), pair.labels);
        } catch (const t::NonFiniteError& e) {
          throw TrainingDivergedError(std::string("train: ") + e.what(), result.last_checkpoint);
        }
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw TrainingDivergedError("train: non-finite loss in epoch " + std::to_string(epoch) +
                                          " on pair " + std::to_string(order[k]),
                                      result.last_checkpoint);
        }
        total += value;
        if (loss.requires_grad()) t::scale(loss, 1.0 / static_cast<double>(group)).backward();
      }
      try {
        adam.step(net.params());
      } catch (const t::OptimizerError& e) {
        throw TrainingDivergedError(std::string("train: ") + e.what(), result.last_checkpoint);
      }
      net.params().zero_grad();
    }
    result.loss_curve.push_back(total / static_cast<double>(order.size()));
    save(epoch);
    if (on_epoch) on_epoch(epoch, result.loss_curve.back());
  }
  return result;
}

std::vector<double> default_thresholds() {
  std::vector<double> out;
  for (int k = 0; k <= 20; ++k) out.push_back(k / 20.0);
  return out;
}

PairOutcome score_pair(const assoc::MatchSet& predicted, const assoc::MatchLabels& labels,
                       const assoc::ClusterObservation& a, const assoc::ClusterObservation& b) {
  constexpr long kNone = -1;
  std::vector<long> truth_a(a.nodes.size(), kNone), truth_b(b.nodes.size(), kNone);
  std::vector<long> pred_a(a.nodes.size(), kNone), pred_b(b.nodes.size(), kNone);
  for (auto [i, j] : labels.matches) {
    truth_a.at(i) = static_cast<long>(j);
    truth_b.at(j) = static_cast<long>(i);
  }
  for (const auto& m : predicted.matches) {
    pred_a.at(m.a) = static_cast<long>(m.b);
    pred_b.at(m.b) = static_cast<long>(m.a);
  }
  PairOutcome out;
  out.labeled_matches = labels.matches.size();
  out.predicted_matches = predicted.matches.size();
  for (const auto& m : predicted.matches) out.correct_matches += truth_a[m.a] == static_cast<long>(m.b);
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    if (!a.nodes[i].is_cluster) continue;
    ++out.clustered;
    out.correct += pred_a[i] == truth_a[i];
  }
  for (std::size_t j = 0; j < b.nodes.size(); ++j) {
    if (!b.nodes[j].is_cluster) continue;
    ++out.clustered;
    out.correct += pred_b[j] == truth_b[j];
  }
  return out;
}

EvalCurve evaluate(const assoc::AssocNet& net, const PairSource& data,
                   const std::vector<double>& thresholds) {
  EvalCurve curve;
  curve.thresholds = thresholds;
  const std::size_t nt = thresholds.size();
  std::vector<double> score_sum(nt, 0.0);
  std::vector<std::size_t> predicted(nt, 0), correct(nt, 0);
  std::size_t labeled = 0;
  for (std::size_t idx = 0; idx < data.size(); ++idx) {
    const LabeledPair pair = data.get(idx);
    std::size_t clustered = 0;
    for (const auto* o : {&pair.a, &pair.b})
      for (const auto& n : o->nodes) clustered += n.is_cluster;
    if (clustered == 0) {
      ++curve.pairs_excluded;
      std::fprintf(stderr, "warning: pair %zu has no clustered fruitlets; excluded\n", idx);
      continue;
    }
    ++curve.pairs_evaluated;
    const assoc::AssignmentMatrix am = [&] {
      std::shared_lock lock(net.params().mutex());
      return net.infer(pair.a, pair.b, 0.0);
    }();
    const auto p = am.p();
    std::vector<bool> ca, cb;
    for (const auto& n : pair.a.nodes) ca.push_back(n.is_cluster);
    for (const auto& n : pair.b.nodes) cb.push_back(n.is_cluster);
    labeled += pair.labels.matches.size();
    for (std::size_t k = 0; k < nt; ++k) {
      const auto ms = assoc::extract_matches(p, am.rows - 1, am.cols - 1, thresholds[k], ca, cb);
      const PairOutcome o = score_pair(ms, pair.labels, pair.a, pair.b);
      score_sum[k] += static_cast<double>(o.correct) / static_cast<double>(o.clustered);
      predicted[k] += o.predicted_matches;
      correct[k] += o.correct_matches;
    }
  }
  for (std::size_t k = 0; k < nt; ++k) {
    curve.matching_score.push_back(curve.pairs_evaluated ? score_sum[k] / curve.pairs_evaluated : 0.0);
    curve.precision.push_back(predicted[k] ? static_cast<double>(correct[k]) / predicted[k] : 1.0);
    curve.recall.push_back(labeled ? static_cast<double>(correct[k]) / labeled : 1.0);
  }
  return curve;
}

std::string eval_csv(const EvalCurve& curve) {
  std::string out = "threshold,precision,recall,matching_score\n";
  for (std::size_t k = 0; k < curve.thresholds.size(); ++k) {
    char line[128];
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.6f,%.6f\n", curve.thresholds[k], curve.precision[k],
                  curve.recall[k], curve.matching_score[k]);
    out += line;
  }
  return out;
}

}  // namespace fruitlet::train
