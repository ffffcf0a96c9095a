#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "fruitlet/io/dataset.hpp"
#include "fruitlet/util/encoding.hpp"

namespace {

using namespace fruitlet;
using nlohmann::json;
namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kMissingFile = 3,
  kSchema = 4,
  kInvalidData = 5,
  kDiverged = 6,
};

int fail(ExitCode code, const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", static_cast<int>(code)}}.dump() << "\n";
  return code;
}

// Section `name` of the --config file, or an empty object.
json section(const std::string& config_path, const std::string& name) {
  if (config_path.empty()) return json::object();
  const json j = io::read_json(config_path, false);
  return j.contains(name) ? j.at(name) : json::object();
}

template <typename T>
T from_section(const std::string& config_path, const std::string& name) {
  return section(config_path, name).get<T>();
}

template <typename T>
void apply(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

std::vector<double> parse_thresholds(const std::string& text) {
  if (text.empty()) return train::default_thresholds();
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size() || !(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("bad threshold '" + item + "'");
    out.push_back(v);
  }
  return out;
}

struct Common {
  std::string config;
};

struct SynthArgs {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> pairs;
  std::optional<double> drop_prob;
  std::optional<std::size_t> fruitlets_min, fruitlets_max, visual_channels, positional_size;
};

int run_synth(const Common& c, const SynthArgs& a) {
  auto scene = from_section<synth::SceneConfig>(c.config, "scene");
  apply(a.drop_prob, scene.drop_prob);
  apply(a.fruitlets_min, scene.fruitlets_min);
  apply(a.fruitlets_max, scene.fruitlets_max);
  apply(a.visual_channels, scene.visual_channels);
  apply(a.positional_size, scene.positional_size);
  const std::size_t pairs = a.pairs.value_or(section(c.config, "synth").value("pairs", std::size_t{10}));
  const std::uint64_t seed = a.seed.value_or(section(c.config, "synth").value("seed", std::uint64_t{0}));
  io::write_synthetic_dataset(a.out, scene, seed, pairs);
  std::cout << "wrote " << pairs << " pairs to " << a.out << "\n";
  return kOk;
}

struct SizeArgs {
  std::string dataset, out;
  std::optional<double> threshold, region_frac, baseline_mm;
};

int run_size(const Common& c, const SizeArgs& a) {
  const json s = section(c.config, "sizing");
  sizing::SizingOptions opt;
  opt.threshold = s.value("threshold", opt.threshold);
  opt.region_frac = s.value("region_frac", opt.region_frac);
  opt.baseline_mm = s.value("baseline_mm", 0.0);
  apply(a.threshold, opt.threshold);
  apply(a.region_frac, opt.region_frac);
  apply(a.baseline_mm, opt.baseline_mm);
  const auto ds = io::Dataset::open(a.dataset);
  const auto m = io::size_dataset(ds, opt);
  io::write_json(a.out, io::to_json(m));
  std::cout << "sized " << m.measurements.size() << " fruitlets, " << m.not_sized.size() << " not sized\n";
  return kOk;
}

struct MatchArgs {
  std::string dataset, checkpoint, out;
  std::optional<double> threshold;
};

int run_match(const Common& c, const MatchArgs& a) {
  const auto net = train::load_checkpoint(a.checkpoint);
  const double thr =
      a.threshold.value_or(section(c.config, "match").value("threshold", net.config().match_threshold));
  const auto ds = io::Dataset::open(a.dataset);
  const auto m = io::match_dataset(ds, net, thr);
  io::write_json(a.out, io::to_json(m));
  std::cout << "matched " << m.pairs.size() << " pairs\n";
  return kOk;
}

struct TrainArgs {
  std::string dataset, checkpoint_dir;
  std::optional<std::size_t> epochs, accumulate;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  bool no_augment = false;
};

int run_train(const Common& c, const TrainArgs& a) {
  const auto net_cfg = from_section<assoc::NetConfig>(c.config, "net");
  auto tc = from_section<train::TrainConfig>(c.config, "train");
  apply(a.epochs, tc.epochs);
  apply(a.accumulate, tc.accumulate);
  apply(a.seed, tc.seed);
  apply(a.lr, tc.adam.lr);
  if (a.no_augment) tc.augment = false;
  tc.checkpoint_dir = a.checkpoint_dir;
  net_cfg.validate();
  tc.validate();
  const auto ds = io::Dataset::open(a.dataset);
  const io::DatasetPairSource data(ds, net_cfg);
  assoc::AssocNet net(net_cfg, tc.seed);
  const auto result = train::train(net, data, tc, [](std::size_t epoch, double loss) {
    std::fprintf(stderr, "epoch %zu loss %.6f\n", epoch, loss);
  });
  std::cout << "checkpoint " << result.last_checkpoint.string() << "\n";
  return kOk;
}

struct EvalArgs {
  std::string dataset, checkpoint, out, thresholds;
};

int run_eval(const Common& c, const EvalArgs& a) {
  std::string thr = a.thresholds;
  if (thr.empty()) {
    const json e = section(c.config, "eval");
    if (e.contains("thresholds")) {
      std::string joined;
      for (double v : e.at("thresholds").get<std::vector<double>>()) joined += (joined.empty() ? "" : ",") + std::to_string(v);
      thr = joined;
    }
  }
  const auto net = train::load_checkpoint(a.checkpoint);
  const auto ds = io::Dataset::open(a.dataset);
  const io::DatasetPairSource data(ds, net.config());
  const auto curve = train::evaluate(net, data, parse_thresholds(thr));
  if (a.out.empty()) {
    std::cout << train::eval_csv(curve);
  } else {
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    util::write_file_atomic(a.out, train::eval_csv(curve));
  }
  return kOk;
}

struct GrowthArgs {
  std::string measurements, matches, out, rates_csv, day_start, day_end;
  bool by_key = false;
  std::optional<double> z_thr, top_frac;
  bool no_size_filter = false, no_rate_filter = false;
};

int run_growth(const Common& c, const GrowthArgs& a) {
  const json g = section(c.config, "growth");
  growth::GrowthOptions opt;
  opt.z_thr = g.value("z_thr", opt.z_thr);
  opt.top_frac = g.value("top_frac", opt.top_frac);
  opt.filter_sizes = g.value("filter_sizes", opt.filter_sizes) && !a.no_size_filter;
  opt.filter_rates = g.value("filter_rates", opt.filter_rates) && !a.no_rate_filter;
  apply(a.z_thr, opt.z_thr);
  apply(a.top_frac, opt.top_frac);

  const auto m = io::measurements_from_json(io::read_json(a.measurements));
  std::vector<growth::FruitletRecord> records;
  for (const auto& r : m.measurements) records.push_back(r.fruitlet);

  std::string start = a.day_start, end = a.day_end;
  std::optional<io::MatchesFile> matches;
  if (!a.matches.empty()) matches = io::matches_from_json(io::read_json(a.matches));
  if (start.empty() || end.empty()) {
    if (matches && !matches->pairs.empty()) {
      start = matches->pairs.front().day_a;
      end = matches->pairs.front().day_b;
    } else {
      std::set<std::string> days;
      for (const auto& r : records) days.insert(r.day);
      if (days.size() != 2) {
        throw growth::GrowthDataError("measurements span " + std::to_string(days.size()) +
                                      " days; pass --day-start and --day-end");
      }
      start = *days.begin();
      end = *days.rbegin();
    }
  }
  const auto links = matches ? io::day_matches(*matches, start, end) : growth::matches_by_key(records, start, end);
  const auto report = growth::growth_report(records, start, end, links, opt);
  io::write_json(a.out, json(report));
  if (!a.rates_csv.empty()) util::write_file_atomic(a.rates_csv, growth::rates_csv(report));
  std::printf("MFG %.3f mm, threshold %.3f mm, abscise %.2f%% of %zu fruitlets\n", report.mfg_mm,
              report.abscise_threshold_mm, report.abscise_percent, report.rates_mm.size());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fruitlet sizing, cross-day association and growth"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "JSON file with scene/net/train/sizing/match/eval/growth sections");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-day dataset");
  synth->add_option("--out", sa.out, "Dataset directory")->required();
  synth->add_option("--seed", sa.seed, "First generator seed");
  synth->add_option("--pairs", sa.pairs, "Number of cluster pairs");
  synth->add_option("--drop-prob", sa.drop_prob);
  synth->add_option("--fruitlets-min", sa.fruitlets_min);
  synth->add_option("--fruitlets-max", sa.fruitlets_max);
  synth->add_option("--visual-channels", sa.visual_channels);
  synth->add_option("--positional-size", sa.positional_size);

  SizeArgs za;
  auto* size = app.add_subcommand("size", "Measure fruitlet diameters");
  size->add_option("--dataset", za.dataset)->required();
  size->add_option("--out", za.out, "Measurements JSON")->required();
  size->add_option("--threshold", za.threshold, "Segmentation threshold");
  size->add_option("--region-frac", za.region_frac, "Disparity square side as a fraction of the crop");
  size->add_option("--baseline-mm", za.baseline_mm, "Override the stereo baseline");

  MatchArgs ma;
  auto* match = app.add_subcommand("match", "Associate fruitlets across days");
  match->add_option("--dataset", ma.dataset)->required();
  match->add_option("--checkpoint", ma.checkpoint)->required();
  match->add_option("--out", ma.out, "Matches JSON")->required();
  match->add_option("--threshold", ma.threshold);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train the association network");
  train_cmd->add_option("--dataset", ta.dataset)->required();
  train_cmd->add_option("--checkpoint-dir", ta.checkpoint_dir)->required();
  train_cmd->add_option("--epochs", ta.epochs);
  train_cmd->add_option("--seed", ta.seed, "Initialization, shuffling and augmentation seed");
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--accumulate", ta.accumulate, "Pairs per optimizer step");
  train_cmd->add_flag("--no-augment", ta.no_augment);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Precision, recall and matching score against labels");
  eval->add_option("--dataset", ea.dataset)->required();
  eval->add_option("--checkpoint", ea.checkpoint)->required();
  eval->add_option("--out", ea.out, "CSV path; stdout when omitted");
  eval->add_option("--thresholds", ea.thresholds, "Comma-separated list; default 0,0.05,...,1");

  GrowthArgs ga;
  auto* grow = app.add_subcommand("growth", "Growth rates, MFG and abscise percentage");
  grow->add_option("--measurements", ga.measurements)->required();
  auto* matches_opt = grow->add_option("--matches", ga.matches, "Matches JSON from `match`");
  grow->add_flag("--by-key", ga.by_key, "Link fruitlets with equal keys across days")->excludes(matches_opt);
  grow->add_option("--day-start", ga.day_start);
  grow->add_option("--day-end", ga.day_end);
  grow->add_option("--out", ga.out, "Report JSON")->required();
  grow->add_option("--rates-csv", ga.rates_csv);
  grow->add_option("--z-thr", ga.z_thr);
  grow->add_option("--top-frac", ga.top_frac);
  grow->add_flag("--no-size-filter", ga.no_size_filter);
  grow->add_flag("--no-rate-filter", ga.no_rate_filter);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    if (*synth) return run_synth(common, sa);
    if (*size) return run_size(common, za);
    if (*match) return run_match(common, ma);
    if (*train_cmd) return run_train(common, ta);
    if (*eval) return run_eval(common, ea);
    if (*grow) {
      if (!ga.by_key && ga.matches.empty()) return fail(kUsage, "usage", "growth needs --matches or --by-key");
      return run_growth(common, ga);
    }
  } catch (const util::MissingFileError& e) {
    return fail(kMissingFile, "missing_file", e.what());
  } catch (const io::SchemaError& e) {
    return fail(kSchema, "schema", e.what());
  } catch (const tensor::CheckpointError& e) {
    return fail(kSchema, "schema", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(kSchema, "schema", e.what());
  } catch (const train::TrainingDivergedError& e) {
    return fail(kDiverged, "diverged", std::string(e.what()) + "; last good checkpoint " +
                                           e.last_good_checkpoint().string());
  } catch (const std::invalid_argument& e) {
    return fail(kInvalidData, "invalid_data", e.what());
  } catch (const std::out_of_range& e) {
    return fail(kInvalidData, "invalid_data", e.what());
  } catch (const std::exception& e) {
    return fail(kInternal, "internal", e.what());
  }
  return kInternal;
}
