#include "fruitlet/io/dataset.hpp"

#include <algorithm>
#include <map>

#include "fruitlet/assoc/positional.hpp"
#include "fruitlet/util/encoding.hpp"

namespace fruitlet::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json grid_json(const sizing::Grid<double>& g) {
  return util::array_to_json({g.height, g.width}, g.values);
}

sizing::Grid<double> grid_from(const json& j) {
  std::vector<std::size_t> shape;
  auto values = util::array_from_json(j, &shape);
  if (shape.size() != 2) throw SchemaError("crop arrays must be two-dimensional");
  return {shape[1], shape[0], std::move(values)};
}

template <typename F>
auto schema_guard(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw SchemaError("malformed " + what + ": " + e.what());
  }
}

}  // namespace

nlohmann::json read_json(const fs::path& path, bool versioned) {
  const std::string text = util::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + " is not valid JSON: " + e.what());
  }
  if (versioned) {
    if (!j.is_object() || !j.contains("schema_version")) {
      throw SchemaError(path.string() + " has no schema_version");
    }
    const json& v = j.at("schema_version");
    if (!v.is_number_integer() || v.get<int>() != kSchemaVersion) {
      throw SchemaError(path.string() + " has schema_version " + v.dump() + ", expected " +
                        std::to_string(kSchemaVersion));
    }
  }
  return j;
}

void write_json(const fs::path& path, json j, bool versioned) {
  if (versioned) j["schema_version"] = kSchemaVersion;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  util::write_file_atomic(path, util::dump_json(j));
}

nlohmann::json to_json(const ObservationRecord& obs) {
  json dets = json::array();
  for (const auto& d : obs.detections) {
    json jd = {{"id", d.id},
               {"bbox", {d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1}},
               {"cluster_score", d.cluster_score},
               {"is_tag", d.is_tag},
               {"is_cluster", d.is_cluster},
               {"mask", grid_json(d.mask)},
               {"disparity", grid_json(d.disparity)}};
    if (!d.visual.empty()) {
      jd["visual"] = util::array_to_json({d.visual_channels, assoc::kVisualSize, assoc::kVisualSize}, d.visual);
    }
    if (!d.rgb.empty()) jd["rgb"] = util::array_to_json({3, d.rgb_height, d.rgb_width}, d.rgb);
    if (d.true_diameter_mm) jd["true_diameter_mm"] = *d.true_diameter_mm;
    dets.push_back(std::move(jd));
  }
  return {{"cluster_id", obs.cluster_id},       {"day", obs.day},
          {"image_width", obs.image_width},     {"image_height", obs.image_height},
          {"max_disparity", obs.max_disparity}, {"baseline_mm", obs.baseline_mm},
          {"detections", std::move(dets)}};
}

ObservationRecord observation_from_json(const nlohmann::json& j) {
  return schema_guard("observation", [&] {
    ObservationRecord o;
    j.at("cluster_id").get_to(o.cluster_id);
    j.at("day").get_to(o.day);
    j.at("image_width").get_to(o.image_width);
    j.at("image_height").get_to(o.image_height);
    j.at("max_disparity").get_to(o.max_disparity);
    j.at("baseline_mm").get_to(o.baseline_mm);
    for (const json& jd : j.at("detections")) {
      DetectionRecord d;
      jd.at("id").get_to(d.id);
      const auto b = jd.at("bbox").get<std::vector<double>>();
      if (b.size() != 4) throw SchemaError("bbox needs four numbers");
      d.bbox = {b[0], b[1], b[2], b[3]};
      jd.at("cluster_score").get_to(d.cluster_score);
      jd.at("is_tag").get_to(d.is_tag);
      jd.at("is_cluster").get_to(d.is_cluster);
      d.mask = grid_from(jd.at("mask"));
      d.disparity = grid_from(jd.at("disparity"));
      if (jd.contains("visual")) {
        std::vector<std::size_t> shape;
        d.visual = util::array_from_json(jd.at("visual"), &shape);
        if (shape.size() != 3) throw SchemaError("visual grid must be C x 7 x 7");
        d.visual_channels = shape[0];
      }
      if (jd.contains("rgb")) {
        std::vector<std::size_t> shape;
        d.rgb = util::array_from_json(jd.at("rgb"), &shape);
        if (shape.size() != 3 || shape[0] != 3) throw SchemaError("rgb crop must be 3 x h x w");
        d.rgb_height = shape[1];
        d.rgb_width = shape[2];
      }
      if (d.visual.empty() && d.rgb.empty()) {
        throw SchemaError("detection " + d.id + " has neither visual nor rgb data");
      }
      if (jd.contains("true_diameter_mm")) d.true_diameter_mm = jd.at("true_diameter_mm").get<double>();
      o.detections.push_back(std::move(d));
    }
    return o;
  });
}

assoc::ClusterObservation to_observation(const ObservationRecord& record, std::size_t positional_size,
                                         std::size_t visual_channels) {
  assoc::ClusterObservation obs;
  obs.cluster_id = record.cluster_id;
  obs.day = record.day;
  obs.image_width = record.image_width;
  obs.image_height = record.image_height;
  obs.max_disparity = record.max_disparity;
  for (const auto& d : record.detections) {
    assoc::DetectionNode n;
    n.id = d.id;
    n.bbox = d.bbox;
    n.cluster_score = d.cluster_score;
    n.is_tag = d.is_tag;
    n.is_cluster = d.is_cluster;
    n.positional = assoc::build_positional(d.disparity, d.mask, d.bbox, record.image_width,
                                           record.image_height, record.max_disparity, positional_size);
    n.visual = d.visual.empty() ? assoc::visual_from_rgb(d.rgb, d.rgb_width, d.rgb_height, visual_channels)
                                : d.visual;
    obs.nodes.push_back(std::move(n));
  }
  return obs;
}

ObservationRecord record_from_synthetic(const synth::SyntheticObservation& so, double baseline_mm) {
  ObservationRecord r;
  r.cluster_id = so.obs.cluster_id;
  r.day = so.obs.day;
  r.image_width = so.obs.image_width;
  r.image_height = so.obs.image_height;
  r.max_disparity = so.obs.max_disparity;
  r.baseline_mm = baseline_mm;
  for (std::size_t k = 0; k < so.obs.nodes.size(); ++k) {
    const auto& n = so.obs.nodes[k];
    DetectionRecord d;
    d.id = n.id;
    d.bbox = n.bbox;
    d.cluster_score = n.cluster_score;
    d.is_tag = n.is_tag;
    d.is_cluster = n.is_cluster;
    d.mask = so.masks[k];
    d.disparity = so.disparities[k];
    d.visual = n.visual;
    d.visual_channels = n.visual.size() / (assoc::kVisualSize * assoc::kVisualSize);
    if (so.truth[k].diameter_mm > 0) d.true_diameter_mm = so.truth[k].diameter_mm;
    r.detections.push_back(std::move(d));
  }
  return r;
}

nlohmann::json to_json(const DatasetManifest& m) {
  json clusters = json::array();
  for (const auto& c : m.clusters) {
    json jc = {{"cluster_id", c.cluster_id}, {"days", c.days}, {"observations", c.observations}};
    if (!c.labels.empty()) jc["labels"] = c.labels;
    clusters.push_back(std::move(jc));
  }
  json j = {{"schema_version", m.schema_version}, {"clusters", std::move(clusters)}};
  if (m.generator) j["generator"] = {{"scene", *m.generator}, {"seeds", m.seeds}};
  return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  return schema_guard("manifest", [&] {
    DatasetManifest m;
    j.at("schema_version").get_to(m.schema_version);
    for (const json& jc : j.at("clusters")) {
      ClusterEntry c;
      jc.at("cluster_id").get_to(c.cluster_id);
      jc.at("days").get_to(c.days);
      jc.at("observations").get_to(c.observations);
      if (c.days.size() != c.observations.size()) {
        throw SchemaError("cluster " + c.cluster_id + ": days and observations differ in length");
      }
      c.labels = jc.value("labels", std::string());
      m.clusters.push_back(std::move(c));
    }
    if (j.contains("generator")) {
      m.generator = j.at("generator").at("scene").get<synth::SceneConfig>();
      j.at("generator").at("seeds").get_to(m.seeds);
    }
    return m;
  });
}

nlohmann::json to_json(const assoc::MatchLabels& labels) {
  json matches = json::array();
  for (auto [i, j] : labels.matches) matches.push_back({i, j});
  return {{"matches", matches}, {"unmatched_a", labels.unmatched_a}, {"unmatched_b", labels.unmatched_b}};
}

assoc::MatchLabels labels_from_json(const nlohmann::json& j) {
  return schema_guard("labels", [&] {
    assoc::MatchLabels l;
    for (const json& m : j.at("matches")) l.matches.emplace_back(m.at(0).get<std::size_t>(), m.at(1).get<std::size_t>());
    j.at("unmatched_a").get_to(l.unmatched_a);
    j.at("unmatched_b").get_to(l.unmatched_b);
    return l;
  });
}

void write_synthetic_dataset(const fs::path& dir, const synth::SceneConfig& config, std::uint64_t first_seed,
                             std::size_t pairs) {
  config.validate();
  DatasetManifest m;
  m.generator = config;
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::uint64_t seed = first_seed + k;
    const auto pair = synth::gen_pair(config, seed);
    ClusterEntry c;
    c.cluster_id = pair.a.obs.cluster_id;
    const std::string base = "clusters/" + c.cluster_id + "/";
    for (const auto* so : {&pair.a, &pair.b}) {
      const std::string rel = base + so->obs.day + ".json";
      write_json(dir / rel, to_json(record_from_synthetic(*so, config.baseline_mm)));
      c.days.push_back(so->obs.day);
      c.observations.push_back(rel);
    }
    c.labels = base + "labels.json";
    write_json(dir / c.labels, to_json(pair.labels));
    m.clusters.push_back(std::move(c));
    m.seeds.push_back(seed);
  }
  write_json(dir / "manifest.json", to_json(m), false);
}

Dataset Dataset::open(const fs::path& dir) {
  Dataset d;
  d.root_ = dir;
  d.manifest_ = manifest_from_json(read_json(dir / "manifest.json"));
  for (const auto& c : d.manifest_.clusters) {
    for (const auto& p : c.observations) {
      if (!fs::exists(dir / p)) throw util::MissingFileError("dataset references missing file " + (dir / p).string());
    }
    if (!c.labels.empty() && !fs::exists(dir / c.labels)) {
      throw util::MissingFileError("dataset references missing file " + (dir / c.labels).string());
    }
  }
  return d;
}

ObservationRecord Dataset::observation(std::size_t cluster, std::size_t day) const {
  const auto& c = manifest_.clusters.at(cluster);
  return observation_from_json(read_json(root_ / c.observations.at(day)));
}

std::optional<assoc::MatchLabels> Dataset::labels(std::size_t cluster) const {
  const auto& c = manifest_.clusters.at(cluster);
  if (c.labels.empty()) return std::nullopt;
  return labels_from_json(read_json(root_ / c.labels));
}

DatasetPairSource::DatasetPairSource(const Dataset& dataset, const assoc::NetConfig& net)
    : dataset_(&dataset), net_(net) {
  const auto& clusters = dataset.manifest().clusters;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    if (clusters[k].days.size() == 2 && !clusters[k].labels.empty()) index_.push_back(k);
  }
}

train::LabeledPair DatasetPairSource::get(std::size_t index) const {
  const std::size_t k = index_.at(index);
  train::LabeledPair p{to_observation(dataset_->observation(k, 0), net_.positional_size, net_.visual_channels),
                       to_observation(dataset_->observation(k, 1), net_.positional_size, net_.visual_channels),
                       *dataset_->labels(k)};
  assoc::validate(p.a, net_.visual_channels, net_.positional_size, net_.visual_size);
  assoc::validate(p.b, net_.visual_channels, net_.positional_size, net_.visual_size);
  assoc::validate(p.labels, p.a, p.b);
  return p;
}

namespace {

json ellipse_json(const sizing::EllipseParams& e) {
  return {{"cx", e.cx}, {"cy", e.cy}, {"major_len", e.major_len}, {"minor_len", e.minor_len}, {"angle", e.angle}};
}

sizing::EllipseParams ellipse_from(const json& j) {
  return {j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("major_len").get<double>(),
          j.at("minor_len").get<double>(), j.at("angle").get<double>()};
}

}  // namespace

nlohmann::json to_json(const MeasurementsFile& m) {
  json ms = json::array(), ns = json::array();
  for (const auto& r : m.measurements) {
    json jr = r.fruitlet;
    jr["disparity_used"] = r.size.disparity_used;
    jr["baseline_mm"] = r.size.baseline_mm;
    jr["minor_px"] = r.size.minor_px;
    jr["ellipse"] = ellipse_json(r.ellipse);
    ms.push_back(std::move(jr));
  }
  for (const auto& n : m.not_sized) {
    ns.push_back({{"cluster_id", n.cluster_id}, {"day", n.day}, {"key", n.key}, {"reason", n.reason}});
  }
  return {{"measurements", ms}, {"not_sized", ns}};
}

MeasurementsFile measurements_from_json(const nlohmann::json& j) {
  return schema_guard("measurements", [&] {
    MeasurementsFile m;
    for (const json& jr : j.at("measurements")) {
      MeasurementRecord r;
      r.fruitlet = jr.get<growth::FruitletRecord>();
      r.size = {r.fruitlet.diameter_mm, jr.at("disparity_used").get<double>(), jr.at("baseline_mm").get<double>(),
                jr.at("minor_px").get<double>()};
      r.ellipse = ellipse_from(jr.at("ellipse"));
      m.measurements.push_back(std::move(r));
    }
    for (const json& jn : j.at("not_sized")) {
      m.not_sized.push_back({jn.at("cluster_id").get<std::string>(), jn.at("day").get<std::string>(),
                             jn.at("key").get<std::string>(), jn.at("reason").get<std::string>()});
    }
    return m;
  });
}

MeasurementsFile size_dataset(const Dataset& dataset, const sizing::SizingOptions& options) {
  MeasurementsFile out;
  const auto& clusters = dataset.manifest().clusters;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (std::size_t d = 0; d < clusters[c].days.size(); ++d) {
      const ObservationRecord obs = dataset.observation(c, d);
      sizing::SizingOptions opt = options;
      if (!(opt.baseline_mm > 0)) opt.baseline_mm = obs.baseline_mm;
      for (const auto& det : obs.detections) {
        if (!det.is_cluster) continue;
        try {
          const auto s = sizing::measure_fruitlet(det.mask, det.disparity, opt);
          out.measurements.push_back({{obs.cluster_id, det.id, obs.day, s.size.diameter_mm}, s.size, s.ellipse});
        } catch (const sizing::SizingError& e) {
          out.not_sized.push_back({obs.cluster_id, obs.day, det.id, e.what()});
        }
      }
    }
  }
  return out;
}

nlohmann::json to_json(const MatchesFile& m) {
  json pairs = json::array();
  for (const auto& p : m.pairs) {
    json matches = json::array(), ua = json::array(), ub = json::array();
    for (const auto& x : p.matches.matches) {
      matches.push_back({{"a", x.a}, {"b", x.b}, {"id_a", p.ids_a.at(x.a)}, {"id_b", p.ids_b.at(x.b)},
                         {"probability", x.probability}});
    }
    for (auto i : p.matches.unmatched_a) ua.push_back({{"index", i}, {"id", p.ids_a.at(i)}});
    for (auto j : p.matches.unmatched_b) ub.push_back({{"index", j}, {"id", p.ids_b.at(j)}});
    pairs.push_back({{"cluster_id", p.cluster_id}, {"day_a", p.day_a}, {"day_b", p.day_b}, {"ids_a", p.ids_a},
                     {"ids_b", p.ids_b}, {"matches", matches}, {"unmatched_a", ua}, {"unmatched_b", ub}});
  }
  return {{"threshold", m.threshold}, {"pairs", pairs}};
}

MatchesFile matches_from_json(const nlohmann::json& j) {
  return schema_guard("matches", [&] {
    MatchesFile m;
    j.at("threshold").get_to(m.threshold);
    for (const json& jp : j.at("pairs")) {
      PairMatches p;
      jp.at("cluster_id").get_to(p.cluster_id);
      jp.at("day_a").get_to(p.day_a);
      jp.at("day_b").get_to(p.day_b);
      jp.at("ids_a").get_to(p.ids_a);
      jp.at("ids_b").get_to(p.ids_b);
      for (const json& x : jp.at("matches")) {
        p.matches.matches.push_back(
            {x.at("a").get<std::size_t>(), x.at("b").get<std::size_t>(), x.at("probability").get<double>()});
      }
      for (const json& x : jp.at("unmatched_a")) p.matches.unmatched_a.push_back(x.at("index").get<std::size_t>());
      for (const json& x : jp.at("unmatched_b")) p.matches.unmatched_b.push_back(x.at("index").get<std::size_t>());
      m.pairs.push_back(std::move(p));
    }
    return m;
  });
}

MatchesFile match_dataset(const Dataset& dataset, const assoc::AssocNet& net, double threshold) {
  MatchesFile out;
  out.threshold = threshold;
  const auto& cfg = net.config();
  const auto& clusters = dataset.manifest().clusters;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (clusters[c].days.size() != 2) continue;
    const auto a = to_observation(dataset.observation(c, 0), cfg.positional_size, cfg.visual_channels);
    const auto b = to_observation(dataset.observation(c, 1), cfg.positional_size, cfg.visual_channels);
    assoc::validate(a, cfg.visual_channels, cfg.positional_size, cfg.visual_size);
    assoc::validate(b, cfg.visual_channels, cfg.positional_size, cfg.visual_size);
    PairMatches p;
    p.cluster_id = clusters[c].cluster_id;
    p.day_a = a.day;
    p.day_b = b.day;
    for (const auto& n : a.nodes) p.ids_a.push_back(n.id);
    for (const auto& n : b.nodes) p.ids_b.push_back(n.id);
    p.matches = net.infer(a, b, threshold).matches;
    out.pairs.push_back(std::move(p));
  }
  return out;
}

std::vector<growth::DayMatch> day_matches(const MatchesFile& matches, const std::string& day_start,
                                          const std::string& day_end) {
  std::vector<growth::DayMatch> out;
  for (const auto& p : matches.pairs) {
    const bool forward = p.day_a == day_start && p.day_b == day_end;
    const bool backward = p.day_a == day_end && p.day_b == day_start;
    if (!forward && !backward) continue;
    for (const auto& m : p.matches.matches) {
      const std::string& ia = p.ids_a.at(m.a);
      const std::string& ib = p.ids_b.at(m.b);
      out.push_back(forward ? growth::DayMatch{p.cluster_id, ia, ib} : growth::DayMatch{p.cluster_id, ib, ia});
    }
  }
  return out;
}

}  // namespace fruitlet::io
