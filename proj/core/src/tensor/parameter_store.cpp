#include "fruitlet/tensor/parameter_store.hpp"

#include <cmath>
#include <cstring>

#include "fruitlet/util/encoding.hpp"

namespace fruitlet::tensor {

ParameterStore::ParameterStore(std::uint64_t seed) : seed_(seed), rng_(seed) {}

ParameterStore::ParameterStore(const ParameterStore& other)
    : seed_(other.seed_), rng_(other.rng_), metadata_(other.metadata_) {
  for (const auto& [name, t] : other.params_) params_.emplace(name, t.clone());
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this == &other) return *this;
  seed_ = other.seed_;
  rng_ = other.rng_;
  metadata_ = other.metadata_;
  params_.clear();
  for (const auto& [name, t] : other.params_) params_.emplace(name, t.clone());
  return *this;
}

Tensor& ParameterStore::insert(const std::string& name, Tensor t) {
  t.set_requires_grad(true);
  auto [it, inserted] = params_.emplace(name, std::move(t));
  if (!inserted) throw std::invalid_argument("parameter '" + name + "' registered twice");
  return it->second;
}

Tensor& ParameterStore::add_xavier(const std::string& name, Shape shape, std::size_t fan_in,
                                   std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(numel_of(shape));
  for (auto& v : values) v = dist(rng_);
  return insert(name, Tensor(std::move(shape), std::move(values)));
}

Tensor& ParameterStore::add_zeros(const std::string& name, Shape shape) {
  return insert(name, Tensor::zeros(std::move(shape)));
}

Tensor& ParameterStore::add_constant(const std::string& name, Shape shape, double value) {
  return insert(name, Tensor::full(std::move(shape), value));
}

bool ParameterStore::contains(const std::string& name) const { return params_.count(name) > 0; }

Tensor& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

nlohmann::json ParameterStore::to_json() const {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : params_) {
    check_finite(t, "checkpoint parameter '" + name + "'");
    params[name] = util::array_to_json(t.shape(), t.data());
  }
  return {{"format", "fruitlet-checkpoint"},
          {"version", kCheckpointVersion},
          {"seed", seed_},
          {"metadata", metadata_},
          {"parameters", std::move(params)}};
}

ParameterStore ParameterStore::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "fruitlet-checkpoint") {
      throw CheckpointError("not a fruitlet checkpoint");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    ParameterStore store(j.at("seed").get<std::uint64_t>());
    store.metadata_ = j.value("metadata", nlohmann::json::object());
    for (const auto& [name, arr] : j.at("parameters").items()) {
      Shape shape;
      auto values = util::array_from_json(arr, &shape);
      store.insert(name, Tensor(std::move(shape), std::move(values)));
    }
    return store;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void ParameterStore::save(const std::filesystem::path& path) const {
  std::shared_lock lock(mutex_);
  util::write_file_atomic(path, util::dump_json(to_json()));
}

ParameterStore ParameterStore::load(const std::filesystem::path& path) {
  const auto text = util::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

bool ParameterStore::identical(const ParameterStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (const auto& [name, t] : params_) {
    auto it = other.params_.find(name);
    if (it == other.params_.end() || it->second.shape() != t.shape()) return false;
    const auto a = t.data();
    const auto b = it->second.data();
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace fruitlet::tensor
