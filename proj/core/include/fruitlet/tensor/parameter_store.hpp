#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "fruitlet/tensor/tensor.hpp"

namespace fruitlet::tensor {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

/// Named, trainable parameters of a model.
///
/// Initialization draws from a generator seeded with `seed`, so registering
/// the same parameters in the same order is a pure function of the seed.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0);

  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);

  std::uint64_t seed() const { return seed_; }

  /// Xavier-uniform weight: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
  Tensor& add_xavier(const std::string& name, Shape shape, std::size_t fan_in,
                     std::size_t fan_out);
  Tensor& add_zeros(const std::string& name, Shape shape);
  Tensor& add_constant(const std::string& name, Shape shape, double value);

  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  const std::map<std::string, Tensor>& parameters() const { return params_; }
  std::map<std::string, Tensor>& parameters() { return params_; }
  std::size_t total_size() const;

  void zero_grad();

  /// Free-form metadata stored alongside the parameters in checkpoints.
  nlohmann::json& metadata() { return metadata_; }
  const nlohmann::json& metadata() const { return metadata_; }

  /// Readers may share; the optimizer takes the exclusive side.
  std::shared_mutex& mutex() const { return mutex_; }

  nlohmann::json to_json() const;
  static ParameterStore from_json(const nlohmann::json& j);

  /// Atomic write (temp file then rename). Refuses non-finite parameters.
  void save(const std::filesystem::path& path) const;
  static ParameterStore load(const std::filesystem::path& path);

  /// Bit-exact comparison of names, shapes, and values.
  bool identical(const ParameterStore& other) const;

 private:
  Tensor& insert(const std::string& name, Tensor t);

  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::map<std::string, Tensor> params_;
  nlohmann::json metadata_ = nlohmann::json::object();
  mutable std::shared_mutex mutex_;
};

}  // namespace fruitlet::tensor
