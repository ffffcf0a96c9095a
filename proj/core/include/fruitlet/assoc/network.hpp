#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fruitlet/assoc/observation.hpp"
#include "fruitlet/tensor/parameter_store.hpp"
#include "fruitlet/tensor/tensor.hpp"

namespace fruitlet::assoc {

using tensor::Tensor;

struct NetConfig {
  std::size_t feature_dim = 64;  // D
  std::size_t layers = 9;        // L, alternating self/cross starting with self
  std::size_t heads = 4;
  std::size_t sinkhorn_iters = 100;  // T
  double match_threshold = 0.2;
  std::size_t visual_channels = 32;  // C_v
  std::size_t visual_size = 7;
  std::size_t positional_size = 64;
  // Output channels of the 3x3 stride-1 visual convs and the 3x3 stride-2
  // positional convs.
  std::vector<std::size_t> visual_conv = {16, 16};
  std::vector<std::size_t> positional_conv = {8, 8, 16, 16};

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  std::size_t node_dim() const { return feature_dim + 2; }
  bool operator==(const NetConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

/// (i, j) node indices with the assignment probability P_ij.
struct Match {
  std::size_t a = 0;
  std::size_t b = 0;
  double probability = 0.0;
  bool operator==(const Match&) const = default;
};

/// Matches over clustered fruitlets; other clustered fruitlets are unmatched.
struct MatchSet {
  std::vector<Match> matches;
  std::vector<std::size_t> unmatched_a;
  std::vector<std::size_t> unmatched_b;
  bool operator==(const MatchSet&) const = default;
};

/// Augmented assignment P̄, (M+1) x (N+1) row-major, and its match set.
struct AssignmentMatrix {
  std::size_t rows = 0;  // M + 1
  std::size_t cols = 0;  // N + 1
  std::vector<double> pbar;
  MatchSet matches;

  double at(std::size_t i, std::size_t j) const { return pbar[i * cols + j]; }
  /// Top-left M x N block.
  std::vector<double> p() const;
};

/// Entropic optimal transport with dustbin marginals: rows of P̄ sum to
/// [1..1, N], columns to [1..1, M]. Log-space, built from differentiable
/// primitives, returns log P̄. Throws NonFiniteError on non-finite input.
Tensor log_sinkhorn(const Tensor& sbar, std::size_t iters);
Tensor sinkhorn(const Tensor& sbar, std::size_t iters);

/// Mutual-max extraction over the M x N block `p`: (i, j) matches iff both
/// nodes are clustered, p_ij > threshold, and p_ij is the maximum of row i and
/// of column j. Equal maxima resolve to the lowest index.
MatchSet extract_matches(const std::vector<double>& p, std::size_t m, std::size_t n,
                         double threshold, const std::vector<bool>& clustered_a,
                         const std::vector<bool>& clustered_b);

/// Partial assignment negative log-likelihood from log P̄. Throws
/// std::out_of_range when a label index does not fit P̄.
Tensor assoc_loss(const Tensor& log_pbar, const MatchLabels& labels);

/// S̄ = [[fA fBᵀ, z], [z, z]].
Tensor score_and_augment(const Tensor& fa, const Tensor& fb, const Tensor& z);

class AssocNet {
 public:
  AssocNet(NetConfig config, std::uint64_t seed);
  /// Wraps existing parameters, e.g. from a checkpoint; their names and
  /// shapes must match `config`.
  AssocNet(NetConfig config, tensor::ParameterStore params);

  const NetConfig& config() const { return config_; }
  tensor::ParameterStore& params() { return params_; }
  const tensor::ParameterStore& params() const { return params_; }

  /// Initial node features, one row per node: [CNN_d(d) + CNN_p(p) | s | t].
  Tensor encode_nodes(const ClusterObservation& obs) const;
  Tensor encode_node(const DetectionNode& node) const;

  /// One message-passing layer; even layers use self edges, odd cross.
  std::pair<Tensor, Tensor> gnn_layer(const Tensor& xa, const Tensor& xb, std::size_t layer) const;

  /// f = x W + b, one row per node, with W, b shared by both images.
  Tensor final_projection(const Tensor& x) const;

  /// log P̄ for a pair, recording a graph when grad mode is on. Scores are
  /// the descriptor inner products divided by sqrt(D + 2).
  Tensor forward(const ClusterObservation& a, const ClusterObservation& b) const;

  /// Inference without graph recording.
  AssignmentMatrix infer(const ClusterObservation& a, const ClusterObservation& b,
                         double threshold) const;

 private:
  void register_parameters();
  Tensor linear(const Tensor& x, const std::string& prefix) const;
  Tensor attention(const Tensor& x, const Tensor& source, std::size_t layer) const;
  Tensor encode_batch(const std::vector<const DetectionNode*>& nodes) const;

  NetConfig config_;
  tensor::ParameterStore params_;
};

}  // namespace fruitlet::assoc
