#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "fruitlet/assoc/network.hpp"

namespace fruitlet::testing {

/// Small network that keeps finite-difference sweeps fast.
assoc::NetConfig tiny_config();

/// Observation with `nodes` detections (node 0 is the tag) and uniform random
/// grids sized for `config`. Every non-tag node is a clustered fruitlet.
assoc::ClusterObservation random_observation(std::mt19937_64& rng, std::size_t nodes,
                                             const assoc::NetConfig& config);

/// Same nodes reordered so that result.nodes[k] = obs.nodes[perm[k]].
assoc::ClusterObservation permute_nodes(const assoc::ClusterObservation& obs,
                                        const std::vector<std::size_t>& perm);

std::vector<std::size_t> random_permutation(std::mt19937_64& rng, std::size_t n);

}  // namespace fruitlet::testing
