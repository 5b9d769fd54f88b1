#pragma once

#include <cstddef>
#include <cstdint>

#include "dncf/data.hpp"

namespace dncf {

// Clustered implicit-feedback generator for tests and demos. Users and items
// are split into `clusters` groups; each user draws most of its items from its
// own group, so personalized models can beat popularity ranking.
struct SyntheticOptions {
  std::size_t users = 50;
  std::size_t items = 200;
  std::size_t clusters = 5;
  std::size_t interactions_per_user = 20;  // including the test interaction
  double in_cluster_probability = 0.85;
  // Item weight is (rank within cluster + 1)^(-popularity_skew).
  double popularity_skew = 0.5;
  std::size_t test_negatives = kTestNegatives;
  std::uint64_t seed = 7;
};

// Holds out each user's last generated interaction as the test instance.
Dataset make_synthetic_dataset(const SyntheticOptions& options);

}  // namespace dncf
