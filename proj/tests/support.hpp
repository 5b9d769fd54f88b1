#pragma once

// Shared fixtures and independent reference computations for the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dncf/data.hpp"
#include "dncf/models.hpp"
#include "dncf/nn.hpp"

namespace dncf::testing {

// Pinned tolerances.
inline constexpr double kGradStep = 1e-6;
inline constexpr double kGradRelTol = 1e-4;
inline constexpr double kGradAbsFloor = 1e-5;  // denominator floor for near-zero gradients
inline constexpr double kRecoveryTol = 1e-12;
inline constexpr double kMetricTol = 1e-12;

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dncf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Random store where every user has at least one item; some items may have
// no users.
inline InteractionStore random_store(std::size_t users, std::size_t items, double density,
                                     std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Interaction> xs;
  std::uint64_t seq = 0;
  for (Index u = 0; u < users; ++u) {
    bool any = false;
    for (Index i = 0; i < items; ++i) {
      if (unit(gen) < density) {
        xs.push_back({u, i, {0, seq++}});
        any = true;
      }
    }
    if (!any) xs.push_back({u, static_cast<Index>(gen() % items), {0, seq++}});
  }
  return InteractionStore::build(users, items, xs);
}

// ---------------------------------------------------------------------------
// Ranking metrics, computed without sorting.

// 1 + number of negatives that outrank the positive (higher score, or equal
// score and smaller item id).
inline std::size_t brute_rank(double positive_score, Index positive_item,
                              const std::vector<double>& negative_scores,
                              const std::vector<Index>& negative_items) {
  std::size_t ahead = 0;
  for (std::size_t n = 0; n < negative_scores.size(); ++n) {
    const bool beats = negative_scores[n] > positive_score ||
                       (negative_scores[n] == positive_score && negative_items[n] < positive_item);
    if (beats) ++ahead;
  }
  return ahead + 1;
}

inline double brute_hr(std::size_t rank, std::size_t k) { return rank <= k ? 1.0 : 0.0; }

inline double brute_ndcg(std::size_t rank, std::size_t k) {
  return rank <= k ? std::log(2.0) / std::log(static_cast<double>(rank) + 1.0) : 0.0;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient oracle.

struct LabelledPair {
  Index user;
  Index item;
  int label;
};

inline double total_loss(const Model& model, const InteractionStore& store,
                         const std::vector<LabelledPair>& pairs) {
  double loss = 0.0;
  ForwardTape tape;
  for (const auto& p : pairs) {
    loss += bce_loss(sigmoid(model.forward(store, p.user, p.item, tape)), p.label);
  }
  return loss;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t entries = 0;
};

// Compares backward() against central differences of total_loss for every
// entry of every parameter.
inline GradCheck check_gradients(Model& model, const InteractionStore& store,
                                 const std::vector<LabelledPair>& pairs) {
  model.zero_grad();
  ForwardTape tape;
  for (const auto& p : pairs) {
    const double logit = model.forward(store, p.user, p.item, tape);
    model.backward(store, tape, bce_logit_grad(sigmoid(logit), p.label));
  }
  GradCheck out;
  for (Parameter* param : model.parameters()) {
    for (std::size_t e = 0; e < param->value.size(); ++e) {
      double& w = param->value.data()[e];
      const double saved = w;
      w = saved + kGradStep;
      const double up = total_loss(model, store, pairs);
      w = saved - kGradStep;
      const double down = total_loss(model, store, pairs);
      w = saved;
      const double numeric = (up - down) / (2.0 * kGradStep);
      const double analytic = param->grad.data()[e];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), kGradAbsFloor});
      const double rel = std::abs(numeric - analytic) / denom;
      ++out.entries;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = param->name + "[" + std::to_string(e) + "]";
      }
    }
  }
  model.zero_grad();
  return out;
}

// Instance used by the gradient criterion: 5 users, 5 items, k = 4.
struct GradFixture {
  InteractionStore store;
  std::vector<LabelledPair> pairs;
};

inline GradFixture grad_fixture(std::uint64_t seed) {
  GradFixture f;
  f.store = random_store(5, 5, 0.45, seed);
  std::mt19937_64 gen(seed ^ 0x9e3779b97f4a7c15ULL);
  for (Index u = 0; u < 5; ++u) {
    for (Index i = 0; i < 5; ++i) {
      if (gen() % 2 == 0) f.pairs.push_back({u, i, f.store.contains(u, i) ? 1 : 0});
    }
  }
  return f;
}

inline ModelSpec grad_spec(ModelKind kind, Combiner combiner = Combiner::kSum) {
  ModelSpec spec;
  spec.kind = kind;
  spec.factors = 4;
  spec.combiner = combiner;
  spec.mlp_layers = std::vector<std::size_t>{8, 4};
  // Wide enough that ReLU pre-activations sit far from the kink relative to h.
  spec.init_stddev = 0.5;
  return spec;
}

// ---------------------------------------------------------------------------
// SVD++ / FISM forms evaluated straight from the tables.

inline std::vector<double> table_row(const Parameter& p, std::size_t r) {
  const auto row = p.value.row(r);
  return {row.begin(), row.end()};
}

inline double svdpp_score(const Parameter& P, const Parameter& Q, const Parameter& Y,
                          const InteractionStore& store, Index u, Index i) {
  const auto history = store.user_items(u);
  const std::size_t k = P.value.cols();
  std::vector<double> implicit(k, 0.0);
  for (Index j : history) {
    for (std::size_t d = 0; d < k; ++d) implicit[d] += Y.value(j, d);
  }
  const double norm = history.empty() ? 0.0 : 1.0 / std::sqrt(static_cast<double>(history.size()));
  double s = 0.0;
  for (std::size_t d = 0; d < k; ++d) s += (P.value(u, d) + norm * implicit[d]) * Q.value(i, d);
  return s;
}

inline double fism_score(const Parameter& Q, const Parameter& Y, const InteractionStore& store,
                         Index u, Index i) {
  const auto history = store.user_items(u);
  if (history.empty()) return 0.0;
  double s = 0.0;
  for (Index j : history) {
    for (std::size_t d = 0; d < Q.value.cols(); ++d) s += Y.value(j, d) * Q.value(i, d);
  }
  return s / std::sqrt(static_cast<double>(history.size()));
}

}  // namespace dncf::testing
