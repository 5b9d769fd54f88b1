#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dncf/data.hpp"

namespace dncf {

class Model;

inline constexpr std::size_t kDefaultTopK = 10;

// Scores `items` for `user`; larger is better.
using ScoreFn = std::function<std::vector<double>(Index user, std::span<const Index> items)>;

struct RankedList {
  std::vector<Index> items;               // descending score, ties by ascending item id
  std::size_t position_of_positive = 0;   // 1-based
};

// Ranks the positive together with its negatives.
RankedList rank_candidates(const ScoreFn& scorer, const TestInstance& instance);

// 1 if rank <= k.
int hr_at_k(std::size_t rank, std::size_t k);
// 1 / log2(rank + 1) if rank <= k, else 0.
double ndcg_at_k(std::size_t rank, std::size_t k);

struct EvalReport {
  std::size_t epoch = 0;
  std::string split = "test";
  std::vector<double> hr;    // hr[k-1] = HR@k
  std::vector<double> ndcg;  // ndcg[k-1] = NDCG@k
  std::size_t users = 0;
  double seconds = 0.0;
  std::optional<double> loss;  // mean training loss of the epoch

  double hr_at(std::size_t k) const { return hr.at(k - 1); }
  double ndcg_at(std::size_t k) const { return ndcg.at(k - 1); }

  // Throws ProtocolError unless both curves are nondecreasing in k, lie in
  // [0, 1], and hr >= ndcg at every k.
  void check_invariants() const;
  // One JSON object: epoch, split, loss, hr, ndcg, users, seconds.
  std::string to_json() const;
};

struct EvalOptions {
  std::size_t k_max = kDefaultTopK;
  std::size_t threads = 1;
};

// Mean HR@k / NDCG@k over instances. The result does not depend on instance
// order or thread count: per-rank hit counts are accumulated as integers and
// the metrics are formed from them in rank order.
EvalReport evaluate(const ScoreFn& scorer, std::span<const TestInstance> instances,
                    const EvalOptions& options = {});
EvalReport evaluate(const Model& model, const InteractionStore& store,
                    std::span<const TestInstance> instances, const EvalOptions& options = {});

ScoreFn model_scorer(const Model& model, const InteractionStore& store);

}  // namespace dncf
