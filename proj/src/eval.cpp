#include "dncf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "dncf/error.hpp"
#include "dncf/models.hpp"

namespace dncf {

RankedList rank_candidates(const ScoreFn& scorer, const TestInstance& instance) {
  std::vector<Index> candidates;
  candidates.reserve(instance.negative_items.size() + 1);
  candidates.push_back(instance.positive_item);
  candidates.insert(candidates.end(), instance.negative_items.begin(),
                    instance.negative_items.end());
  const std::vector<double> scores = scorer(instance.user, candidates);
  if (scores.size() != candidates.size()) throw Error("scorer returned the wrong number of scores");
  for (double s : scores) {
    if (std::isnan(s)) {
      throw NumericError("NaN score for user " + std::to_string(instance.user));
    }
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  RankedList list;
  list.items.reserve(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    list.items.push_back(candidates[order[r]]);
    if (order[r] == 0) list.position_of_positive = r + 1;
  }
  return list;
}

int hr_at_k(std::size_t rank, std::size_t k) { return rank >= 1 && rank <= k ? 1 : 0; }

double ndcg_at_k(std::size_t rank, std::size_t k) {
  if (rank < 1 || rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

void EvalReport::check_invariants() const {
  if (hr.size() != ndcg.size()) throw ProtocolError("hr/ndcg length mismatch");
  for (std::size_t k = 0; k < hr.size(); ++k) {
    const bool in_range = hr[k] >= 0.0 && hr[k] <= 1.0 && ndcg[k] >= 0.0 && ndcg[k] <= 1.0;
    const bool monotone = k == 0 || (hr[k] >= hr[k - 1] && ndcg[k] >= ndcg[k - 1]);
    if (!in_range || !monotone || hr[k] < ndcg[k]) {
      throw ProtocolError("metric invariant violated at k=" + std::to_string(k + 1));
    }
  }
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["loss"] = loss ? nlohmann::ordered_json(*loss) : nlohmann::ordered_json(nullptr);
  j["hr"] = hr;
  j["ndcg"] = ndcg;
  j["users"] = users;
  j["seconds"] = seconds;
  return j.dump();
}

EvalReport evaluate(const ScoreFn& scorer, std::span<const TestInstance> instances,
                    const EvalOptions& options) {
  if (instances.empty()) throw ProtocolError("evaluation needs at least one instance");
  if (options.k_max == 0) throw ConfigError("k_max must be positive");
  const std::size_t k_max = options.k_max;

  std::vector<std::size_t> ranks(instances.size(), 0);
  const std::size_t threads =
      std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(1, instances.size()));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t n = begin; n < end; ++n) {
      ranks[n] = rank_candidates(scorer, instances[n]).position_of_positive;
    }
  };
  if (threads == 1) {
    work(0, instances.size());
  } else {
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (instances.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = std::min(instances.size(), t * chunk);
      const std::size_t end = std::min(instances.size(), begin + chunk);
      pool.emplace_back([&, t, begin, end] {
        try {
          work(begin, end);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<std::size_t> hits_at_rank(k_max + 1, 0);
  for (std::size_t r : ranks) {
    if (r <= k_max) ++hits_at_rank[r];
  }
  EvalReport report;
  report.users = instances.size();
  const double n = static_cast<double>(instances.size());
  std::size_t hits = 0;
  double gain = 0.0;
  for (std::size_t k = 1; k <= k_max; ++k) {
    hits += hits_at_rank[k];
    gain += static_cast<double>(hits_at_rank[k]) * ndcg_at_k(k, k);
    report.hr.push_back(static_cast<double>(hits) / n);
    report.ndcg.push_back(gain / n);
  }
  report.check_invariants();
  return report;
}

ScoreFn model_scorer(const Model& model, const InteractionStore& store) {
  return [&model, &store](Index user, std::span<const Index> items) {
    return model.score_items(store, user, items);
  };
}

EvalReport evaluate(const Model& model, const InteractionStore& store,
                    std::span<const TestInstance> instances, const EvalOptions& options) {
  return evaluate(model_scorer(model, store), instances, options);
}

}  // namespace dncf
