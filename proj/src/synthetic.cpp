#include "dncf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dncf/error.hpp"
#include "dncf/rng.hpp"

namespace dncf {

namespace {

Index draw_weighted(const std::vector<Index>& pool, const std::vector<double>& cumulative,
                    SeededRng& rng) {
  const double r = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                       pool.size() - 1);
  return pool[k];
}

}  // namespace

Dataset make_synthetic_dataset(const SyntheticOptions& o) {
  if (o.clusters == 0 || o.users == 0 || o.items < o.clusters) {
    throw ConfigError("synthetic: need users > 0 and items >= clusters > 0");
  }
  if (o.interactions_per_user < 2 ||
      o.interactions_per_user + o.test_negatives > o.items) {
    throw ConfigError("synthetic: items must cover interactions_per_user + test_negatives");
  }
  SeededRng rng(o.seed);

  std::vector<std::vector<Index>> cluster_items(o.clusters);
  for (Index i = 0; i < o.items; ++i) cluster_items[i % o.clusters].push_back(i);
  std::vector<std::vector<double>> cluster_cum(o.clusters);
  for (std::size_t c = 0; c < o.clusters; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < cluster_items[c].size(); ++r) {
      acc += std::pow(static_cast<double>(r + 1), -o.popularity_skew);
      cluster_cum[c].push_back(acc);
    }
  }
  std::vector<Index> all_items(o.items);
  for (Index i = 0; i < o.items; ++i) all_items[i] = i;
  std::vector<double> all_cum;
  {
    double acc = 0.0;
    for (Index i = 0; i < o.items; ++i) {
      acc += std::pow(static_cast<double>(i / o.clusters + 1), -o.popularity_skew);
      all_cum.push_back(acc);
    }
  }

  std::vector<Interaction> train;
  std::vector<Interaction> test;
  std::vector<std::vector<Index>> history(o.users);
  std::uint64_t clock = 0;
  for (Index u = 0; u < o.users; ++u) {
    const std::size_t c = u % o.clusters;
    auto& seen = history[u];
    std::size_t guard = 0;
    while (seen.size() < o.interactions_per_user) {
      if (++guard > 1000 * o.interactions_per_user) {
        throw ConfigError("synthetic: could not draw enough distinct items");
      }
      const bool inside = rng.uniform() < o.in_cluster_probability;
      const Index item = inside ? draw_weighted(cluster_items[c], cluster_cum[c], rng)
                                : draw_weighted(all_items, all_cum, rng);
      if (std::find(seen.begin(), seen.end(), item) != seen.end()) continue;
      seen.push_back(item);
    }
    for (std::size_t k = 0; k < seen.size(); ++k) {
      Interaction x{u, seen[k], {static_cast<std::int64_t>(++clock), 0}};
      (k + 1 == seen.size() ? test : train).push_back(x);
    }
  }
  for (std::size_t k = 0; k < train.size(); ++k) train[k].recency.sequence = k + 1;

  Dataset ds;
  ds.train = InteractionStore::build(o.users, o.items, train);
  ds.tests.resize(o.users);
  std::vector<Index> pool;
  for (Index u = 0; u < o.users; ++u) {
    auto& inst = ds.tests[u];
    inst.user = u;
    inst.positive_item = test[u].item;
    std::vector<Index> sorted = history[u];
    std::sort(sorted.begin(), sorted.end());
    pool.clear();
    for (Index j = 0; j < o.items; ++j) {
      if (!std::binary_search(sorted.begin(), sorted.end(), j)) pool.push_back(j);
    }
    for (std::size_t k = 0; k < o.test_negatives; ++k) {
      const std::size_t j = k + rng.uniform_index(pool.size() - k);
      std::swap(pool[k], pool[j]);
      inst.negative_items.push_back(pool[k]);
    }
  }
  return ds;
}

}  // namespace dncf
