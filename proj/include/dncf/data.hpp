#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace dncf {

using Index = std::uint32_t;

inline constexpr std::size_t kTestNegatives = 99;

// Ordering used to find a user's latest interaction: the timestamp column when
// the file has one, then position in the file.
struct RecencyKey {
  std::int64_t timestamp = 0;
  std::uint64_t sequence = 0;
  auto operator<=>(const RecencyKey&) const = default;
};

struct Interaction {
  Index user = 0;
  Index item = 0;
  RecencyKey recency;
};

// Binary interaction matrix held as dual adjacency (CSR in both directions).
// Immutable after construction.
class InteractionStore {
 public:
  InteractionStore() = default;

  // Duplicate (user, item) pairs collapse to one entry that keeps the most
  // recent key. Throws IndexError for out-of-range ids.
  static InteractionStore build(std::size_t num_users, std::size_t num_items,
                                std::span<const Interaction> interactions);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_interactions() const { return user_items_.size(); }
  std::size_t duplicates_collapsed() const { return duplicates_; }

  std::span<const Index> user_items(Index u) const;
  std::span<const Index> item_users(Index i) const;
  // Recency keys aligned with user_items(u).
  std::span<const RecencyKey> user_recency(Index u) const;
  bool contains(Index u, Index i) const;
  std::size_t item_popularity(Index i) const { return item_users(i).size(); }

  // All interactions ordered by recency; writing them in this order preserves
  // the file-order fallback on reload.
  std::vector<Interaction> interactions() const;

  // Adjacency equality; recency keys are not compared.
  bool operator==(const InteractionStore& other) const;

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::size_t duplicates_ = 0;
  std::vector<std::size_t> user_offsets_{0};
  std::vector<Index> user_items_;
  std::vector<RecencyKey> user_recency_;
  std::vector<std::size_t> item_offsets_{0};
  std::vector<Index> item_users_;
};

struct TestInstance {
  Index user = 0;
  Index positive_item = 0;
  std::vector<Index> negative_items;
};

struct Dataset {
  InteractionStore train;
  std::vector<TestInstance> tests;  // indexed by user
  std::size_t duplicate_train_lines = 0;
};

// Parses `.train.rating`, `.test.rating` and `.test.negative` files. Throws
// DataError with "path:line:" context on any malformed or inconsistent input.
Dataset load_dataset(const std::filesystem::path& train_path,
                     const std::filesystem::path& test_path,
                     const std::filesystem::path& negatives_path);

// Resolves `<prefix>.train.rating`, `<prefix>.test.rating`, `<prefix>.test.negative`.
Dataset load_dataset(const std::filesystem::path& prefix);

void write_rating_file(const std::filesystem::path& path,
                       std::span<const Interaction> interactions);
void write_negative_file(const std::filesystem::path& path,
                         std::span<const TestInstance> instances);
void write_dataset(const std::filesystem::path& prefix, const Dataset& dataset);

struct Holdout {
  InteractionStore train;
  std::vector<std::pair<Index, Index>> held_out;  // (user, item)
};

// Removes each user's latest interaction. Users with a single interaction keep
// it and contribute no held-out pair.
Holdout holdout_validation(const InteractionStore& store);

// Builds ranking instances for held-out pairs: negatives are drawn without
// replacement from items the user never interacted with in `full_train`,
// excluding `exclude[user]` (the user's test item) when given.
std::vector<TestInstance> make_validation_instances(
    const InteractionStore& full_train, std::span<const std::pair<Index, Index>> held_out,
    std::span<const TestInstance> tests, std::size_t num_negatives, std::uint64_t seed);

struct TrainInstance {
  Index user = 0;
  Index item = 0;
  std::uint8_t label = 0;
  bool operator==(const TrainInstance&) const = default;
};

struct TrainBatch {
  std::vector<Index> users;
  std::vector<Index> items;
  std::vector<std::uint8_t> labels;
  std::size_t size() const { return users.size(); }
};

struct EpochSample {
  std::vector<TrainInstance> instances;  // globally shuffled
  std::size_t positives = 0;
  // Positives whose user had fewer unobserved items than neg_ratio; their
  // negatives were drawn with replacement.
  std::size_t replacement_warnings = 0;

  std::vector<TrainBatch> batches(std::size_t batch_size) const;
};

// One epoch of labelled training instances: every observed pair once with
// label 1, plus `neg_ratio` unobserved items per positive with label 0.
EpochSample sample_epoch(const InteractionStore& store, std::size_t neg_ratio,
                         std::uint64_t seed);

}  // namespace dncf
