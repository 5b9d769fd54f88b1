#include "dncf/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <string>
#include <string_view>

#include "dncf/error.hpp"
#include "dncf/rng.hpp"

namespace dncf {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// InteractionStore

InteractionStore InteractionStore::build(std::size_t num_users, std::size_t num_items,
                                         std::span<const Interaction> interactions) {
  std::vector<Interaction> sorted(interactions.begin(), interactions.end());
  for (const auto& x : sorted) {
    if (x.user >= num_users || x.item >= num_items) {
      throw IndexError("interaction (" + std::to_string(x.user) + "," +
                       std::to_string(x.item) + ") outside " + std::to_string(num_users) +
                       "x" + std::to_string(num_items));
    }
  }
  std::sort(sorted.begin(), sorted.end(), [](const Interaction& a, const Interaction& b) {
    if (a.user != b.user) return a.user < b.user;
    if (a.item != b.item) return a.item < b.item;
    return a.recency < b.recency;
  });

  InteractionStore s;
  s.num_users_ = num_users;
  s.num_items_ = num_items;
  s.user_offsets_.assign(num_users + 1, 0);
  s.user_items_.reserve(sorted.size());
  s.user_recency_.reserve(sorted.size());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const auto& x = sorted[k];
    if (k + 1 < sorted.size() && sorted[k + 1].user == x.user && sorted[k + 1].item == x.item) {
      ++s.duplicates_;  // keep the last (most recent) copy
      continue;
    }
    s.user_items_.push_back(x.item);
    s.user_recency_.push_back(x.recency);
    ++s.user_offsets_[x.user + 1];
  }
  std::partial_sum(s.user_offsets_.begin(), s.user_offsets_.end(), s.user_offsets_.begin());

  s.item_offsets_.assign(num_items + 1, 0);
  for (Index i : s.user_items_) ++s.item_offsets_[i + 1];
  std::partial_sum(s.item_offsets_.begin(), s.item_offsets_.end(), s.item_offsets_.begin());
  s.item_users_.resize(s.user_items_.size());
  std::vector<std::size_t> cursor(s.item_offsets_.begin(), s.item_offsets_.end() - 1);
  // Users are visited in increasing order, so each item list comes out sorted.
  for (Index u = 0; u < num_users; ++u) {
    for (std::size_t k = s.user_offsets_[u]; k < s.user_offsets_[u + 1]; ++k) {
      s.item_users_[cursor[s.user_items_[k]]++] = u;
    }
  }
  return s;
}

std::span<const Index> InteractionStore::user_items(Index u) const {
  if (u >= num_users_) throw IndexError("user " + std::to_string(u) + " out of range");
  return {user_items_.data() + user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]};
}

std::span<const Index> InteractionStore::item_users(Index i) const {
  if (i >= num_items_) throw IndexError("item " + std::to_string(i) + " out of range");
  return {item_users_.data() + item_offsets_[i], item_offsets_[i + 1] - item_offsets_[i]};
}

std::span<const RecencyKey> InteractionStore::user_recency(Index u) const {
  if (u >= num_users_) throw IndexError("user " + std::to_string(u) + " out of range");
  return {user_recency_.data() + user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]};
}

bool InteractionStore::contains(Index u, Index i) const {
  const auto items = user_items(u);
  return std::binary_search(items.begin(), items.end(), i);
}

std::vector<Interaction> InteractionStore::interactions() const {
  std::vector<Interaction> out;
  out.reserve(user_items_.size());
  for (Index u = 0; u < num_users_; ++u) {
    for (std::size_t k = user_offsets_[u]; k < user_offsets_[u + 1]; ++k) {
      out.push_back({u, user_items_[k], user_recency_[k]});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Interaction& a, const Interaction& b) { return a.recency < b.recency; });
  return out;
}

bool InteractionStore::operator==(const InteractionStore& other) const {
  return num_users_ == other.num_users_ && num_items_ == other.num_items_ &&
         user_offsets_ == other.user_offsets_ && user_items_ == other.user_items_ &&
         item_offsets_ == other.item_offsets_ && item_users_ == other.item_users_;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class LineError {
 public:
  LineError(const fs::path& path, std::size_t line) : path_(path.string()), line_(line) {}
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path_ + ":" + std::to_string(line_) + ": " + what);
  }

 private:
  std::string path_;
  std::size_t line_;
};

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == '\t' || line[pos] == ' ')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != '\t' && line[end] != ' ') ++end;
    fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view field, const LineError& ctx, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    ctx.fail(std::string("invalid ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

std::int64_t parse_timestamp(std::string_view field, const LineError& ctx) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec == std::errc{} && ptr == field.data() + field.size()) return value;
  double real = 0.0;
  const auto [p2, ec2] = std::from_chars(field.data(), field.data() + field.size(), real);
  if (ec2 != std::errc{} || p2 != field.data() + field.size()) {
    ctx.fail("invalid timestamp '" + std::string(field) + "'");
  }
  return static_cast<std::int64_t>(real);
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open file");
  return in;
}

std::string_view strip_cr(const std::string& line) {
  std::string_view v(line);
  if (!v.empty() && v.back() == '\r') v.remove_suffix(1);
  return v;
}

std::vector<Interaction> read_rating_file(const fs::path& path) {
  auto in = open_input(path);
  std::vector<Interaction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = strip_cr(line);
    const auto fields = split_fields(view);
    if (fields.empty()) continue;
    const LineError ctx(path, line_no);
    if (fields.size() < 2) ctx.fail("expected userID<TAB>itemID[<TAB>rating[<TAB>timestamp]]");
    Interaction x;
    x.user = parse_number<Index>(fields[0], ctx, "user id");
    x.item = parse_number<Index>(fields[1], ctx, "item id");
    x.recency.timestamp = fields.size() >= 4 ? parse_timestamp(fields[3], ctx) : 0;
    x.recency.sequence = line_no;
    out.push_back(x);
  }
  return out;
}

struct NegativeLine {
  Index user;
  Index item;
  std::vector<Index> negatives;
  std::size_t line_no;
};

std::vector<NegativeLine> read_negative_file(const fs::path& path) {
  auto in = open_input(path);
  std::vector<NegativeLine> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(strip_cr(line));
    if (fields.empty()) continue;
    const LineError ctx(path, line_no);
    const std::string_view head = fields[0];
    const auto comma = head.find(',');
    if (head.size() < 5 || head.front() != '(' || head.back() != ')' ||
        comma == std::string_view::npos) {
      ctx.fail("expected '(userID,itemID)' as first field");
    }
    NegativeLine rec{};
    rec.user = parse_number<Index>(head.substr(1, comma - 1), ctx, "user id");
    rec.item = parse_number<Index>(head.substr(comma + 1, head.size() - comma - 2), ctx,
                                   "item id");
    for (std::size_t f = 1; f < fields.size(); ++f) {
      rec.negatives.push_back(parse_number<Index>(fields[f], ctx, "negative item id"));
    }
    rec.line_no = line_no;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

Dataset load_dataset(const fs::path& train_path, const fs::path& test_path,
                     const fs::path& negatives_path) {
  const auto train = read_rating_file(train_path);
  const auto test = read_rating_file(test_path);
  const auto negatives = read_negative_file(negatives_path);

  if (train.empty()) throw DataError(train_path.string() + ": no interactions");
  Index max_user = 0;
  Index max_item = 0;
  for (const auto& x : train) {
    max_user = std::max(max_user, x.user);
    max_item = std::max(max_item, x.item);
  }
  const std::size_t num_users = static_cast<std::size_t>(max_user) + 1;
  for (const auto& x : test) {
    if (x.user >= num_users) {
      throw DataError(test_path.string() + ":" + std::to_string(x.recency.sequence) +
                      ": test user " + std::to_string(x.user) +
                      " exceeds training user range " + std::to_string(num_users));
    }
    max_item = std::max(max_item, x.item);
  }
  for (const auto& rec : negatives) {
    for (Index j : rec.negatives) max_item = std::max(max_item, j);
  }
  const std::size_t num_items = static_cast<std::size_t>(max_item) + 1;

  Dataset ds;
  ds.train = InteractionStore::build(num_users, num_items, train);
  ds.duplicate_train_lines = ds.train.duplicates_collapsed();
  for (Index u = 0; u < num_users; ++u) {
    if (ds.train.user_items(u).empty()) {
      throw DataError(train_path.string() + ": user ids are not dense; user " +
                      std::to_string(u) + " has no training interaction");
    }
  }

  std::vector<bool> seen(num_users, false);
  ds.tests.resize(num_users);
  for (const auto& x : test) {
    if (seen[x.user]) {
      throw DataError(test_path.string() + ":" + std::to_string(x.recency.sequence) +
                      ": second test interaction for user " + std::to_string(x.user));
    }
    seen[x.user] = true;
    ds.tests[x.user].user = x.user;
    ds.tests[x.user].positive_item = x.item;
  }
  for (Index u = 0; u < num_users; ++u) {
    if (!seen[u]) {
      throw DataError(test_path.string() + ": no test interaction for user " + std::to_string(u));
    }
  }

  std::vector<bool> has_negatives(num_users, false);
  for (const auto& rec : negatives) {
    const LineError ctx(negatives_path, rec.line_no);
    if (rec.user >= num_users) ctx.fail("user " + std::to_string(rec.user) + " out of range");
    auto& inst = ds.tests[rec.user];
    if (has_negatives[rec.user]) ctx.fail("duplicate entry for user " + std::to_string(rec.user));
    if (rec.item != inst.positive_item) {
      ctx.fail("pair (" + std::to_string(rec.user) + "," + std::to_string(rec.item) +
               ") does not match test item " + std::to_string(inst.positive_item));
    }
    if (rec.negatives.size() != kTestNegatives) {
      ctx.fail("expected " + std::to_string(kTestNegatives) + " negatives, found " +
               std::to_string(rec.negatives.size()));
    }
    for (Index j : rec.negatives) {
      if (j >= num_items) ctx.fail("negative item " + std::to_string(j) + " out of range");
      if (j == inst.positive_item) ctx.fail("negative list contains the test item");
      if (ds.train.contains(rec.user, j)) {
        ctx.fail("negative item " + std::to_string(j) + " is a training interaction");
      }
    }
    inst.negative_items = rec.negatives;
    has_negatives[rec.user] = true;
  }
  for (Index u = 0; u < num_users; ++u) {
    if (!has_negatives[u]) {
      throw DataError(negatives_path.string() + ": no negatives for user " + std::to_string(u));
    }
  }
  return ds;
}

Dataset load_dataset(const fs::path& prefix) {
  const std::string p = prefix.string();
  return load_dataset(p + ".train.rating", p + ".test.rating", p + ".test.negative");
}

void write_rating_file(const fs::path& path, std::span<const Interaction> interactions) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  for (const auto& x : interactions) {
    out << x.user << '\t' << x.item << "\t1\t" << x.recency.timestamp << '\n';
  }
}

void write_negative_file(const fs::path& path, std::span<const TestInstance> instances) {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  for (const auto& inst : instances) {
    out << '(' << inst.user << ',' << inst.positive_item << ')';
    for (Index j : inst.negative_items) out << '\t' << j;
    out << '\n';
  }
}

void write_dataset(const fs::path& prefix, const Dataset& dataset) {
  const std::string p = prefix.string();
  write_rating_file(p + ".train.rating", dataset.train.interactions());
  std::vector<Interaction> test;
  for (const auto& inst : dataset.tests) test.push_back({inst.user, inst.positive_item, {}});
  write_rating_file(p + ".test.rating", test);
  write_negative_file(p + ".test.negative", dataset.tests);
}

// ---------------------------------------------------------------------------
// Validation holdout

Holdout holdout_validation(const InteractionStore& store) {
  Holdout h;
  std::vector<Interaction> kept;
  kept.reserve(store.num_interactions());
  for (Index u = 0; u < store.num_users(); ++u) {
    const auto items = store.user_items(u);
    const auto recency = store.user_recency(u);
    if (items.empty()) continue;
    std::size_t latest = items.size();
    if (items.size() >= 2) {
      latest = static_cast<std::size_t>(
          std::max_element(recency.begin(), recency.end()) - recency.begin());
      h.held_out.emplace_back(u, items[latest]);
    }
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (k != latest) kept.push_back({u, items[k], recency[k]});
    }
  }
  h.train = InteractionStore::build(store.num_users(), store.num_items(), kept);
  return h;
}

std::vector<TestInstance> make_validation_instances(
    const InteractionStore& full_train, std::span<const std::pair<Index, Index>> held_out,
    std::span<const TestInstance> tests, std::size_t num_negatives, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<TestInstance> out;
  out.reserve(held_out.size());
  std::vector<Index> pool;
  for (const auto& [u, item] : held_out) {
    const auto items = full_train.user_items(u);
    const bool has_test = u < tests.size();
    const Index test_item = has_test ? tests[u].positive_item : 0;
    pool.clear();
    for (Index j = 0; j < full_train.num_items(); ++j) {
      if (has_test && j == test_item) continue;
      if (!std::binary_search(items.begin(), items.end(), j)) pool.push_back(j);
    }
    TestInstance inst;
    inst.user = u;
    inst.positive_item = item;
    const std::size_t take = std::min(num_negatives, pool.size());
    // Partial Fisher-Yates: the first `take` slots become the sample.
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t j = k + rng.uniform_index(pool.size() - k);
      std::swap(pool[k], pool[j]);
      inst.negative_items.push_back(pool[k]);
    }
    out.push_back(std::move(inst));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Negative sampling

std::vector<TrainBatch> EpochSample::batches(std::size_t batch_size) const {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<TrainBatch> out;
  out.reserve((instances.size() + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < instances.size(); start += batch_size) {
    const std::size_t end = std::min(instances.size(), start + batch_size);
    TrainBatch b;
    b.users.reserve(end - start);
    b.items.reserve(end - start);
    b.labels.reserve(end - start);
    for (std::size_t k = start; k < end; ++k) {
      b.users.push_back(instances[k].user);
      b.items.push_back(instances[k].item);
      b.labels.push_back(instances[k].label);
    }
    out.push_back(std::move(b));
  }
  return out;
}

EpochSample sample_epoch(const InteractionStore& store, std::size_t neg_ratio,
                         std::uint64_t seed) {
  if (neg_ratio < 1) throw ConfigError("neg_ratio must be >= 1");
  SeededRng rng(seed);
  EpochSample epoch;
  epoch.positives = store.num_interactions();
  epoch.instances.reserve(epoch.positives * (1 + neg_ratio));

  const std::size_t num_items = store.num_items();
  std::vector<Index> unobserved;
  std::vector<Index> chosen;
  for (Index u = 0; u < store.num_users(); ++u) {
    const auto items = store.user_items(u);
    if (items.empty()) continue;
    const std::size_t free = num_items - items.size();
    if (free == 0) {
      throw DataError("user " + std::to_string(u) +
                      " interacted with every item; no negative can be sampled");
    }
    // Explicit candidate list when the unobserved set is small; rejection
    // sampling against the sorted adjacency otherwise.
    const bool explicit_pool = free < 4 * neg_ratio || 2 * items.size() > num_items;
    unobserved.clear();
    if (explicit_pool) {
      for (Index j = 0; j < num_items; ++j) {
        if (!std::binary_search(items.begin(), items.end(), j)) unobserved.push_back(j);
      }
    }
    for (Index pos : items) {
      epoch.instances.push_back({u, pos, 1});
      if (free < neg_ratio) {
        ++epoch.replacement_warnings;
        for (std::size_t n = 0; n < neg_ratio; ++n) {
          epoch.instances.push_back({u, unobserved[rng.uniform_index(free)], 0});
        }
      } else if (explicit_pool) {
        for (std::size_t n = 0; n < neg_ratio; ++n) {
          const std::size_t j = n + rng.uniform_index(free - n);
          std::swap(unobserved[n], unobserved[j]);
          epoch.instances.push_back({u, unobserved[n], 0});
        }
      } else {
        chosen.clear();
        while (chosen.size() < neg_ratio) {
          const auto j = static_cast<Index>(rng.uniform_index(num_items));
          if (std::binary_search(items.begin(), items.end(), j)) continue;
          if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
          chosen.push_back(j);
          epoch.instances.push_back({u, j, 0});
        }
      }
    }
  }
  rng.shuffle(std::span<TrainInstance>(epoch.instances));
  return epoch;
}

}  // namespace dncf
