#include <doctest.h>

#include <fstream>
#include <set>

#include "dncf/error.hpp"
#include "dncf/synthetic.hpp"
#include "support.hpp"

using namespace dncf;
using dncf::testing::temp_dir;

namespace {

void write(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string negatives_line(Index user, Index item, Index first, std::size_t count) {
  std::string line = "(" + std::to_string(user) + "," + std::to_string(item) + ")";
  for (std::size_t k = 0; k < count; ++k) line += "\t" + std::to_string(first + k);
  return line + "\n";
}

// 2 users, 102 items: train (0,0),(1,1); test (0,1),(1,0); negatives 2..100.
std::filesystem::path minimal_files(const std::string& name) {
  const auto dir = temp_dir(name);
  write(dir / "d.train.rating", "0\t0\t1\t10\n1\t1\t1\t11\n");
  write(dir / "d.test.rating", "0\t1\t1\t12\n1\t0\t1\t13\n");
  write(dir / "d.test.negative", negatives_line(0, 1, 2, 99) + negatives_line(1, 0, 3, 99));
  return dir / "d";
}

bool adjacency_consistent(const InteractionStore& s) {
  std::size_t from_users = 0;
  std::size_t from_items = 0;
  for (Index u = 0; u < s.num_users(); ++u) {
    const auto items = s.user_items(u);
    from_users += items.size();
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (k > 0 && items[k - 1] >= items[k]) return false;
      const auto users = s.item_users(items[k]);
      if (!std::binary_search(users.begin(), users.end(), u)) return false;
    }
  }
  for (Index i = 0; i < s.num_items(); ++i) {
    const auto users = s.item_users(i);
    from_items += users.size();
    for (std::size_t k = 0; k < users.size(); ++k) {
      if (k > 0 && users[k - 1] >= users[k]) return false;
      if (!s.contains(users[k], i)) return false;
    }
  }
  return from_users == s.num_interactions() && from_items == s.num_interactions();
}

}  // namespace

TEST_CASE("minimal round-trip load") {
  const Dataset ds = load_dataset(minimal_files("minimal"));
  CHECK(ds.train.num_users() == 2);
  CHECK(ds.train.num_items() == 102);
  REQUIRE(ds.train.user_items(0).size() == 1);
  CHECK(ds.train.user_items(0)[0] == 0);
  CHECK(ds.train.user_items(1)[0] == 1);
  REQUIRE(ds.tests.size() == 2);
  CHECK(ds.tests[0].positive_item == 1);
  CHECK(ds.tests[1].positive_item == 0);
  CHECK(ds.tests[0].negative_items.size() == 99);
  CHECK(adjacency_consistent(ds.train));
}

TEST_CASE("load errors carry path and line") {
  const auto dir = temp_dir("errors");
  write(dir / "bad.train.rating", "0\t0\t1\t10\n0\tx\t1\t11\n");
  write(dir / "bad.test.rating", "0\t1\t1\t12\n");
  write(dir / "bad.test.negative", negatives_line(0, 1, 2, 99));
  try {
    load_dataset(dir / "bad");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("bad.train.rating:2:") != std::string::npos);
  }

  write(dir / "u.train.rating", "0\t0\t1\t10\n");
  write(dir / "u.test.rating", "0\t1\t1\t12\n5\t1\t1\t12\n");
  write(dir / "u.test.negative", negatives_line(0, 1, 2, 99));
  CHECK_THROWS_AS(load_dataset(dir / "u"), DataError);

  write(dir / "n.train.rating", "0\t0\t1\t10\n");
  write(dir / "n.test.rating", "0\t1\t1\t12\n");
  write(dir / "n.test.negative", negatives_line(0, 1, 2, 98));
  CHECK_THROWS_AS(load_dataset(dir / "n"), DataError);

  // A negative that is a training item.
  write(dir / "t.train.rating", "0\t5\t1\t10\n");
  write(dir / "t.test.rating", "0\t1\t1\t12\n");
  write(dir / "t.test.negative", negatives_line(0, 1, 2, 99));
  CHECK_THROWS_AS(load_dataset(dir / "t"), DataError);

  CHECK_THROWS_AS(load_dataset(dir / "missing"), DataError);
}

TEST_CASE("duplicate train lines collapse") {
  const auto dir = temp_dir("dups");
  write(dir / "d.train.rating", "0\t0\t1\t10\n0\t0\t1\t20\n0\t2\t1\t15\n");
  write(dir / "d.test.rating", "0\t1\t1\t30\n");
  write(dir / "d.test.negative", negatives_line(0, 1, 3, 99));
  const Dataset ds = load_dataset(dir / "d");
  CHECK(ds.train.num_interactions() == 2);
  CHECK(ds.duplicate_train_lines == 1);
  // The kept copy carries the latest timestamp, so item 0 is held out.
  const Holdout h = holdout_validation(ds.train);
  REQUIRE(h.held_out.size() == 1);
  CHECK(h.held_out[0].second == 0);
}

TEST_CASE("store build validates indices and keeps adjacency consistent") {
  const std::vector<Interaction> bad{{0, 5, {}}};
  CHECK_THROWS_AS(InteractionStore::build(1, 5, bad), IndexError);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CHECK(adjacency_consistent(dncf::testing::random_store(30, 40, 0.2, seed)));
  }
}

TEST_CASE("holdout_validation") {
  SUBCASE("latest by timestamp") {
    const std::vector<Interaction> xs{{0, 7, {2, 0}}, {0, 3, {1, 1}}};
    const Holdout h = holdout_validation(InteractionStore::build(1, 10, xs));
    REQUIRE(h.held_out.size() == 1);
    CHECK(h.held_out[0] == std::pair<Index, Index>{0, 7});
    REQUIRE(h.train.user_items(0).size() == 1);
    CHECK(h.train.user_items(0)[0] == 3);
  }
  SUBCASE("file order breaks timestamp ties") {
    const std::vector<Interaction> xs{{0, 7, {0, 0}}, {0, 3, {0, 1}}};
    const Holdout h = holdout_validation(InteractionStore::build(1, 10, xs));
    CHECK(h.held_out[0].second == 3);
  }
  SUBCASE("single interaction users are skipped") {
    const std::vector<Interaction> xs{{0, 1, {}}, {1, 2, {0, 1}}, {1, 3, {0, 2}}};
    const Holdout h = holdout_validation(InteractionStore::build(2, 5, xs));
    REQUIRE(h.held_out.size() == 1);
    CHECK(h.held_out[0].first == 1);
    CHECK(h.train.user_items(0).size() == 1);
  }
  SUBCASE("one pair per user when all have two or more") {
    const InteractionStore s = dncf::testing::random_store(25, 30, 0.3, 4);
    std::size_t eligible = 0;
    for (Index u = 0; u < 25; ++u) eligible += s.user_items(u).size() >= 2;
    const Holdout h = holdout_validation(s);
    CHECK(h.held_out.size() == eligible);
    CHECK(h.train.num_interactions() + h.held_out.size() == s.num_interactions());
  }
}

TEST_CASE("validation instances avoid observed and test items") {
  SyntheticOptions opts;
  const Dataset ds = make_synthetic_dataset(opts);
  const Holdout h = holdout_validation(ds.train);
  const auto val = make_validation_instances(ds.train, h.held_out, ds.tests, 99, 5);
  REQUIRE(val.size() == h.held_out.size());
  for (const auto& inst : val) {
    CHECK(inst.negative_items.size() == 99);
    std::set<Index> unique(inst.negative_items.begin(), inst.negative_items.end());
    CHECK(unique.size() == 99);
    for (Index j : inst.negative_items) {
      CHECK_FALSE(ds.train.contains(inst.user, j));
      CHECK(j != ds.tests[inst.user].positive_item);
      CHECK(j != inst.positive_item);
    }
  }
  CHECK(make_validation_instances(ds.train, h.held_out, ds.tests, 99, 5)[3].negative_items ==
        val[3].negative_items);
}

TEST_CASE("sample_epoch") {
  const InteractionStore s = dncf::testing::random_store(20, 25, 0.2, 8);
  SUBCASE("epoch size and label validity") {
    for (std::size_t ratio : {1u, 4u, 7u}) {
      const EpochSample e = sample_epoch(s, ratio, 3);
      CHECK(e.instances.size() == (1 + ratio) * s.num_interactions());
      std::size_t positives = 0;
      for (const auto& x : e.instances) {
        CHECK(s.contains(x.user, x.item) == (x.label == 1));
        positives += x.label;
      }
      CHECK(positives == s.num_interactions());
    }
  }
  SUBCASE("determinism") {
    CHECK(sample_epoch(s, 4, 77).instances == sample_epoch(s, 4, 77).instances);
    CHECK(sample_epoch(s, 4, 77).instances != sample_epoch(s, 4, 78).instances);
  }
  SUBCASE("100 positives with ratio 4 give 500 instances") {
    std::vector<Interaction> xs;
    for (Index u = 0; u < 10; ++u) {
      for (Index i = 0; i < 10; ++i) xs.push_back({u, static_cast<Index>(u + i), {}});
    }
    const EpochSample e = sample_epoch(InteractionStore::build(10, 40, xs), 4, 1);
    CHECK(e.instances.size() == 500);
    CHECK(e.replacement_warnings == 0);
  }
  SUBCASE("forced negative") {
    std::vector<Interaction> xs;
    for (Index i = 0; i < 9; ++i) xs.push_back({0, i, {}});
    const EpochSample e = sample_epoch(InteractionStore::build(1, 10, xs), 1, 5);
    for (const auto& x : e.instances) {
      if (x.label == 0) CHECK(x.item == 9);
    }
  }
  SUBCASE("without replacement per positive") {
    std::vector<Interaction> xs{{0, 0, {}}};
    const InteractionStore one = InteractionStore::build(1, 6, xs);
    const EpochSample e = sample_epoch(one, 5, 2);
    std::set<Index> negs;
    for (const auto& x : e.instances) {
      if (x.label == 0) negs.insert(x.item);
    }
    CHECK(negs.size() == 5);
    CHECK(e.replacement_warnings == 0);
  }
  SUBCASE("small unobserved set falls back to replacement") {
    std::vector<Interaction> xs{{0, 0, {}}, {0, 1, {}}};
    const EpochSample e = sample_epoch(InteractionStore::build(1, 3, xs), 4, 2);
    CHECK(e.replacement_warnings == 2);
    CHECK(e.instances.size() == 10);
  }
  SUBCASE("batches cover the epoch") {
    const EpochSample e = sample_epoch(s, 4, 3);
    std::size_t total = 0;
    for (const auto& b : e.batches(64)) {
      CHECK(b.size() <= 64);
      CHECK(b.users.size() == b.labels.size());
      total += b.size();
    }
    CHECK(total == e.instances.size());
  }
}

TEST_CASE("write then load round-trips") {
  SyntheticOptions opts;
  opts.users = 30;
  const Dataset ds = make_synthetic_dataset(opts);
  const auto dir = temp_dir("roundtrip");
  write_dataset(dir / "syn", ds);
  const Dataset back = load_dataset(dir / "syn");
  CHECK(back.train == ds.train);
  REQUIRE(back.tests.size() == ds.tests.size());
  for (std::size_t u = 0; u < ds.tests.size(); ++u) {
    CHECK(back.tests[u].positive_item == ds.tests[u].positive_item);
    CHECK(back.tests[u].negative_items == ds.tests[u].negative_items);
  }
  CHECK(holdout_validation(back.train).held_out == holdout_validation(ds.train).held_out);
}

TEST_CASE("synthetic dataset satisfies the test-instance invariants") {
  SyntheticOptions opts;
  const Dataset ds = make_synthetic_dataset(opts);
  CHECK(ds.train.num_users() == opts.users);
  CHECK(ds.tests.size() == opts.users);
  for (const auto& t : ds.tests) {
    CHECK(t.negative_items.size() == 99);
    CHECK_FALSE(ds.train.contains(t.user, t.positive_item));
    for (Index j : t.negative_items) {
      CHECK(j != t.positive_item);
      CHECK_FALSE(ds.train.contains(t.user, j));
    }
  }
}
