#include <doctest.h>

#include <cmath>
#include <set>

#include "dncf/error.hpp"
#include "dncf/models.hpp"
#include "support.hpp"

using namespace dncf;
using namespace dncf::testing;

namespace {

struct Variant {
  ModelKind kind;
  Combiner combiner;
};

const Variant kVariants[] = {
    {ModelKind::kDgmf, Combiner::kSum},       {ModelKind::kDgmf, Combiner::kMean},
    {ModelKind::kDgmf, Combiner::kConcat},    {ModelKind::kDgmf, Combiner::kAttention},
    {ModelKind::kDmlp, Combiner::kSum},       {ModelKind::kDnmf, Combiner::kSum},
    {ModelKind::kDnmf, Combiner::kAttention}, {ModelKind::kDncfMf, Combiner::kSum},
};

}  // namespace

TEST_CASE("gradients match central differences for every variant") {
  for (const auto& v : kVariants) {
    for (std::uint64_t seed : {1u, 2u}) {
      const GradFixture f = grad_fixture(seed);
      Model model = Model::create(grad_spec(v.kind, v.combiner), 5, 5, seed + 10);
      const GradCheck g = check_gradients(model, f.store, f.pairs);
      INFO(to_string(v.kind), "/", to_string(v.combiner), " worst ", g.worst);
      CHECK(g.entries > 0);
      CHECK(g.max_rel_error < kGradRelTol);
    }
  }
}

TEST_CASE("gradients with self-exclusion and a layer-0 tower") {
  const GradFixture f = grad_fixture(3);
  ModelSpec excl = grad_spec(ModelKind::kDnmf);
  excl.exclude_self_history = true;
  Model a = Model::create(excl, 5, 5, 4);
  CHECK(check_gradients(a, f.store, f.pairs).max_rel_error < kGradRelTol);

  ModelSpec flat = grad_spec(ModelKind::kDmlp);
  flat.mlp_layers = std::vector<std::size_t>{};
  Model b = Model::create(flat, 5, 5, 4);
  CHECK(b.layers().empty());
  CHECK(b.head()->weight.value.cols() == 16);
  CHECK(check_gradients(b, f.store, f.pairs).max_rel_error < kGradRelTol);
}

TEST_CASE("rows off the forward path get zero gradient") {
  std::vector<Interaction> xs{{0, 0, {}}, {1, 1, {}}, {2, 2, {}}};
  const InteractionStore store = InteractionStore::build(3, 4, xs);
  Model model = Model::create(grad_spec(ModelKind::kDgmf), 3, 4, 1);
  ForwardTape tape;
  model.forward(store, 0, 1, tape);
  model.backward(store, tape, 0.3);
  const Parameter* p = model.find_parameter("gmf.user_id");
  const Parameter* q = model.find_parameter("gmf.item_id");
  for (std::size_t d = 0; d < 4; ++d) {
    CHECK(p->grad(0, d) != 0.0);
    CHECK(p->grad(2, d) == 0.0);
    CHECK(q->grad(3, d) == 0.0);
  }
}

TEST_CASE("scores") {
  const InteractionStore store = random_store(6, 8, 0.4, 2);
  SUBCASE("all-zero dgmf predicts one half") {
    ModelSpec spec = grad_spec(ModelKind::kDgmf);
    spec.init_stddev = 0.0;
    const Model m = Model::create(spec, 6, 8, 1);
    for (Index u = 0; u < 6; ++u) {
      for (Index i = 0; i < 8; ++i) CHECK(m.score(store, u, i) == 0.5);
    }
  }
  SUBCASE("probabilities lie in (0, 1)") {
    for (auto kind : {ModelKind::kDgmf, ModelKind::kDmlp, ModelKind::kDnmf}) {
      const Model m = Model::create(grad_spec(kind), 6, 8, 3);
      for (Index i = 0; i < 8; ++i) {
        const double s = m.score(store, 1, i);
        CHECK(s > 0.0);
        CHECK(s < 1.0);
      }
    }
  }
  SUBCASE("itempop orders by training popularity") {
    std::vector<Interaction> xs;
    for (Index u = 0; u < 10; ++u) xs.push_back({u, 0, {}});
    for (Index u = 0; u < 3; ++u) xs.push_back({u, 1, {}});
    const InteractionStore pop = InteractionStore::build(10, 2, xs);
    ModelSpec spec;
    spec.kind = ModelKind::kItemPop;
    const Model m = Model::create(spec, 10, 2, 0);
    for (Index u = 0; u < 10; ++u) CHECK(m.score(pop, u, 0) > m.score(pop, u, 1));
    CHECK(m.parameters().empty());
  }
  SUBCASE("score_items agrees with score") {
    for (const auto& v : kVariants) {
      for (bool excl : {false, true}) {
        ModelSpec spec = grad_spec(v.kind, v.combiner);
        spec.exclude_self_history = excl;
        const Model m = Model::create(spec, 6, 8, 5);
        const std::vector<Index> items{0, 1, 2, 3, 4, 5, 6, 7};
        const auto batch = m.score_items(store, 2, items);
        for (Index i : items) CHECK(batch[i] == m.score(store, 2, i));
      }
    }
  }
}

TEST_CASE("parameter enumeration") {
  Model m = Model::create(grad_spec(ModelKind::kDnmf, Combiner::kAttention), 5, 6, 1);
  std::set<std::string> names;
  std::size_t gmf = 0;
  std::size_t mlp = 0;
  for (const Parameter* p : m.parameters()) {
    CHECK(names.insert(p->name).second);
    gmf += p->name.starts_with("gmf.");
    mlp += p->name.starts_with("mlp.");
  }
  CHECK(gmf == 10);
  CHECK(mlp == 8);
  CHECK(names.count("head.h") == 1);
  CHECK(m.find_parameter("mlp.item_history")->value.rows() == 6);
  CHECK(m.find_parameter("mlp.user_history")->value.rows() == 5);

  Model again = Model::create(grad_spec(ModelKind::kDnmf, Combiner::kAttention), 5, 6, 1);
  CHECK(m.to_checkpoint() == again.to_checkpoint());
}

TEST_CASE("default tower") {
  CHECK(tower_layers(64, 3) == std::vector<std::size_t>{256, 128, 64});
  CHECK(tower_layers(8, 0).empty());
  ModelSpec spec;
  spec.kind = ModelKind::kDmlp;
  spec.factors = 8;
  Model m = Model::create(spec, 3, 3, 0);
  REQUIRE(m.layers().size() == 3);
  CHECK(m.layers()[0].in_width() == 32);
  CHECK(m.layers()[0].out_width() == 32);
  CHECK(m.layers()[2].out_width() == 8);
}

TEST_CASE("spec validation") {
  ModelSpec spec;
  spec.kind = ModelKind::kDncfMf;
  spec.combiner = Combiner::kMean;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.kind = ModelKind::kDgmf;
  spec.factors = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  CHECK_THROWS_AS(parse_model_kind("neumf"), ConfigError);
  CHECK(parse_model_kind("dncf-mf") == ModelKind::kDncfMf);
  CHECK_THROWS_AS(parse_combiner("max"), ConfigError);
}

TEST_CASE("SVD++ and FISM recovery") {
  const InteractionStore store = random_store(5, 5, 0.4, 9);
  ModelSpec spec = grad_spec(ModelKind::kDncfMf);
  Model m = Model::create(spec, 5, 5, 21);
  // The table aggregated into the item-side history vector.
  m.find_parameter("mf.user_history")->value.fill(0.0);
  const Parameter& P = *m.find_parameter("mf.user_id");
  const Parameter& Q = *m.find_parameter("mf.item_id");
  const Parameter& Y = *m.find_parameter("mf.item_history");
  for (Index u = 0; u < 5; ++u) {
    for (Index i = 0; i < 5; ++i) {
      CHECK(std::abs(m.score(store, u, i) - svdpp_score(P, Q, Y, store, u, i)) <= kRecoveryTol);
    }
  }
  SUBCASE("single history item") {
    std::vector<Interaction> xs{{0, 3, {}}};
    const InteractionStore one = InteractionStore::build(5, 5, xs);
    const auto p = table_row(P, 0);
    const auto q = table_row(Q, 1);
    const auto y = table_row(Y, 3);
    double expect = 0.0;
    for (std::size_t d = 0; d < 4; ++d) expect += (p[d] + y[d]) * q[d];
    CHECK(std::abs(m.score(one, 0, 1) - expect) <= kRecoveryTol);
  }
  SUBCASE("empty history") {
    std::vector<Interaction> xs{{1, 3, {}}};
    const InteractionStore other = InteractionStore::build(5, 5, xs);
    const auto p = table_row(P, 0);
    const auto q = table_row(Q, 2);
    double expect = 0.0;
    for (std::size_t d = 0; d < 4; ++d) expect += p[d] * q[d];
    CHECK(std::abs(m.score(other, 0, 2) - expect) <= kRecoveryTol);
  }
  SUBCASE("FISM") {
    m.find_parameter("mf.user_id")->value.fill(0.0);
    for (Index u = 0; u < 5; ++u) {
      for (Index i = 0; i < 5; ++i) {
        CHECK(std::abs(m.score(store, u, i) - fism_score(Q, Y, store, u, i)) <= kRecoveryTol);
      }
    }
  }
}

TEST_CASE("fusion") {
  const InteractionStore store = random_store(5, 6, 0.4, 4);
  ModelSpec nmf = grad_spec(ModelKind::kDnmf);
  const Model gmf = Model::create(dgmf_part_spec(nmf), 5, 6, 1);
  const Model mlp = Model::create(dmlp_part_spec(nmf), 5, 6, 2);
  Model fused = fuse(gmf.to_checkpoint(), mlp.to_checkpoint(), nmf, 5, 6, 3);

  SUBCASE("part outputs are copied exactly") {
    for (Index u = 0; u < 5; ++u) {
      for (Index i = 0; i < 6; ++i) {
        CHECK(fused.gmf_output(store, u, i) == gmf.gmf_output(store, u, i));
        CHECK(fused.mlp_output(store, u, i) == mlp.mlp_output(store, u, i));
      }
    }
  }
  SUBCASE("head is concatenated, bias averaged") {
    const Checkpoint g = gmf.to_checkpoint();
    const Checkpoint l = mlp.to_checkpoint();
    const auto h = fused.head()->weight.value.row(0);
    const auto& gh = g.find("head.h")->values;
    const auto& lh = l.find("head.h")->values;
    REQUIRE(h.size() == gh.size() + lh.size());
    for (std::size_t k = 0; k < gh.size(); ++k) CHECK(h[k] == gh[k]);
    for (std::size_t k = 0; k < lh.size(); ++k) CHECK(h[gh.size() + k] == lh[k]);
    CHECK(fused.head()->bias.value(0, 0) ==
          0.5 * (g.find("head.b")->values[0] + l.find("head.b")->values[0]));
  }
  SUBCASE("checkpoint round trip") {
    Model back = Model::create(nmf, 5, 6, 99);
    back.load_checkpoint(decode_checkpoint(encode_checkpoint(fused.to_checkpoint())));
    CHECK(back.to_checkpoint() == fused.to_checkpoint());
  }
  SUBCASE("mismatched factors") {
    ModelSpec wide = dgmf_part_spec(nmf);
    wide.factors = 8;
    const Model other = Model::create(wide, 5, 6, 1);
    try {
      fuse(other.to_checkpoint(), mlp.to_checkpoint(), nmf, 5, 6, 3);
      FAIL("expected FusionError");
    } catch (const FusionError& e) {
      CHECK(std::string(e.what()).find("gmf.user_id") != std::string::npos);
    }
  }
  SUBCASE("zeroed MLP head ranks like DGMF alone") {
    auto h = fused.head()->weight.value.row(0);
    for (std::size_t k = 4; k < h.size(); ++k) h[k] = 0.0;
    const std::vector<Index> items{0, 1, 2, 3, 4, 5};
    for (Index u = 0; u < 5; ++u) {
      const auto a = fused.score_items(store, u, items);
      const auto b = gmf.score_items(store, u, items);
      for (std::size_t x = 0; x < 6; ++x) {
        for (std::size_t y = 0; y < 6; ++y) CHECK((a[x] < a[y]) == (b[x] < b[y]));
      }
    }
  }
}

TEST_CASE("strict checkpoint loading") {
  ModelSpec spec = grad_spec(ModelKind::kDgmf);
  Model m = Model::create(spec, 5, 6, 1);
  Model bigger = Model::create(spec, 7, 6, 1);
  try {
    m.load_checkpoint(bigger.to_checkpoint());
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()) == "tensor 'gmf.user_id': expected [5,4], found [7,4]");
  }
  Checkpoint extra = m.to_checkpoint();
  extra.tensors.push_back({"bogus", {1}, {0.0}});
  CHECK_THROWS_AS(m.load_checkpoint(extra), CheckpointError);
  Checkpoint missing = m.to_checkpoint();
  missing.tensors.pop_back();
  CHECK_THROWS_AS(m.load_checkpoint(missing), CheckpointError);
}

TEST_CASE("mini-batch forward and backward agree with the per-row path") {
  const InteractionStore store = random_store(12, 15, 0.3, 41);
  std::vector<Index> users;
  std::vector<Index> items;
  std::vector<double> grads;
  std::mt19937_64 gen(5);
  for (int n = 0; n < 37; ++n) {
    users.push_back(static_cast<Index>(gen() % 12));
    items.push_back(static_cast<Index>(gen() % 15));
    grads.push_back(static_cast<double>(gen() % 1000) / 500.0 - 1.0);
  }
  for (ModelKind kind : {ModelKind::kDgmf, ModelKind::kDmlp, ModelKind::kDnmf, ModelKind::kDncfMf}) {
    CAPTURE(to_string(kind));
    ModelSpec spec = grad_spec(kind, kind == ModelKind::kDgmf ? Combiner::kAttention : Combiner::kSum);
    Model batched = Model::create(spec, 12, 15, 3);
    Model single = Model::create(spec, 12, 15, 3);

    BatchTape tape;
    const std::vector<double> logits = batched.forward_batch(store, users, items, tape);
    batched.backward_batch(store, tape, grads);

    ForwardTape row;
    for (std::size_t n = 0; n < users.size(); ++n) {
      CHECK(single.forward(store, users[n], items[n], row) == logits[n]);
      single.backward(store, row, grads[n]);
    }
    const auto a = batched.parameters();
    const auto b = single.parameters();
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) {
      for (std::size_t e = 0; e < a[p]->grad.size(); ++e) {
        const double x = a[p]->grad.data()[e];
        const double y = b[p]->grad.data()[e];
        worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1.0}));
      }
    }
    CHECK(worst < 1e-12);
    const auto scores = batched.score_items(store, users[0], items);
    for (std::size_t n = 0; n < items.size(); ++n) {
      CHECK(scores[n] == batched.score(store, users[0], items[n]));
    }
  }
}
