#include <doctest.h>

#include <cmath>

#include "dncf/error.hpp"
#include "dncf/nn.hpp"
#include "dncf/rng.hpp"

using namespace dncf;

namespace {

EmbeddingTable table_from(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return make_embedding("t", EmbeddingRole::kItemHistory,
                        DenseMatrix(rows, cols, std::move(values)));
}

void expect_near(const DenseVector& a, const DenseVector& b, double tol = 1e-15) {
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) <= tol);
}

}  // namespace

TEST_CASE("id embedding") {
  const EmbeddingTable t = table_from(2, 2, {0.1, 0.2, 0.3, 0.4});
  CHECK(id_embedding(t, 0) == DenseVector{0.1, 0.2});
  CHECK(id_embedding(t, 1) == id_embedding(t, 1));
  CHECK_THROWS_AS(id_embedding(t, 2), IndexError);
  SeededRng rng(1);
  const EmbeddingTable z =
      make_embedding("z", EmbeddingRole::kUserId, gaussian_init(3, 4, 0.0, 0.0, rng));
  CHECK(id_embedding(z, 2) == DenseVector(4));
}

TEST_CASE("history embedding") {
  const EmbeddingTable t = table_from(3, 2, {1, 0, 0, 1, 5, 7});
  const std::vector<Index> single{2};
  CHECK(history_embedding(t, single) == id_embedding(t, 2));
  const std::vector<Index> pair{0, 1};
  const double r = 1.0 / std::sqrt(2.0);
  expect_near(history_embedding(t, pair), DenseVector{r, r});
  CHECK(history_embedding(t, {}) == DenseVector(2));
  const std::vector<Index> bad{3};
  CHECK_THROWS_AS(history_embedding(t, bad), IndexError);

  SUBCASE("self exclusion") {
    const std::vector<Index> three{0, 1, 2};
    expect_near(history_embedding(t, three, Index{2}), DenseVector{r, r});
    const std::vector<Index> only{1};
    CHECK(history_embedding(t, only, Index{1}) == DenseVector(2));
  }
}

TEST_CASE("history backward scales neighbor rows") {
  EmbeddingTable t = table_from(4, 2, std::vector<double>(8, 0.3));
  const std::vector<Index> nb{0, 3};
  history_embedding_backward(t, nb, std::nullopt, DenseVector{1.0, 2.0});
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(t.param.grad(0, 0) == doctest::Approx(r));
  CHECK(t.param.grad(3, 1) == doctest::Approx(2 * r));
  CHECK(t.param.grad(1, 0) == 0.0);
  CHECK(t.param.grad(2, 1) == 0.0);
}

TEST_CASE("combiners") {
  const DenseVector p{1, 2};
  const DenseVector m{3, 4};
  CHECK(combine(Combiner::kSum, p, m) == DenseVector{4, 6});
  CHECK(combine(Combiner::kMean, p, m) == DenseVector{2, 3});
  CHECK(combine(Combiner::kConcat, p, m) == DenseVector{1, 2, 3, 4});
  CHECK(combined_width(Combiner::kConcat, 2) == 4);
  CHECK_THROWS_AS(combine(Combiner::kSum, p, DenseVector{1}), ShapeError);
  CHECK_THROWS_AS(combine(Combiner::kAttention, p, m), ConfigError);

  const DenseVector sum = combine(Combiner::kSum, p, m);
  const DenseVector mean = combine(Combiner::kMean, p, m);
  for (std::size_t k = 0; k < 2; ++k) CHECK(sum[k] == 2.0 * mean[k]);
}

TEST_CASE("attention combiner") {
  SeededRng rng(3);
  const AttentionCombiner attn = make_attention("a", 4, 4, 0.5, rng);
  const DenseVector p{0.3, -0.1, 0.8, 0.2};
  AttentionTape tape;
  const DenseVector v = combine(Combiner::kAttention, p, p, &attn, &tape);
  CHECK(tape.alpha == 0.5);
  expect_near(v, p);

  for (int trial = 0; trial < 20; ++trial) {
    const DenseMatrix xs = gaussian_init(2, 4, 0.0, 1.0, rng);
    const DenseVector a(xs.row(0));
    const DenseVector b(xs.row(1));
    const double ab = attention_weight(attn, a, b);
    const double ba = attention_weight(attn, b, a);
    CHECK(ab > 0.0);
    CHECK(ab < 1.0);
    CHECK(std::abs(ab - (1.0 - ba)) <= 1e-15);
  }
}

TEST_CASE("mlp forward") {
  const DenseVector z0{-1.0, -2.0};
  CHECK(mlp_forward({}, z0) == z0);

  SeededRng rng(1);
  DenseLayer layer = make_dense_layer("l", 2, 2, Activation::kRelu, 0.0, rng);
  layer.weight.value = DenseMatrix::identity(2);
  const std::vector<DenseLayer> layers{layer};
  CHECK(mlp_forward(layers, z0) == DenseVector(2));
  CHECK(mlp_forward(layers, DenseVector{0.5, 2.0}) == DenseVector{0.5, 2.0});
  CHECK_THROWS_AS(mlp_forward(layers, DenseVector(3)), ShapeError);
}

TEST_CASE("mlp backward matches finite differences") {
  SeededRng rng(8);
  std::vector<DenseLayer> layers{make_dense_layer("l0", 3, 5, Activation::kRelu, 0.7, rng),
                                 make_dense_layer("l1", 5, 2, Activation::kRelu, 0.7, rng)};
  for (auto& l : layers) l.bias.value = gaussian_init(1, l.out_width(), 0.0, 0.3, rng);
  const DenseVector z0{0.4, -0.9, 1.3};
  const DenseVector g{0.7, -1.1};
  auto objective = [&](const DenseVector& z) { return dot(mlp_forward(layers, z), g); };

  MlpTape tape;
  mlp_forward(layers, z0, &tape);
  const DenseVector dz0 = mlp_backward(layers, tape, g);
  const double h = 1e-6;
  for (std::size_t k = 0; k < 3; ++k) {
    DenseVector up = z0;
    DenseVector down = z0;
    up[k] += h;
    down[k] -= h;
    const double numeric = (objective(up) - objective(down)) / (2 * h);
    CHECK(std::abs(numeric - dz0[k]) <= 1e-8);
  }
  for (auto& l : layers) {
    for (Parameter* p : {&l.weight, &l.bias}) {
      for (std::size_t e = 0; e < p->value.size(); ++e) {
        const double saved = p->value.data()[e];
        p->value.data()[e] = saved + h;
        const double up = objective(z0);
        p->value.data()[e] = saved - h;
        const double down = objective(z0);
        p->value.data()[e] = saved;
        CHECK(std::abs((up - down) / (2 * h) - p->grad.data()[e]) <= 1e-8);
      }
    }
  }
}

TEST_CASE("backward is linear in the incoming gradient") {
  SeededRng rng(2);
  OutputHead a = make_head("a", 3, 0.5, rng);
  OutputHead b = a;
  const DenseVector z{0.1, 0.2, -0.3};
  const DenseVector ga = head_backward(a, z, 0.25);
  const DenseVector gb = head_backward(b, z, 0.5);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(gb[k] == 2.0 * ga[k]);
    CHECK(b.weight.grad(0, k) == 2.0 * a.weight.grad(0, k));
  }
  CHECK(b.bias.grad(0, 0) == 2.0 * a.bias.grad(0, 0));
  CHECK_THROWS_AS(head_backward(a, DenseVector(2), 1.0), ShapeError);
}

TEST_CASE("prediction head and sigmoid") {
  SeededRng rng(1);
  OutputHead head = make_head("head", 3, 0.0, rng);
  CHECK(predict_head(head, DenseVector{1, 2, 3}) == 0.5);
  head.weight.value.fill(1.0);
  double last = 0.0;
  for (double s : {1.0, 5.0, 10.0, 20.0}) {
    const double y = predict_head(head, DenseVector{s, s, s});
    CHECK(y > last);
    CHECK(y <= 1.0);
    last = y;
  }
  SeededRng xs(5);
  for (int k = 0; k < 100; ++k) {
    const double x = xs.normal(0.0, 10.0);
    CHECK(std::abs(sigmoid(x) + sigmoid(-x) - 1.0) <= 1e-15);
  }
  CHECK(sigmoid(-1000.0) >= 0.0);
  CHECK(sigmoid(1000.0) <= 1.0);
}

TEST_CASE("bce loss and gradient") {
  CHECK(bce_loss(1.0, 1) == doctest::Approx(0.0).epsilon(1e-11));
  CHECK(bce_loss(0.5, 1) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(0.5, 0) == doctest::Approx(std::log(2.0)));
  CHECK(std::isfinite(bce_loss(0.0, 1)));
  CHECK(std::isfinite(bce_loss(1.0, 0)));
  CHECK(bce_grad(0.25, 1) == doctest::Approx(-4.0));
  CHECK(bce_grad(0.25, 0) == doctest::Approx(1.0 / 0.75));
  // Chain rule through the sigmoid reproduces the logit gradient.
  for (double x : {-3.0, -0.2, 0.0, 1.7}) {
    const double y_hat = sigmoid(x);
    for (int y : {0, 1}) {
      CHECK(bce_grad(y_hat, y) * y_hat * (1 - y_hat) ==
            doctest::Approx(bce_logit_grad(y_hat, y)).epsilon(1e-12));
    }
  }
}
