#include "dncf/nn.hpp"

#include <algorithm>
#include <cmath>

#include "dncf/error.hpp"
#include "dncf/rng.hpp"

namespace dncf {

Parameter::Parameter(std::string n, std::vector<std::size_t> s, DenseMatrix v, bool reg)
    : name(std::move(n)),
      shape(std::move(s)),
      value(std::move(v)),
      grad(value.rows(), value.cols()),
      regularized(reg) {}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingTable make_embedding(std::string name, EmbeddingRole role, DenseMatrix init) {
  if (init.cols() == 0) throw ConfigError("embedding '" + name + "' needs k > 0");
  std::vector<std::size_t> shape{init.rows(), init.cols()};
  return EmbeddingTable{role, Parameter(std::move(name), std::move(shape), std::move(init), true)};
}

namespace {

void check_row(const EmbeddingTable& table, Index index) {
  if (index >= table.rows()) {
    throw IndexError("embedding '" + table.param.name + "': index " + std::to_string(index) +
                     " >= " + std::to_string(table.rows()));
  }
}

std::size_t effective_count(std::span<const Index> neighbors, std::optional<Index> exclude) {
  std::size_t n = neighbors.size();
  if (exclude && std::binary_search(neighbors.begin(), neighbors.end(), *exclude)) --n;
  return n;
}

void require_width(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": width " + std::to_string(got) + ", expected " +
                     std::to_string(want));
  }
}

}  // namespace

DenseVector id_embedding(const EmbeddingTable& table, Index index) {
  check_row(table, index);
  return DenseVector(table.param.value.row(index));
}

void id_embedding_backward(EmbeddingTable& table, Index index, const DenseVector& grad) {
  check_row(table, index);
  axpy(1.0, grad.span(), table.param.grad.row(index));
}

DenseVector history_embedding(const EmbeddingTable& table, std::span<const Index> neighbors,
                              std::optional<Index> exclude) {
  DenseVector out(table.dim());
  const std::size_t count = effective_count(neighbors, exclude);
  if (count == 0) {
    for (Index j : neighbors) check_row(table, j);
    return out;
  }
  for (Index j : neighbors) {
    check_row(table, j);
    if (exclude && j == *exclude) continue;
    axpy(1.0, table.param.value.row(j), out.span());
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(count));
  for (double& v : out) v *= norm;
  return out;
}

void history_embedding_backward(EmbeddingTable& table, std::span<const Index> neighbors,
                                std::optional<Index> exclude, const DenseVector& grad) {
  const std::size_t count = effective_count(neighbors, exclude);
  if (count == 0) return;
  const double norm = 1.0 / std::sqrt(static_cast<double>(count));
  for (Index j : neighbors) {
    check_row(table, j);
    if (exclude && j == *exclude) continue;
    axpy(norm, grad.span(), table.param.grad.row(j));
  }
}

// ---------------------------------------------------------------------------
// Combination functions

std::size_t combined_width(Combiner combiner, std::size_t dim) {
  return combiner == Combiner::kConcat ? 2 * dim : dim;
}

AttentionCombiner make_attention(const std::string& prefix, std::size_t dim,
                                 std::size_t hidden, double stddev, SeededRng& rng) {
  if (hidden == 0) throw ConfigError("attention hidden width must be positive");
  AttentionCombiner a;
  a.weight = Parameter(prefix + ".w", {dim, hidden}, gaussian_init(dim, hidden, 0.0, stddev, rng),
                       true);
  a.bias = Parameter(prefix + ".b", {hidden}, DenseMatrix(1, hidden), false);
  a.out = Parameter(prefix + ".h", {hidden}, gaussian_init(1, hidden, 0.0, stddev, rng), true);
  return a;
}

double attention_score(const AttentionCombiner& attn, const DenseVector& x, DenseVector* pre) {
  DenseVector z = matvec_transposed(attn.weight.value, x);
  const auto b = attn.bias.value.row(0);
  const auto h = attn.out.value.row(0);
  double score = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    z[k] += b[k];
    if (z[k] > 0.0) score += h[k] * z[k];
  }
  if (pre != nullptr) *pre = std::move(z);
  return score;
}

double attention_weight(const AttentionCombiner& attn, const DenseVector& id_vec,
                        const DenseVector& hist_vec) {
  // exp(a) / (exp(a) + exp(b)) == sigmoid(a - b)
  return sigmoid(attention_score(attn, id_vec) - attention_score(attn, hist_vec));
}

DenseVector combine(Combiner method, const DenseVector& id_vec, const DenseVector& hist_vec,
                    const AttentionCombiner* attn, AttentionTape* tape) {
  if (method != Combiner::kConcat) require_width(hist_vec.size(), id_vec.size(), "combine");
  switch (method) {
    case Combiner::kSum:
      return add(id_vec, hist_vec);
    case Combiner::kMean: {
      DenseVector v = add(id_vec, hist_vec);
      for (double& x : v) x *= 0.5;
      return v;
    }
    case Combiner::kConcat:
      return concat(id_vec, hist_vec);
    case Combiner::kAttention: {
      if (attn == nullptr) throw ConfigError("attention combiner requested without parameters");
      require_width(id_vec.size(), attn->weight.value.rows(), "attention input");
      DenseVector pre_id;
      DenseVector pre_hist;
      const double s_id = attention_score(*attn, id_vec, &pre_id);
      const double s_hist = attention_score(*attn, hist_vec, &pre_hist);
      const double alpha = sigmoid(s_id - s_hist);
      DenseVector v(id_vec.size());
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = alpha * id_vec[k] + (1.0 - alpha) * hist_vec[k];
      }
      if (tape != nullptr) {
        tape->pre_id = std::move(pre_id);
        tape->pre_hist = std::move(pre_hist);
        tape->alpha = alpha;
      }
      return v;
    }
  }
  throw ConfigError("unknown combiner");
}

namespace {

// Backpropagates d(att(x)) = grad_score through the attention network,
// accumulating parameter gradients and adding dL/dx into grad_x.
void attention_score_backward(AttentionCombiner& attn, const DenseVector& x,
                              const DenseVector& pre, double grad_score, DenseVector& grad_x) {
  const auto h = attn.out.value.row(0);
  auto gh = attn.out.grad.row(0);
  auto gb = attn.bias.grad.row(0);
  DenseVector grad_pre(pre.size());
  for (std::size_t k = 0; k < pre.size(); ++k) {
    if (pre[k] > 0.0) {
      gh[k] += grad_score * pre[k];
      grad_pre[k] = grad_score * h[k];
      gb[k] += grad_pre[k];
    }
  }
  auto& w = attn.weight.value;
  auto& gw = attn.weight.grad;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    if (x[r] != 0.0) axpy(x[r], grad_pre.span(), gw.row(r));
    grad_x[r] += dot(w.row(r), grad_pre.span());
  }
}

}  // namespace

void combine_backward(Combiner method, const DenseVector& id_vec, const DenseVector& hist_vec,
                      const DenseVector& grad_out, AttentionCombiner* attn,
                      const AttentionTape* tape, DenseVector& grad_id, DenseVector& grad_hist) {
  const std::size_t k = id_vec.size();
  switch (method) {
    case Combiner::kSum:
      axpy(1.0, grad_out.span(), grad_id.span());
      axpy(1.0, grad_out.span(), grad_hist.span());
      return;
    case Combiner::kMean:
      axpy(0.5, grad_out.span(), grad_id.span());
      axpy(0.5, grad_out.span(), grad_hist.span());
      return;
    case Combiner::kConcat:
      require_width(grad_out.size(), 2 * k, "concat backward");
      axpy(1.0, grad_out.span().subspan(0, k), grad_id.span());
      axpy(1.0, grad_out.span().subspan(k, k), grad_hist.span());
      return;
    case Combiner::kAttention: {
      if (attn == nullptr || tape == nullptr) {
        throw Error("attention backward without parameters or tape");
      }
      const double alpha = tape->alpha;
      double grad_alpha = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        grad_id[j] += alpha * grad_out[j];
        grad_hist[j] += (1.0 - alpha) * grad_out[j];
        grad_alpha += grad_out[j] * (id_vec[j] - hist_vec[j]);
      }
      // alpha = sigmoid(s_id - s_hist)
      const double grad_diff = grad_alpha * alpha * (1.0 - alpha);
      attention_score_backward(*attn, id_vec, tape->pre_id, grad_diff, grad_id);
      attention_score_backward(*attn, hist_vec, tape->pre_hist, -grad_diff, grad_hist);
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// MLP

DenseLayer make_dense_layer(const std::string& prefix, std::size_t in, std::size_t out,
                            Activation activation, double stddev, SeededRng& rng) {
  DenseLayer layer;
  layer.weight = Parameter(prefix + ".w", {in, out}, gaussian_init(in, out, 0.0, stddev, rng), true);
  layer.bias = Parameter(prefix + ".b", {out}, DenseMatrix(1, out), false);
  layer.activation = activation;
  return layer;
}

DenseMatrix mlp_forward(std::span<const DenseLayer> layers, const DenseMatrix& z0,
                        MlpTape* tape) {
  if (tape != nullptr) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  DenseMatrix z = z0;
  for (const auto& layer : layers) {
    require_width(z.cols(), layer.in_width(), "dense layer input");
    DenseMatrix pre = matmul(z, layer.weight.value);
    for (std::size_t b = 0; b < pre.rows(); ++b) axpy(1.0, layer.bias.value.row(0), pre.row(b));
    DenseMatrix next = pre;
    if (layer.activation == Activation::kRelu) {
      for (double& v : next.span()) v = std::max(v, 0.0);
    }
    if (tape != nullptr) {
      tape->inputs.push_back(std::move(z));
      tape->pre.push_back(std::move(pre));
    }
    z = std::move(next);
  }
  return z;
}

DenseMatrix mlp_backward(std::span<DenseLayer> layers, const MlpTape& tape,
                         const DenseMatrix& grad_out) {
  if (tape.inputs.size() != layers.size()) throw Error("mlp tape does not match layers");
  DenseMatrix grad = grad_out;
  for (std::size_t l = layers.size(); l-- > 0;) {
    auto& layer = layers[l];
    const DenseMatrix& pre = tape.pre[l];
    const DenseMatrix& input = tape.inputs[l];
    if (grad.rows() != pre.rows() || grad.cols() != pre.cols()) {
      throw ShapeError("mlp gradient does not match the tape");
    }
    if (layer.activation == Activation::kRelu) {
      for (std::size_t k = 0; k < grad.size(); ++k) {
        if (!(pre.data()[k] > 0.0)) grad.data()[k] = 0.0;
      }
    }
    for (std::size_t b = 0; b < grad.rows(); ++b) axpy(1.0, grad.row(b), layer.bias.grad.row(0));
    add_transposed_product(input, grad, layer.weight.grad);
    grad = matmul_transposed(grad, layer.weight.value);
  }
  return grad;
}

DenseVector mlp_forward(std::span<const DenseLayer> layers, const DenseVector& z0,
                        MlpTape* tape) {
  const DenseMatrix out = mlp_forward(layers, DenseMatrix(1, z0.size(), z0.values()), tape);
  return DenseVector(out.row(0));
}

DenseVector mlp_backward(std::span<DenseLayer> layers, const MlpTape& tape,
                         const DenseVector& grad_out) {
  const DenseMatrix out =
      mlp_backward(layers, tape, DenseMatrix(1, grad_out.size(), grad_out.values()));
  return DenseVector(out.row(0));
}

// ---------------------------------------------------------------------------
// Prediction head and loss

OutputHead make_head(const std::string& prefix, std::size_t width, double stddev,
                     SeededRng& rng) {
  OutputHead head;
  head.weight = Parameter(prefix + ".h", {width}, gaussian_init(1, width, 0.0, stddev, rng), true);
  head.bias = Parameter(prefix + ".b", {}, DenseMatrix(1, 1), false);
  return head;
}

double head_logit(const OutputHead& head, const DenseVector& z) {
  require_width(z.size(), head.weight.value.cols(), "prediction head");
  return dot(head.weight.value.row(0), z.span()) + head.bias.value(0, 0);
}

double predict_head(const OutputHead& head, const DenseVector& z) {
  return sigmoid(head_logit(head, z));
}

DenseVector head_backward(OutputHead& head, const DenseVector& z, double grad_logit) {
  require_width(z.size(), head.weight.value.cols(), "prediction head backward");
  axpy(grad_logit, z.span(), head.weight.grad.row(0));
  head.bias.grad(0, 0) += grad_logit;
  return scale(DenseVector(head.weight.value.row(0)), grad_logit);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_loss(double y_hat, int y) {
  const double p = std::clamp(y_hat, kBceEpsilon, 1.0 - kBceEpsilon);
  return y != 0 ? -std::log(p) : -std::log(1.0 - p);
}

double bce_grad(double y_hat, int y) {
  const double p = std::clamp(y_hat, kBceEpsilon, 1.0 - kBceEpsilon);
  return y != 0 ? -1.0 / p : 1.0 / (1.0 - p);
}

}  // namespace dncf
