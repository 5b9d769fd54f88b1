#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dncf/data.hpp"
#include "dncf/tensor.hpp"

namespace dncf {

// A trainable tensor with its gradient accumulator. Values are stored as a
// matrix; `shape` is the logical shape ({} scalar, {n} vector, {r, c} matrix)
// used by checkpoints.
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  DenseMatrix value;
  DenseMatrix grad;
  bool regularized = true;  // L2 applies; false for bias terms

  Parameter() = default;
  Parameter(std::string name, std::vector<std::size_t> shape, DenseMatrix value,
            bool regularized);

  void zero_grad() { grad.fill(0.0); }
};

enum class EmbeddingRole { kUserId, kItemId, kItemHistory, kUserHistory };

struct EmbeddingTable {
  EmbeddingRole role = EmbeddingRole::kUserId;
  Parameter param;

  std::size_t rows() const { return param.value.rows(); }
  std::size_t dim() const { return param.value.cols(); }
};

EmbeddingTable make_embedding(std::string name, EmbeddingRole role, DenseMatrix init);

// Row `index` of the table (one-hot lookup).
DenseVector id_embedding(const EmbeddingTable& table, Index index);
void id_embedding_backward(EmbeddingTable& table, Index index, const DenseVector& grad);

// |R|^(-1/2) * sum of the neighbour rows. An empty neighbour set (or one whose
// only member is excluded) yields the zero vector. `exclude` drops one member
// from the set before aggregation.
DenseVector history_embedding(const EmbeddingTable& table, std::span<const Index> neighbors,
                              std::optional<Index> exclude = std::nullopt);
void history_embedding_backward(EmbeddingTable& table, std::span<const Index> neighbors,
                                std::optional<Index> exclude, const DenseVector& grad);

enum class Combiner { kSum, kMean, kConcat, kAttention };

std::size_t combined_width(Combiner combiner, std::size_t dim);

// att(x) = h_a . relu(W_a^T x + b_a); the ID/history weight is a two-way
// softmax over att(id) and att(hist).
struct AttentionCombiner {
  Parameter weight;  // dim x hidden
  Parameter bias;    // hidden
  Parameter out;     // hidden
};

AttentionCombiner make_attention(const std::string& prefix, std::size_t dim,
                                 std::size_t hidden, double stddev, SeededRng& rng);

struct AttentionTape {
  DenseVector pre_id;
  DenseVector pre_hist;
  double alpha = 0.5;
};

double attention_score(const AttentionCombiner& attn, const DenseVector& x,
                       DenseVector* pre = nullptr);
double attention_weight(const AttentionCombiner& attn, const DenseVector& id_vec,
                        const DenseVector& hist_vec);

DenseVector combine(Combiner method, const DenseVector& id_vec, const DenseVector& hist_vec,
                    const AttentionCombiner* attn = nullptr, AttentionTape* tape = nullptr);

// Accumulates into grad_id / grad_hist (sized like the inputs) and into the
// attention parameters when method is kAttention.
void combine_backward(Combiner method, const DenseVector& id_vec, const DenseVector& hist_vec,
                      const DenseVector& grad_out, AttentionCombiner* attn,
                      const AttentionTape* tape, DenseVector& grad_id, DenseVector& grad_hist);

enum class Activation { kRelu, kIdentity };

// z_out = act(W^T z_in + b), W stored as (in x out).
struct DenseLayer {
  Parameter weight;
  Parameter bias;
  Activation activation = Activation::kRelu;

  std::size_t in_width() const { return weight.value.rows(); }
  std::size_t out_width() const { return weight.value.cols(); }
};

DenseLayer make_dense_layer(const std::string& prefix, std::size_t in, std::size_t out,
                            Activation activation, double stddev, SeededRng& rng);

// One row per instance.
struct MlpTape {
  std::vector<DenseMatrix> inputs;
  std::vector<DenseMatrix> pre;
};

// Batched tower: row b of the result is the output for row b of z0.
DenseMatrix mlp_forward(std::span<const DenseLayer> layers, const DenseMatrix& z0,
                        MlpTape* tape = nullptr);
// Returns dL/dz0 row by row; accumulates layer gradients over all rows.
DenseMatrix mlp_backward(std::span<DenseLayer> layers, const MlpTape& tape,
                         const DenseMatrix& grad_out);

// Single-instance forms.
DenseVector mlp_forward(std::span<const DenseLayer> layers, const DenseVector& z0,
                        MlpTape* tape = nullptr);
DenseVector mlp_backward(std::span<DenseLayer> layers, const MlpTape& tape,
                         const DenseVector& grad_out);

struct OutputHead {
  Parameter weight;  // h
  Parameter bias;    // b_out, scalar
};

OutputHead make_head(const std::string& prefix, std::size_t width, double stddev,
                     SeededRng& rng);

double head_logit(const OutputHead& head, const DenseVector& z);
double predict_head(const OutputHead& head, const DenseVector& z);
// Returns dL/dz; accumulates head gradients.
DenseVector head_backward(OutputHead& head, const DenseVector& z, double grad_logit);

double sigmoid(double x);

inline constexpr double kBceEpsilon = 1e-12;

// Binary cross-entropy with y_hat clamped to [eps, 1 - eps].
double bce_loss(double y_hat, int y);
// d bce_loss / d y_hat.
double bce_grad(double y_hat, int y);
// d bce_loss(sigmoid(logit)) / d logit = y_hat - y, without clamping.
inline double bce_logit_grad(double y_hat, int y) { return y_hat - static_cast<double>(y); }

}  // namespace dncf
