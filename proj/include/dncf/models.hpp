#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dncf/checkpoint.hpp"
#include "dncf/data.hpp"
#include "dncf/nn.hpp"

namespace dncf {

enum class ModelKind { kItemPop, kDgmf, kDmlp, kDnmf, kDncfMf };

std::string_view to_string(ModelKind kind);
std::string_view to_string(Combiner combiner);
ModelKind parse_model_kind(std::string_view name);
Combiner parse_combiner(std::string_view name);

// Hidden widths of a halving tower that ends at `factors`:
// depth 3, factors 64 -> {256, 128, 64}; depth 0 -> {}.
std::vector<std::size_t> tower_layers(std::size_t factors, std::size_t depth);

struct ModelSpec {
  ModelKind kind = ModelKind::kDgmf;
  std::size_t factors = 64;
  // Hidden widths for the MLP part; nullopt selects tower_layers(factors, 3).
  std::optional<std::vector<std::size_t>> mlp_layers;
  Combiner combiner = Combiner::kSum;  // DGMF part only; the MLP part concatenates
  std::size_t dmlp_embed = 0;          // MLP-part embedding width; 0 means `factors`
  std::size_t attention_hidden = 0;    // 0 means the embedding width
  // Drop the target item from the user's history (and the user from the
  // item's) when forming history embeddings.
  bool exclude_self_history = false;
  double init_stddev = 0.01;

  std::vector<std::size_t> hidden_layers() const;
  std::size_t mlp_embed_width() const { return dmlp_embed == 0 ? factors : dmlp_embed; }
  std::size_t attention_width() const { return attention_hidden == 0 ? factors : attention_hidden; }
  bool has_gmf_part() const;
  bool has_mlp_part() const;
  bool trainable() const { return kind != ModelKind::kItemPop; }
  // Throws ConfigError for inconsistent settings.
  void validate() const;
};

// ID tables, history tables and optional attention networks for one part of
// a model.
struct DualEmbeddings {
  EmbeddingTable user_id;       // P
  EmbeddingTable item_id;       // Q
  EmbeddingTable item_history;  // rows aggregated into a user's history vector
  EmbeddingTable user_history;  // rows aggregated into an item's history vector
  std::optional<AttentionCombiner> user_attention;
  std::optional<AttentionCombiner> item_attention;
};

struct SideTape {
  DenseVector id;
  DenseVector history;
  DenseVector combined;
  AttentionTape attention;
};

struct ForwardTape {
  Index user = 0;
  Index item = 0;
  SideTape gmf_user;
  SideTape gmf_item;
  DenseVector gmf_out;  // element-wise product
  SideTape mlp_user;
  SideTape mlp_item;
  MlpTape mlp;
  DenseVector mlp_out;
  DenseVector head_input;
  double logit = 0.0;
};

struct BatchTape {
  std::vector<ForwardTape> rows;  // embedding state per row
  MlpTape mlp;                    // tower state, one row per instance
};

class Model {
 public:
  static Model create(const ModelSpec& spec, std::size_t num_users, std::size_t num_items,
                      std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }

  // Ranking score. Probabilities for dgmf/dmlp/dnmf, the raw inner product
  // for dncf_mf, and training popularity for itempop.
  double score(const InteractionStore& store, Index u, Index i) const;
  // Scores for several items of one user; the user side is computed once.
  std::vector<double> score_items(const InteractionStore& store, Index u,
                                  std::span<const Index> items) const;

  // Training path. Returns the logit (sigmoid input); for dncf_mf that is
  // the inner product itself.
  double forward(const InteractionStore& store, Index u, Index i, ForwardTape& tape) const;
  void backward(const InteractionStore& store, const ForwardTape& tape, double grad_logit);

  // Mini-batch forms of forward/backward. Logits equal forward() row by row;
  // the tower runs once over the whole batch.
  std::vector<double> forward_batch(const InteractionStore& store, std::span<const Index> users,
                                    std::span<const Index> items, BatchTape& tape) const;
  void backward_batch(const InteractionStore& store, const BatchTape& tape,
                      std::span<const double> grad_logits);

  // Output vectors of the two parts (empty when the part is absent).
  DenseVector gmf_output(const InteractionStore& store, Index u, Index i) const;
  DenseVector mlp_output(const InteractionStore& store, Index u, Index i) const;

  // Stable enumeration of every trainable tensor.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find_parameter(std::string_view name);
  void zero_grad();

  DualEmbeddings* gmf_embeddings() { return gmf_ ? &*gmf_ : nullptr; }
  DualEmbeddings* mlp_embeddings() { return mlp_ ? &*mlp_ : nullptr; }
  std::vector<DenseLayer>& layers() { return layers_; }
  OutputHead* head() { return head_ ? &*head_ : nullptr; }

  Checkpoint to_checkpoint() const;
  // Copies every tensor from `checkpoint`; names and shapes must match
  // exactly. Throws CheckpointError naming expected vs found.
  void load_checkpoint(const Checkpoint& checkpoint);

 private:
  Model() = default;

  SideTape user_side(const DualEmbeddings& emb, const InteractionStore& store, Index u,
                     std::optional<Index> exclude, Combiner combiner) const;
  SideTape item_side(const DualEmbeddings& emb, const InteractionStore& store, Index i,
                     std::optional<Index> exclude, Combiner combiner) const;
  double forward_with_user(const InteractionStore& store, Index u, Index i,
                           const SideTape* gmf_user, const SideTape* mlp_user,
                           ForwardTape& tape) const;
  void check_store(const InteractionStore& store) const;
  // Embedding stage of one row; fills the sides and the GMF product.
  void embed_row(const InteractionStore& store, Index u, Index i, const SideTape* gmf_user,
                 const SideTape* mlp_user, ForwardTape& tape) const;
  // Tower over all rows, then the head of each row.
  std::vector<double> finish_rows(std::span<ForwardTape> rows, MlpTape* mlp) const;
  double finish_row(ForwardTape& tape) const;
  void backward_rows(const InteractionStore& store, std::span<const ForwardTape> rows,
                     const MlpTape& mlp, std::span<const double> grad_logits);

  ModelSpec spec_;
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::optional<DualEmbeddings> gmf_;
  std::optional<DualEmbeddings> mlp_;
  std::vector<DenseLayer> layers_;
  std::optional<OutputHead> head_;
};

// Builds a DNMF from pre-trained DGMF and DMLP checkpoints. Part parameters
// are copied; the fused head weight is the concatenation of the two heads and
// its bias the mean of the two biases. Throws FusionError naming the first
// tensor whose shape or presence does not match `spec`.
Model fuse(const Checkpoint& dgmf, const Checkpoint& dmlp, const ModelSpec& spec,
           std::size_t num_users, std::size_t num_items, std::uint64_t seed);

// Spec of the standalone DGMF / DMLP matching the parts of a DNMF spec.
ModelSpec dgmf_part_spec(const ModelSpec& dnmf);
ModelSpec dmlp_part_spec(const ModelSpec& dnmf);

}  // namespace dncf
