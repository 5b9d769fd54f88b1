#include "dncf/models.hpp"

#include <algorithm>
#include <sstream>

#include "dncf/error.hpp"
#include "dncf/rng.hpp"

namespace dncf {

// ---------------------------------------------------------------------------
// Names and specs

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kItemPop: return "itempop";
    case ModelKind::kDgmf: return "dgmf";
    case ModelKind::kDmlp: return "dmlp";
    case ModelKind::kDnmf: return "dnmf";
    case ModelKind::kDncfMf: return "dncf_mf";
  }
  return "?";
}

std::string_view to_string(Combiner combiner) {
  switch (combiner) {
    case Combiner::kSum: return "sum";
    case Combiner::kMean: return "mean";
    case Combiner::kConcat: return "concat";
    case Combiner::kAttention: return "attention";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  for (auto k : {ModelKind::kItemPop, ModelKind::kDgmf, ModelKind::kDmlp, ModelKind::kDnmf,
                 ModelKind::kDncfMf}) {
    if (name == to_string(k)) return k;
  }
  if (name == "dncf-mf") return ModelKind::kDncfMf;
  throw ConfigError("unknown model '" + std::string(name) +
                    "' (expected itempop, dgmf, dmlp, dnmf, dncf_mf)");
}

Combiner parse_combiner(std::string_view name) {
  for (auto c : {Combiner::kSum, Combiner::kMean, Combiner::kConcat, Combiner::kAttention}) {
    if (name == to_string(c)) return c;
  }
  throw ConfigError("unknown combiner '" + std::string(name) +
                    "' (expected sum, mean, concat, attention)");
}

std::vector<std::size_t> tower_layers(std::size_t factors, std::size_t depth) {
  std::vector<std::size_t> widths(depth);
  for (std::size_t l = 0; l < depth; ++l) widths[l] = factors << (depth - 1 - l);
  return widths;
}

std::vector<std::size_t> ModelSpec::hidden_layers() const {
  return mlp_layers ? *mlp_layers : tower_layers(factors, 3);
}

bool ModelSpec::has_gmf_part() const {
  return kind == ModelKind::kDgmf || kind == ModelKind::kDnmf || kind == ModelKind::kDncfMf;
}

bool ModelSpec::has_mlp_part() const {
  return kind == ModelKind::kDmlp || kind == ModelKind::kDnmf;
}

void ModelSpec::validate() const {
  if (kind == ModelKind::kItemPop) return;
  if (factors == 0) throw ConfigError("factors must be positive");
  if (!(init_stddev >= 0.0)) throw ConfigError("init stddev must be >= 0");
  if (kind == ModelKind::kDncfMf && combiner != Combiner::kSum) {
    throw ConfigError("dncf_mf uses the element-wise sum combiner");
  }
  if (has_mlp_part()) {
    for (auto w : hidden_layers()) {
      if (w == 0) throw ConfigError("hidden layer widths must be positive");
    }
  }
}

ModelSpec dgmf_part_spec(const ModelSpec& dnmf) {
  ModelSpec s = dnmf;
  s.kind = ModelKind::kDgmf;
  return s;
}

ModelSpec dmlp_part_spec(const ModelSpec& dnmf) {
  ModelSpec s = dnmf;
  s.kind = ModelKind::kDmlp;
  return s;
}

// ---------------------------------------------------------------------------
// Construction

namespace {

DualEmbeddings make_dual(const std::string& prefix, std::size_t users, std::size_t items,
                         std::size_t dim, bool attention, std::size_t attn_hidden,
                         double stddev, SeededRng& rng) {
  DualEmbeddings e{
      make_embedding(prefix + ".user_id", EmbeddingRole::kUserId,
                     gaussian_init(users, dim, 0.0, stddev, rng)),
      make_embedding(prefix + ".item_id", EmbeddingRole::kItemId,
                     gaussian_init(items, dim, 0.0, stddev, rng)),
      make_embedding(prefix + ".item_history", EmbeddingRole::kItemHistory,
                     gaussian_init(items, dim, 0.0, stddev, rng)),
      make_embedding(prefix + ".user_history", EmbeddingRole::kUserHistory,
                     gaussian_init(users, dim, 0.0, stddev, rng)),
      std::nullopt,
      std::nullopt,
  };
  if (attention) {
    e.user_attention = make_attention(prefix + ".user_attention", dim, attn_hidden, stddev, rng);
    e.item_attention = make_attention(prefix + ".item_attention", dim, attn_hidden, stddev, rng);
  }
  return e;
}

void append(std::vector<Parameter*>& out, DualEmbeddings& e) {
  out.push_back(&e.user_id.param);
  out.push_back(&e.item_id.param);
  out.push_back(&e.item_history.param);
  out.push_back(&e.user_history.param);
  for (auto* a : {&e.user_attention, &e.item_attention}) {
    if (*a) {
      out.push_back(&(*a)->weight);
      out.push_back(&(*a)->bias);
      out.push_back(&(*a)->out);
    }
  }
}

std::string shape_string(const std::vector<std::uint64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < shape.size(); ++k) os << (k ? "," : "") << shape[k];
  os << ']';
  return os.str();
}

std::vector<std::uint64_t> to_u64(const std::vector<std::size_t>& shape) {
  return {shape.begin(), shape.end()};
}

NamedTensor to_tensor(const Parameter& p) {
  return {p.name, to_u64(p.shape), {p.value.span().begin(), p.value.span().end()}};
}

void assign(Parameter& p, const NamedTensor& t) {
  std::copy(t.values.begin(), t.values.end(), p.value.span().begin());
}

std::string_view gmf_prefix(ModelKind kind) { return kind == ModelKind::kDncfMf ? "mf" : "gmf"; }

}  // namespace

Model Model::create(const ModelSpec& spec, std::size_t num_users, std::size_t num_items,
                    std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  m.num_users_ = num_users;
  m.num_items_ = num_items;
  if (!spec.trainable()) return m;

  SeededRng rng(seed);
  const double sd = spec.init_stddev;
  if (spec.has_gmf_part()) {
    m.gmf_ = make_dual(std::string(gmf_prefix(spec.kind)), num_users, num_items, spec.factors,
                       spec.combiner == Combiner::kAttention, spec.attention_width(), sd, rng);
  }
  std::size_t mlp_width = 0;
  if (spec.has_mlp_part()) {
    const std::size_t d = spec.mlp_embed_width();
    m.mlp_ = make_dual("mlp", num_users, num_items, d, false, 0, sd, rng);
    std::size_t in = 4 * d;
    const auto widths = spec.hidden_layers();
    for (std::size_t l = 0; l < widths.size(); ++l) {
      m.layers_.push_back(make_dense_layer("mlp.layer" + std::to_string(l), in, widths[l],
                                           Activation::kRelu, sd, rng));
      in = widths[l];
    }
    mlp_width = in;
  }
  const std::size_t gmf_width =
      spec.has_gmf_part() ? combined_width(spec.combiner, spec.factors) : 0;
  switch (spec.kind) {
    case ModelKind::kDgmf:
      m.head_ = make_head("head", gmf_width, sd, rng);
      break;
    case ModelKind::kDmlp:
      m.head_ = make_head("head", mlp_width, sd, rng);
      break;
    case ModelKind::kDnmf:
      m.head_ = make_head("head", gmf_width + mlp_width, sd, rng);
      break;
    default:
      break;
  }
  return m;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  if (gmf_) append(out, *gmf_);
  if (mlp_) append(out, *mlp_);
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  if (head_) {
    out.push_back(&head_->weight);
    out.push_back(&head_->bias);
  }
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  auto mut = const_cast<Model*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Parameter* Model::find_parameter(std::string_view name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

void Model::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Forward

SideTape Model::user_side(const DualEmbeddings& emb, const InteractionStore& store, Index u,
                          std::optional<Index> exclude, Combiner combiner) const {
  SideTape s;
  s.id = id_embedding(emb.user_id, u);
  s.history = history_embedding(emb.item_history, store.user_items(u), exclude);
  const AttentionCombiner* attn = emb.user_attention ? &*emb.user_attention : nullptr;
  s.combined = combine(combiner, s.id, s.history, attn, &s.attention);
  return s;
}

SideTape Model::item_side(const DualEmbeddings& emb, const InteractionStore& store, Index i,
                          std::optional<Index> exclude, Combiner combiner) const {
  SideTape s;
  s.id = id_embedding(emb.item_id, i);
  s.history = history_embedding(emb.user_history, store.item_users(i), exclude);
  const AttentionCombiner* attn = emb.item_attention ? &*emb.item_attention : nullptr;
  s.combined = combine(combiner, s.id, s.history, attn, &s.attention);
  return s;
}

void Model::check_store(const InteractionStore& store) const {
  if (!spec_.trainable()) throw ConfigError("itempop has no forward pass");
  if (store.num_users() != num_users_ || store.num_items() != num_items_) {
    throw ShapeError("store dimensions do not match the model");
  }
}

void Model::embed_row(const InteractionStore& store, Index u, Index i, const SideTape* gmf_user,
                      const SideTape* mlp_user, ForwardTape& tape) const {
  tape.user = u;
  tape.item = i;
  const bool excl = spec_.exclude_self_history;
  const std::optional<Index> drop_item = excl ? std::optional<Index>(i) : std::nullopt;
  const std::optional<Index> drop_user = excl ? std::optional<Index>(u) : std::nullopt;

  if (gmf_) {
    tape.gmf_user = gmf_user ? *gmf_user : user_side(*gmf_, store, u, drop_item, spec_.combiner);
    tape.gmf_item = item_side(*gmf_, store, i, drop_user, spec_.combiner);
    tape.gmf_out = mul(tape.gmf_user.combined, tape.gmf_item.combined);
  }
  if (mlp_) {
    tape.mlp_user = mlp_user ? *mlp_user : user_side(*mlp_, store, u, drop_item, Combiner::kConcat);
    tape.mlp_item = item_side(*mlp_, store, i, drop_user, Combiner::kConcat);
  }
}

double Model::finish_row(ForwardTape& tape) const {
  switch (spec_.kind) {
    case ModelKind::kDncfMf: {
      double s = 0.0;
      for (double v : tape.gmf_out) s += v;
      tape.logit = s;
      return s;
    }
    case ModelKind::kDgmf:
      tape.head_input = tape.gmf_out;
      break;
    case ModelKind::kDmlp:
      tape.head_input = tape.mlp_out;
      break;
    case ModelKind::kDnmf:
      tape.head_input = concat(tape.gmf_out, tape.mlp_out);
      break;
    default:
      break;
  }
  tape.logit = head_logit(*head_, tape.head_input);
  return tape.logit;
}

std::vector<double> Model::finish_rows(std::span<ForwardTape> rows, MlpTape* mlp) const {
  if (mlp_ && !rows.empty()) {
    const std::size_t half = rows[0].mlp_user.combined.size();
    DenseMatrix z0(rows.size(), 2 * half);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      auto dst = z0.row(b);
      std::copy(rows[b].mlp_user.combined.begin(), rows[b].mlp_user.combined.end(), dst.begin());
      std::copy(rows[b].mlp_item.combined.begin(), rows[b].mlp_item.combined.end(),
                dst.begin() + static_cast<std::ptrdiff_t>(half));
    }
    const DenseMatrix out = mlp_forward(layers_, z0, mlp);
    for (std::size_t b = 0; b < rows.size(); ++b) rows[b].mlp_out = DenseVector(out.row(b));
  }
  std::vector<double> logits;
  logits.reserve(rows.size());
  for (auto& row : rows) logits.push_back(finish_row(row));
  return logits;
}

double Model::forward_with_user(const InteractionStore& store, Index u, Index i,
                                const SideTape* gmf_user, const SideTape* mlp_user,
                                ForwardTape& tape) const {
  check_store(store);
  embed_row(store, u, i, gmf_user, mlp_user, tape);
  return finish_rows(std::span<ForwardTape>(&tape, 1), &tape.mlp)[0];
}

double Model::forward(const InteractionStore& store, Index u, Index i, ForwardTape& tape) const {
  return forward_with_user(store, u, i, nullptr, nullptr, tape);
}

std::vector<double> Model::forward_batch(const InteractionStore& store,
                                         std::span<const Index> users,
                                         std::span<const Index> items, BatchTape& tape) const {
  check_store(store);
  if (users.size() != items.size()) throw ShapeError("forward_batch: users and items differ");
  tape.rows.resize(users.size());
  for (std::size_t b = 0; b < users.size(); ++b) {
    embed_row(store, users[b], items[b], nullptr, nullptr, tape.rows[b]);
  }
  return finish_rows(tape.rows, &tape.mlp);
}

double Model::score(const InteractionStore& store, Index u, Index i) const {
  if (spec_.kind == ModelKind::kItemPop) return static_cast<double>(store.item_popularity(i));
  ForwardTape tape;
  const double logit = forward(store, u, i, tape);
  return spec_.kind == ModelKind::kDncfMf ? logit : sigmoid(logit);
}

std::vector<double> Model::score_items(const InteractionStore& store, Index u,
                                       std::span<const Index> items) const {
  std::vector<double> out;
  out.reserve(items.size());
  if (spec_.kind == ModelKind::kItemPop) {
    for (Index i : items) out.push_back(static_cast<double>(store.item_popularity(i)));
    return out;
  }
  check_store(store);
  std::optional<SideTape> gmf_user;
  std::optional<SideTape> mlp_user;
  if (gmf_) gmf_user = user_side(*gmf_, store, u, std::nullopt, spec_.combiner);
  if (mlp_) mlp_user = user_side(*mlp_, store, u, std::nullopt, Combiner::kConcat);
  std::vector<ForwardTape> rows(items.size());
  for (std::size_t n = 0; n < items.size(); ++n) {
    // With self-exclusion the user side depends on the target when it is in
    // the user's history.
    const bool reuse = !spec_.exclude_self_history || !store.contains(u, items[n]);
    embed_row(store, u, items[n], reuse && gmf_user ? &*gmf_user : nullptr,
              reuse && mlp_user ? &*mlp_user : nullptr, rows[n]);
  }
  for (double logit : finish_rows(rows, nullptr)) {
    out.push_back(spec_.kind == ModelKind::kDncfMf ? logit : sigmoid(logit));
  }
  return out;
}

DenseVector Model::gmf_output(const InteractionStore& store, Index u, Index i) const {
  if (!gmf_) return {};
  ForwardTape tape;
  forward(store, u, i, tape);
  return tape.gmf_out;
}

DenseVector Model::mlp_output(const InteractionStore& store, Index u, Index i) const {
  if (!mlp_) return {};
  ForwardTape tape;
  forward(store, u, i, tape);
  return tape.mlp_out;
}

// ---------------------------------------------------------------------------
// Backward

namespace {

void side_backward(EmbeddingTable& id_table, EmbeddingTable& history_table,
                   AttentionCombiner* attn, Combiner combiner, const SideTape& side, Index index,
                   std::span<const Index> neighbors, std::optional<Index> exclude,
                   const DenseVector& grad_combined) {
  DenseVector grad_id(side.id.size());
  DenseVector grad_hist(side.history.size());
  combine_backward(combiner, side.id, side.history, grad_combined, attn, &side.attention, grad_id,
                   grad_hist);
  id_embedding_backward(id_table, index, grad_id);
  history_embedding_backward(history_table, neighbors, exclude, grad_hist);
}

void dual_backward(DualEmbeddings& emb, Combiner combiner, const InteractionStore& store,
                   const SideTape& user, const SideTape& item, Index u, Index i, bool exclude,
                   const DenseVector& grad_user, const DenseVector& grad_item) {
  const std::optional<Index> drop_item = exclude ? std::optional<Index>(i) : std::nullopt;
  const std::optional<Index> drop_user = exclude ? std::optional<Index>(u) : std::nullopt;
  side_backward(emb.user_id, emb.item_history, emb.user_attention ? &*emb.user_attention : nullptr,
                combiner, user, u, store.user_items(u), drop_item, grad_user);
  side_backward(emb.item_id, emb.user_history, emb.item_attention ? &*emb.item_attention : nullptr,
                combiner, item, i, store.item_users(i), drop_user, grad_item);
}

}  // namespace

void Model::backward(const InteractionStore& store, const ForwardTape& tape, double grad_logit) {
  backward_rows(store, std::span<const ForwardTape>(&tape, 1), tape.mlp,
                std::span<const double>(&grad_logit, 1));
}

void Model::backward_batch(const InteractionStore& store, const BatchTape& tape,
                           std::span<const double> grad_logits) {
  backward_rows(store, tape.rows, tape.mlp, grad_logits);
}

void Model::backward_rows(const InteractionStore& store, std::span<const ForwardTape> rows,
                          const MlpTape& mlp, std::span<const double> grad_logits) {
  if (!spec_.trainable()) throw ConfigError("itempop has no backward pass");
  if (rows.size() != grad_logits.size()) throw ShapeError("backward: one gradient per row");
  const bool excl = spec_.exclude_self_history;
  DenseMatrix grad_mlp;
  if (mlp_ && !rows.empty()) grad_mlp = DenseMatrix(rows.size(), rows[0].mlp_out.size());

  for (std::size_t b = 0; b < rows.size(); ++b) {
    const ForwardTape& tape = rows[b];
    const double grad_logit = grad_logits[b];
    DenseVector grad_head_in;
    if (head_) grad_head_in = head_backward(*head_, tape.head_input, grad_logit);

    DenseVector grad_gmf;
    std::span<const double> grad_tower;
    switch (spec_.kind) {
      case ModelKind::kDncfMf:
        grad_gmf = DenseVector(tape.gmf_out.size(), grad_logit);
        break;
      case ModelKind::kDgmf:
        grad_gmf = std::move(grad_head_in);
        break;
      case ModelKind::kDmlp:
        grad_tower = grad_head_in.span();
        break;
      case ModelKind::kDnmf: {
        const std::size_t g = tape.gmf_out.size();
        grad_gmf = DenseVector(grad_head_in.span().subspan(0, g));
        grad_tower = grad_head_in.span().subspan(g);
        break;
      }
      default:
        break;
    }
    if (mlp_) std::copy(grad_tower.begin(), grad_tower.end(), grad_mlp.row(b).begin());

    if (gmf_) {
      const DenseVector grad_user = mul(grad_gmf, tape.gmf_item.combined);
      const DenseVector grad_item = mul(grad_gmf, tape.gmf_user.combined);
      dual_backward(*gmf_, spec_.combiner, store, tape.gmf_user, tape.gmf_item, tape.user,
                    tape.item, excl, grad_user, grad_item);
    }
  }

  if (mlp_ && !rows.empty()) {
    const DenseMatrix grad_z0 = mlp_backward(layers_, mlp, grad_mlp);
    const std::size_t half = rows[0].mlp_user.combined.size();
    for (std::size_t b = 0; b < rows.size(); ++b) {
      const ForwardTape& tape = rows[b];
      const DenseVector grad_user(grad_z0.row(b).subspan(0, half));
      const DenseVector grad_item(grad_z0.row(b).subspan(half));
      dual_backward(*mlp_, Combiner::kConcat, store, tape.mlp_user, tape.mlp_item, tape.user,
                    tape.item, excl, grad_user, grad_item);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints and fusion

Checkpoint Model::to_checkpoint() const {
  Checkpoint ck;
  for (const auto* p : parameters()) ck.tensors.push_back(to_tensor(*p));
  return ck;
}

void Model::load_checkpoint(const Checkpoint& checkpoint) {
  auto params = parameters();
  for (auto* p : params) {
    const auto expected = to_u64(p->shape);
    const NamedTensor* t = checkpoint.find(p->name);
    if (t == nullptr) {
      throw CheckpointError("missing tensor '" + p->name + "' (expected " +
                            shape_string(expected) + ")");
    }
    if (t->shape != expected) {
      throw CheckpointError("tensor '" + p->name + "': expected " + shape_string(expected) +
                            ", found " + shape_string(t->shape));
    }
  }
  for (const auto& t : checkpoint.tensors) {
    const bool known = std::any_of(params.begin(), params.end(),
                                   [&](const Parameter* p) { return p->name == t.name; });
    if (!known) {
      throw CheckpointError("unexpected tensor '" + t.name + "' for model " +
                            std::string(to_string(spec_.kind)));
    }
  }
  for (auto* p : params) assign(*p, *checkpoint.find(p->name));
}

Model fuse(const Checkpoint& dgmf, const Checkpoint& dmlp, const ModelSpec& spec,
           std::size_t num_users, std::size_t num_items, std::uint64_t seed) {
  if (spec.kind != ModelKind::kDnmf) throw ConfigError("fuse builds a dnmf model");
  Model m = Model::create(spec, num_users, num_items, seed);
  for (auto* p : m.parameters()) {
    if (p->name.starts_with("head.")) continue;
    const bool from_gmf = p->name.starts_with("gmf.");
    const Checkpoint& src = from_gmf ? dgmf : dmlp;
    const char* which = from_gmf ? "DGMF" : "DMLP";
    const auto expected = to_u64(p->shape);
    const NamedTensor* t = src.find(p->name);
    if (t == nullptr) {
      throw FusionError(std::string(which) + " checkpoint lacks tensor '" + p->name + "'");
    }
    if (t->shape != expected) {
      throw FusionError(std::string(which) + " tensor '" + p->name + "': expected " +
                        shape_string(expected) + ", found " + shape_string(t->shape));
    }
    assign(*p, *t);
  }
  const NamedTensor* gh = dgmf.find("head.h");
  const NamedTensor* gb = dgmf.find("head.b");
  const NamedTensor* mh = dmlp.find("head.h");
  const NamedTensor* mb = dmlp.find("head.b");
  if (!gh || !gb) throw FusionError("DGMF checkpoint lacks tensor 'head.h'/'head.b'");
  if (!mh || !mb) throw FusionError("DMLP checkpoint lacks tensor 'head.h'/'head.b'");
  OutputHead& head = *m.head();
  const std::size_t g = combined_width(spec.combiner, spec.factors);
  const std::size_t total = head.weight.value.cols();
  if (gh->values.size() != g) {
    throw FusionError("DGMF tensor 'head.h': expected [" + std::to_string(g) + "], found " +
                      shape_string(gh->shape));
  }
  if (mh->values.size() != total - g) {
    throw FusionError("DMLP tensor 'head.h': expected [" + std::to_string(total - g) +
                      "], found " + shape_string(mh->shape));
  }
  if (gb->values.size() != 1 || mb->values.size() != 1) {
    throw FusionError("head bias must be a scalar");
  }
  auto h = head.weight.value.row(0);
  std::copy(gh->values.begin(), gh->values.end(), h.begin());
  std::copy(mh->values.begin(), mh->values.end(), h.begin() + static_cast<std::ptrdiff_t>(g));
  head.bias.value(0, 0) = 0.5 * (gb->values[0] + mb->values[0]);
  return m;
}

}  // namespace dncf
