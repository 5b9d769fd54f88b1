#include "dncf/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "dncf/checkpoint.hpp"
#include "dncf/error.hpp"
#include "dncf/nn.hpp"
#include "dncf/optim.hpp"
#include "dncf/rng.hpp"

namespace dncf {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

class MetricsLog {
 public:
  explicit MetricsLog(const std::string& path) {
    if (path.empty()) return;
    out_.open(path, std::ios::app);
    if (!out_) throw DataError(path + ": cannot open metrics log");
  }

  void write(const EvalReport& report) {
    if (!out_.is_open()) return;
    out_ << report.to_json() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void save_model(const RunConfig& config, const Model& model) {
  if (config.checkpoint_path.empty()) return;
  save_checkpoint(config.checkpoint_path, model.to_checkpoint());
  save_config_file(config.checkpoint_path + ".json", config);
}

void check_dataset(const Dataset& dataset) {
  if (dataset.tests.size() != dataset.train.num_users()) {
    throw DataError("dataset needs exactly one test instance per user");
  }
}

// Mean BCE over the epoch.
double run_epoch(Model& model, Optimizer& optimizer, const InteractionStore& store,
                 const RunConfig& config, std::size_t epoch) {
  const std::uint64_t seed = mix_seed(mix_seed(config.seed, kSampleStream), epoch);
  const EpochSample sample = sample_epoch(store, config.neg_ratio, seed);
  BatchTape tape;
  std::vector<double> grads;
  double total = 0.0;
  for (const TrainBatch& batch : sample.batches(config.batch_size)) {
    const std::vector<double> logits = model.forward_batch(store, batch.users, batch.items, tape);
    grads.resize(logits.size());
    for (std::size_t n = 0; n < logits.size(); ++n) {
      const double y_hat = sigmoid(logits[n]);
      total += bce_loss(y_hat, batch.labels[n]);
      grads[n] = bce_logit_grad(y_hat, batch.labels[n]);
    }
    model.backward_batch(store, tape, grads);
    optimizer.step(batch.size());
  }
  if (!std::isfinite(total)) throw NumericError("non-finite training loss");
  return sample.instances.empty() ? 0.0 : total / static_cast<double>(sample.instances.size());
}

}  // namespace

Dataset load_config_dataset(const RunConfig& config) {
  if (config.train_path.empty() || config.test_path.empty() || config.negatives_path.empty()) {
    throw ConfigError("--train, --test and --negatives are required");
  }
  return load_dataset(config.train_path, config.test_path, config.negatives_path);
}

InteractionStore evaluation_store(const RunConfig& config, const Dataset& dataset) {
  if (!config.model.trainable() || !config.validation) return dataset.train;
  return holdout_validation(dataset.train).train;
}

PreparedData prepare_data(const RunConfig& config, const Dataset& dataset) {
  check_dataset(dataset);
  PreparedData prepared;
  if (!config.model.trainable() || !config.validation) {
    prepared.train = dataset.train;
    prepared.selection = dataset.tests;
    prepared.selection_split = "test";
    return prepared;
  }
  Holdout holdout = holdout_validation(dataset.train);
  prepared.selection = make_validation_instances(dataset.train, holdout.held_out, dataset.tests,
                                                 kTestNegatives,
                                                 mix_seed(config.seed, kValidationStream));
  prepared.train = std::move(holdout.train);
  prepared.selection_split = "validation";
  if (prepared.selection.empty()) {
    prepared.selection = dataset.tests;
    prepared.selection_split = "test";
  }
  return prepared;
}

TrainResult train_model(const RunConfig& config, const Dataset& dataset,
                        std::optional<Model> initial, std::ostream* progress) {
  config.validate();
  const auto start = Clock::now();
  PreparedData data = prepare_data(config, dataset);
  const std::size_t num_users = dataset.train.num_users();
  const std::size_t num_items = dataset.train.num_items();
  if (initial && (initial->num_users() != num_users || initial->num_items() != num_items)) {
    throw ShapeError("initial model does not match the dataset dimensions");
  }

  TrainResult result(initial ? std::move(*initial)
                             : Model::create(config.model, num_users, num_items,
                                             mix_seed(config.seed, kInitStream)));
  MetricsLog log(config.metrics_path);
  EvalOptions eval_options;
  eval_options.threads = config.eval_threads();

  auto evaluate_split = [&](const Model& model, std::span<const TestInstance> instances,
                            std::string split, std::size_t epoch, std::optional<double> loss) {
    const auto t0 = Clock::now();
    EvalReport report = evaluate(model, data.train, instances, eval_options);
    report.epoch = epoch;
    report.split = std::move(split);
    report.loss = loss;
    report.seconds = config.deterministic ? 0.0 : elapsed(t0);
    log.write(report);
    if (progress) *progress << report.to_json() << '\n';
    result.reports.push_back(report);
    return report;
  };

  Model& model = result.model;
  if (config.model.trainable() && config.epochs > 0) {
    Optimizer optimizer(config.optimizer_options(), model.parameters());
    Model best = model;
    result.best_selection_hr =
        evaluate_split(model, data.selection, data.selection_split, 0, std::nullopt).hr_at(10);
    save_model(config, model);
    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      const double loss = run_epoch(model, optimizer, data.train, config, epoch);
      result.epoch_losses.push_back(loss);
      result.epochs_run = epoch;
      if (epoch % config.eval_every != 0 && epoch != config.epochs) continue;
      const double hr =
          evaluate_split(model, data.selection, data.selection_split, epoch, loss).hr_at(10);
      if (hr > result.best_selection_hr) {
        result.best_selection_hr = hr;
        result.best_epoch = epoch;
        best = model;
        save_model(config, model);
        stale = 0;
      } else if (config.patience > 0 && ++stale >= config.patience) {
        break;
      }
    }
    model = std::move(best);
  } else {
    save_model(config, model);
  }

  result.test = evaluate_split(model, dataset.tests, "test", result.best_epoch, std::nullopt);
  result.seconds = config.deterministic ? 0.0 : elapsed(start);
  return result;
}

PretrainResult pretrain_fuse(const RunConfig& dgmf_config, const RunConfig& dmlp_config,
                             const RunConfig& dnmf_config, const Dataset& dataset,
                             std::ostream* progress) {
  if (dgmf_config.model.kind != ModelKind::kDgmf) throw ConfigError("first config must be dgmf");
  if (dmlp_config.model.kind != ModelKind::kDmlp) throw ConfigError("second config must be dmlp");
  if (dnmf_config.model.kind != ModelKind::kDnmf) throw ConfigError("third config must be dnmf");
  check_dataset(dataset);
  const std::size_t num_users = dataset.train.num_users();
  const std::size_t num_items = dataset.train.num_items();
  const std::uint64_t fuse_seed = mix_seed(dnmf_config.seed, kInitStream);

  // Dry fusion of untrained parts: surfaces shape mismatches before training.
  fuse(Model::create(dgmf_config.model, num_users, num_items, 0).to_checkpoint(),
       Model::create(dmlp_config.model, num_users, num_items, 0).to_checkpoint(),
       dnmf_config.model, num_users, num_items, fuse_seed);

  RunConfig gmf = dgmf_config;
  RunConfig mlp = dmlp_config;
  RunConfig nmf = dnmf_config;
  gmf.optimizer = OptimizerKind::kAdam;
  mlp.optimizer = OptimizerKind::kAdam;
  nmf.optimizer = OptimizerKind::kSgd;

  TrainResult gmf_run = train_model(gmf, dataset, std::nullopt, progress);
  TrainResult mlp_run = train_model(mlp, dataset, std::nullopt, progress);
  Model fused = fuse(gmf_run.model.to_checkpoint(), mlp_run.model.to_checkpoint(), nmf.model,
                     num_users, num_items, fuse_seed);
  TrainResult nmf_run = train_model(nmf, dataset, std::move(fused), progress);
  EvalReport fused_initial = nmf_run.reports.front();
  return PretrainResult{std::move(gmf_run), std::move(mlp_run), std::move(fused_initial),
                        std::move(nmf_run)};
}

EvalReport run_eval(const RunConfig& config, const Dataset& dataset,
                    const std::string& checkpoint_path, std::size_t k_max) {
  config.model.validate();
  check_dataset(dataset);
  Model model = Model::create(config.model, dataset.train.num_users(), dataset.train.num_items(),
                              mix_seed(config.seed, kInitStream));
  if (config.model.trainable()) {
    if (checkpoint_path.empty()) throw ConfigError("--checkpoint is required for trained models");
    model.load_checkpoint(load_checkpoint(checkpoint_path));
  }
  const InteractionStore store = evaluation_store(config, dataset);
  EvalOptions options;
  options.k_max = k_max;
  options.threads = config.eval_threads();
  const auto start = Clock::now();
  EvalReport report = evaluate(model, store, dataset.tests, options);
  report.seconds = config.deterministic ? 0.0 : elapsed(start);
  return report;
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "factors") return SweepAxis::kFactors;
  if (name == "neg_ratio" || name == "neg") return SweepAxis::kNegRatio;
  if (name == "layers") return SweepAxis::kLayers;
  if (name == "combiner") return SweepAxis::kCombiner;
  throw ConfigError("unknown sweep axis '" + std::string(name) +
                    "' (expected factors, neg_ratio, layers, combiner)");
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kFactors: return "factors";
    case SweepAxis::kNegRatio: return "neg_ratio";
    case SweepAxis::kLayers: return "layers";
    case SweepAxis::kCombiner: return "combiner";
  }
  return "?";
}

namespace {

std::size_t parse_count(const std::string& text, std::string_view what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size() && v >= 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid " + std::string(what) + " value '" + text + "'");
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, const std::string& value) {
  RunConfig config = base;
  switch (axis) {
    case SweepAxis::kFactors:
      config.model.factors = parse_count(value, "factors");
      break;
    case SweepAxis::kNegRatio:
      config.neg_ratio = parse_count(value, "neg_ratio");
      break;
    case SweepAxis::kLayers:
      if (value.find(',') == std::string::npos && value != "none") {
        config.model.mlp_layers = tower_layers(config.model.factors, parse_count(value, "layers"));
      } else {
        config.model.mlp_layers = parse_layers(value);
      }
      break;
    case SweepAxis::kCombiner:
      config.model.combiner = parse_combiner(value);
      break;
  }
  config.validate();
  return config;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis,
                                const std::vector<std::string>& values, const Dataset& dataset,
                                std::ostream* progress) {
  std::vector<SweepRow> rows;
  for (const std::string& value : values) {
    SweepRow row;
    row.value = value;
    try {
      RunConfig config = apply_sweep_value(base, axis, value);
      config.checkpoint_path.clear();
      config.metrics_path.clear();
      TrainResult run = train_model(config, dataset, std::nullopt, nullptr);
      row.report = run.test;
      row.epochs = run.epochs_run;
      row.seconds = run.seconds;
    } catch (const Error& e) {
      row.error = e.what();
    }
    if (progress) {
      *progress << to_string(axis) << '=' << value << ": "
                << (row.report ? "hr@10=" + format_real(row.report->hr_at(10)) : row.error)
                << '\n';
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "axis_value,hr@10,ndcg@10,epochs,seconds\n";
  for (const SweepRow& row : rows) {
    out += csv_field(row.value) + ',';
    if (row.report) {
      out += format_real(row.report->hr_at(10)) + ',' + format_real(row.report->ndcg_at(10)) +
             ',' + std::to_string(row.epochs) + ',' + format_real(row.seconds);
    } else {
      out += csv_field("error:" + row.error) + ",,,";
    }
    out += '\n';
  }
  return out;
}

}  // namespace dncf
