#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dncf/config.hpp"
#include "dncf/error.hpp"
#include "dncf/synthetic.hpp"
#include "dncf/train.hpp"

namespace {

using dncf::RunConfig;

// Flags applied on top of the config file; only flags given on the command
// line take effect.
class Overrides {
 public:
  template <typename T, typename Apply>
  void option(CLI::App* app, const std::string& name, const std::string& help, Apply apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    entries_.push_back([opt, value, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c, *value);
    });
  }

  template <typename Apply>
  void flag(CLI::App* app, const std::string& name, const std::string& help, Apply apply) {
    CLI::Option* opt = app->add_flag(name, help);
    entries_.push_back([opt, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c);
    });
  }

  void apply(RunConfig& config) const {
    for (const auto& e : entries_) e(config);
  }

 private:
  std::vector<std::function<void(RunConfig&)>> entries_;
};

void add_data_options(CLI::App* app, Overrides& o) {
  o.option<std::string>(app, "--train", "training ratings file",
                        [](RunConfig& c, const std::string& v) { c.train_path = v; });
  o.option<std::string>(app, "--test", "test ratings file",
                        [](RunConfig& c, const std::string& v) { c.test_path = v; });
  o.option<std::string>(app, "--negatives", "test negatives file",
                        [](RunConfig& c, const std::string& v) { c.negatives_path = v; });
  o.option<std::string>(app, "--data", "dataset prefix (<prefix>.train.rating, ...)",
                        [](RunConfig& c, const std::string& v) {
                          c.train_path = v + ".train.rating";
                          c.test_path = v + ".test.rating";
                          c.negatives_path = v + ".test.negative";
                        });
}

void add_model_options(CLI::App* app, Overrides& o) {
  o.option<std::string>(app, "--model", "itempop, dgmf, dmlp, dnmf or dncf_mf",
                        [](RunConfig& c, const std::string& v) {
                          c.model.kind = dncf::parse_model_kind(v);
                        });
  o.option<std::size_t>(app, "--factors", "embedding width / predictive factors",
                        [](RunConfig& c, std::size_t v) { c.model.factors = v; });
  o.option<std::string>(app, "--layers", "MLP hidden widths, comma-separated ('none' for 0)",
                        [](RunConfig& c, const std::string& v) {
                          c.model.mlp_layers = dncf::parse_layers(v);
                        });
  o.option<std::string>(app, "--combiner", "sum, mean, concat or attention",
                        [](RunConfig& c, const std::string& v) {
                          c.model.combiner = dncf::parse_combiner(v);
                        });
  o.option<std::size_t>(app, "--dmlp-embed", "MLP-part embedding width (0 = factors)",
                        [](RunConfig& c, std::size_t v) { c.model.dmlp_embed = v; });
  o.option<std::size_t>(app, "--attention-hidden", "attention hidden width (0 = embedding width)",
                        [](RunConfig& c, std::size_t v) { c.model.attention_hidden = v; });
  o.flag(app, "--exclude-self-history", "drop the target from its own history",
         [](RunConfig& c) { c.model.exclude_self_history = true; });
  o.option<double>(app, "--init-stddev", "Gaussian init standard deviation",
                   [](RunConfig& c, double v) { c.model.init_stddev = v; });
}

void add_training_options(CLI::App* app, Overrides& o) {
  o.option<std::size_t>(app, "--epochs", "epoch cap",
                        [](RunConfig& c, std::size_t v) { c.epochs = v; });
  o.option<std::size_t>(app, "--batch", "mini-batch size",
                        [](RunConfig& c, std::size_t v) { c.batch_size = v; });
  o.option<double>(app, "--lr", "learning rate", [](RunConfig& c, double v) { c.lr = v; });
  o.option<double>(app, "--l2", "L2 penalty", [](RunConfig& c, double v) { c.l2 = v; });
  o.option<std::size_t>(app, "--neg", "negatives per positive",
                        [](RunConfig& c, std::size_t v) { c.neg_ratio = v; });
  o.option<std::uint64_t>(app, "--seed", "random seed",
                          [](RunConfig& c, std::uint64_t v) { c.seed = v; });
  o.option<std::string>(app, "--optimizer", "adam or sgd",
                        [](RunConfig& c, const std::string& v) {
                          c.optimizer = dncf::parse_optimizer(v);
                        });
  o.option<std::size_t>(app, "--eval-every", "evaluate every N epochs",
                        [](RunConfig& c, std::size_t v) { c.eval_every = v; });
  o.option<std::size_t>(app, "--patience", "evaluations without improvement before stopping",
                        [](RunConfig& c, std::size_t v) { c.patience = v; });
  o.flag(app, "--no-validation", "select on the test split instead of a validation holdout",
         [](RunConfig& c) { c.validation = false; });
  o.option<std::string>(app, "--checkpoint", "best-model checkpoint path",
                        [](RunConfig& c, const std::string& v) { c.checkpoint_path = v; });
  o.option<std::string>(app, "--metrics", "JSON-lines metrics log (appended)",
                        [](RunConfig& c, const std::string& v) { c.metrics_path = v; });
}

void add_runtime_options(CLI::App* app, Overrides& o) {
  o.flag(app, "--deterministic", "single-threaded, timing-free logs",
         [](RunConfig& c) { c.deterministic = true; });
  o.option<std::size_t>(app, "--threads", "evaluation threads (0 = all cores)",
                        [](RunConfig& c, std::size_t v) { c.threads = v; });
}

RunConfig resolve(const std::string& config_path, const Overrides& overrides,
                  RunConfig base = {}) {
  RunConfig config = config_path.empty() ? base : dncf::load_config_file(config_path, base);
  overrides.apply(config);
  return config;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw dncf::DataError(path + ": cannot open for writing");
  out << text;
}

std::ostream* progress_stream(bool quiet) { return quiet ? nullptr : &std::cerr; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-embedding neural collaborative filtering"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "no progress output on stderr");

  // train
  CLI::App* train = app.add_subcommand("train", "train a model and report test metrics");
  std::string train_config;
  Overrides train_o;
  train->add_option("--config", train_config, "JSON config file");
  add_data_options(train, train_o);
  add_model_options(train, train_o);
  add_training_options(train, train_o);
  add_runtime_options(train, train_o);

  // eval
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  std::string eval_config;
  std::string eval_checkpoint;
  std::size_t k_max = dncf::kDefaultTopK;
  Overrides eval_o;
  eval->add_option("--config", eval_config,
                   "JSON config file (default: <checkpoint>.json when present)");
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint to evaluate");
  eval->add_option("--k-max", k_max, "largest cutoff reported")->check(CLI::PositiveNumber);
  add_data_options(eval, eval_o);
  add_model_options(eval, eval_o);
  add_runtime_options(eval, eval_o);
  eval_o.flag(eval, "--no-validation", "model was trained without a validation holdout",
              [](RunConfig& c) { c.validation = false; });

  // pretrain-fuse
  CLI::App* fuse = app.add_subcommand(
      "pretrain-fuse", "train DGMF and DMLP, fuse them into DNMF and fine-tune with SGD");
  std::string dgmf_config;
  std::string dmlp_config;
  std::string dnmf_config;
  std::size_t dgmf_factors = 0;
  std::size_t dmlp_factors = 0;
  Overrides fuse_o;
  fuse->add_option("--dgmf-config", dgmf_config, "JSON config for the DGMF part");
  fuse->add_option("--dmlp-config", dmlp_config, "JSON config for the DMLP part");
  fuse->add_option("--dnmf-config", dnmf_config, "JSON config for the fused DNMF");
  fuse->add_option("--dgmf-factors", dgmf_factors, "DGMF factors (default: --factors)");
  fuse->add_option("--dmlp-factors", dmlp_factors, "DMLP factors (default: --factors)");
  add_data_options(fuse, fuse_o);
  add_model_options(fuse, fuse_o);
  add_training_options(fuse, fuse_o);
  add_runtime_options(fuse, fuse_o);

  // sweep
  CLI::App* sweep = app.add_subcommand("sweep", "one training run per axis value; CSV output");
  std::string sweep_config;
  std::string axis_name;
  std::vector<std::string> values;
  std::string sweep_output;
  Overrides sweep_o;
  sweep->add_option("--config", sweep_config, "JSON base config");
  sweep->add_option("--axis", axis_name, "factors, neg_ratio, layers or combiner")->required();
  sweep->add_option("--values", values, "axis values (layers: depth or comma widths)")
      ->required();
  sweep->add_option("--output", sweep_output, "CSV path (default stdout)");
  add_data_options(sweep, sweep_o);
  add_model_options(sweep, sweep_o);
  add_training_options(sweep, sweep_o);
  add_runtime_options(sweep, sweep_o);

  // synth
  CLI::App* synth = app.add_subcommand("synth", "write a clustered synthetic dataset");
  dncf::SyntheticOptions synth_options;
  std::string synth_prefix;
  synth->add_option("--prefix", synth_prefix, "output prefix")->required();
  synth->add_option("--users", synth_options.users, "number of users");
  synth->add_option("--items", synth_options.items, "number of items");
  synth->add_option("--clusters", synth_options.clusters, "number of taste clusters");
  synth->add_option("--per-user", synth_options.interactions_per_user,
                    "interactions per user, test included");
  synth->add_option("--seed", synth_options.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(dncf::ExitCode::kUsage);
  }

  try {
    std::ostream* progress = progress_stream(quiet);
    if (*train) {
      const RunConfig config = resolve(train_config, train_o);
      config.validate();
      const dncf::Dataset dataset = dncf::load_config_dataset(config);
      const dncf::TrainResult result = dncf::train_model(config, dataset, std::nullopt, progress);
      std::cout << result.test.to_json() << '\n';
    } else if (*eval) {
      std::string config_path = eval_config;
      if (config_path.empty() && !eval_checkpoint.empty() &&
          std::filesystem::exists(eval_checkpoint + ".json")) {
        config_path = eval_checkpoint + ".json";
      }
      const RunConfig config = resolve(config_path, eval_o);
      const dncf::Dataset dataset = dncf::load_config_dataset(config);
      std::cout << dncf::run_eval(config, dataset, eval_checkpoint, k_max).to_json() << '\n';
    } else if (*fuse) {
      RunConfig shared = resolve("", fuse_o);
      RunConfig gmf = resolve(dgmf_config, fuse_o, shared);
      RunConfig mlp = resolve(dmlp_config, fuse_o, shared);
      RunConfig nmf = resolve(dnmf_config, fuse_o, shared);
      gmf.model.kind = dncf::ModelKind::kDgmf;
      mlp.model.kind = dncf::ModelKind::kDmlp;
      nmf.model.kind = dncf::ModelKind::kDnmf;
      if (dgmf_factors > 0) gmf.model.factors = dgmf_factors;
      if (dmlp_factors > 0) mlp.model.factors = dmlp_factors;
      for (RunConfig* part : {&gmf, &mlp}) {
        const std::string suffix = part == &gmf ? ".dgmf" : ".dmlp";
        if (!shared.checkpoint_path.empty() && part->checkpoint_path == shared.checkpoint_path) {
          part->checkpoint_path += suffix;
        }
        if (!shared.metrics_path.empty() && part->metrics_path == shared.metrics_path) {
          part->metrics_path += suffix;
        }
      }
      const dncf::Dataset dataset = dncf::load_config_dataset(nmf);
      const dncf::PretrainResult result = dncf::pretrain_fuse(gmf, mlp, nmf, dataset, progress);
      std::cout << result.dnmf.test.to_json() << '\n';
    } else if (*sweep) {
      const RunConfig base = resolve(sweep_config, sweep_o);
      const dncf::SweepAxis axis = dncf::parse_sweep_axis(axis_name);
      const dncf::Dataset dataset = dncf::load_config_dataset(base);
      const auto rows = dncf::run_sweep(base, axis, values, dataset, progress);
      write_text(sweep_output, dncf::format_sweep_csv(rows));
    } else if (*synth) {
      dncf::write_dataset(synth_prefix, dncf::make_synthetic_dataset(synth_options));
    }
  } catch (const dncf::Error& e) {
    std::cerr << "dncf: " << e.what() << '\n';
    return static_cast<int>(dncf::exit_code(e));
  } catch (const std::exception& e) {
    std::cerr << "dncf: " << e.what() << '\n';
    return static_cast<int>(dncf::ExitCode::kData);
  }
  return 0;
}
