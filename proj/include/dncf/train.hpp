#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dncf/config.hpp"
#include "dncf/data.hpp"
#include "dncf/eval.hpp"
#include "dncf/models.hpp"

namespace dncf {

// Seed streams derived from RunConfig::seed.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kSampleStream = 2;
inline constexpr std::uint64_t kValidationStream = 3;

// Training view of a dataset: the store the model is fit on (with the
// validation holdout removed when enabled) and the model-selection instances.
struct PreparedData {
  InteractionStore train;
  std::vector<TestInstance> selection;  // validation instances, or the tests
  std::string selection_split;          // "validation" or "test"
};

PreparedData prepare_data(const RunConfig& config, const Dataset& dataset);

// Store whose histories a model of `config` sees at evaluation time.
InteractionStore evaluation_store(const RunConfig& config, const Dataset& dataset);

Dataset load_config_dataset(const RunConfig& config);

struct TrainResult {
  explicit TrainResult(Model m) : model(std::move(m)) {}

  Model model;                       // best model by selection HR@10
  std::vector<EvalReport> reports;   // every logged report, in order
  EvalReport test;
  std::size_t epochs_run = 0;
  std::vector<double> epoch_losses;  // epoch_losses[e-1] = mean loss of epoch e
  double best_selection_hr = 0.0;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
};

// Runs the full training loop of `config` on `dataset`. When `initial` is
// given it replaces the random initialization. Appends one JSON line per
// report to config.metrics_path and writes the best model to
// config.checkpoint_path (plus a `.json` sidecar holding the config).
TrainResult train_model(const RunConfig& config, const Dataset& dataset,
                        std::optional<Model> initial = std::nullopt,
                        std::ostream* progress = nullptr);

struct PretrainResult {
  TrainResult dgmf;
  TrainResult dmlp;
  EvalReport fused_initial;
  TrainResult dnmf;
};

// Trains DGMF and DMLP with Adam, fuses them into the DNMF of `dnmf_config`
// and fine-tunes it with SGD. Part compatibility is checked before any
// training starts.
PretrainResult pretrain_fuse(const RunConfig& dgmf_config, const RunConfig& dmlp_config,
                             const RunConfig& dnmf_config, const Dataset& dataset,
                             std::ostream* progress = nullptr);

// Loads `checkpoint_path` into the model of `config` and evaluates it on the
// test instances. itempop needs no checkpoint.
EvalReport run_eval(const RunConfig& config, const Dataset& dataset,
                    const std::string& checkpoint_path, std::size_t k_max = kDefaultTopK);

enum class SweepAxis { kFactors, kNegRatio, kLayers, kCombiner };

SweepAxis parse_sweep_axis(std::string_view name);
std::string_view to_string(SweepAxis axis);

// Applies one sweep value. For the layers axis a bare integer n selects the
// depth-n tower ("0" means no hidden layers); a comma list gives the widths.
RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, const std::string& value);

struct SweepRow {
  std::string value;
  std::optional<EvalReport> report;
  std::size_t epochs = 0;
  double seconds = 0.0;
  std::string error;
};

// One training run per value, in order, all from the base seed. Errors are
// recorded in the row and the sweep continues.
std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis,
                                const std::vector<std::string>& values, const Dataset& dataset,
                                std::ostream* progress = nullptr);

// CSV with header axis_value,hr@10,ndcg@10,epochs,seconds.
std::string format_sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace dncf
