#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dncf/models.hpp"
#include "dncf/optim.hpp"

namespace dncf {

struct RunConfig {
  ModelSpec model;
  std::string train_path;
  std::string test_path;
  std::string negatives_path;

  std::size_t epochs = 50;  // cap; early stopping may end sooner
  std::size_t batch_size = 256;
  double lr = 0.001;
  double l2 = 1e-6;
  std::size_t neg_ratio = 4;
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::size_t eval_every = 1;
  // Stop after this many consecutive evaluations without a better
  // validation HR@10; 0 disables.
  std::size_t patience = 5;
  // Hold out each user's latest training interaction for model selection.
  bool validation = true;
  std::string checkpoint_path;
  std::string metrics_path;
  bool deterministic = false;
  std::size_t threads = 0;  // evaluation threads; 0 = hardware concurrency

  OptimizerOptions optimizer_options() const;
  std::size_t eval_threads() const;
  // Throws ConfigError for non-positive counts and similar.
  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& config);
// Overlays the keys present in `j` onto `config`. Keys use the CLI flag names
// without dashes (model, factors, layers, combiner, neg, epochs, batch, lr,
// l2, seed, ...).
void apply_json(RunConfig& config, const nlohmann::json& j);
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});
void save_config_file(const std::filesystem::path& path, const RunConfig& config);

std::string layers_to_string(const std::vector<std::size_t>& layers);
std::vector<std::size_t> parse_layers(const std::string& text);

}  // namespace dncf
