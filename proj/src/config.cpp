#include "dncf/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include "dncf/error.hpp"

namespace dncf {

OptimizerOptions RunConfig::optimizer_options() const {
  OptimizerOptions o;
  o.kind = optimizer;
  o.lr = lr;
  o.l2 = l2;
  return o;
}

std::size_t RunConfig::eval_threads() const {
  if (deterministic) return 1;
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

void RunConfig::validate() const {
  model.validate();
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (neg_ratio == 0) throw ConfigError("neg ratio must be positive");
  if (eval_every == 0) throw ConfigError("eval-every must be positive");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
}

std::string layers_to_string(const std::vector<std::size_t>& layers) {
  std::string out;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(layers[k]);
  }
  return out;
}

std::vector<std::size_t> parse_layers(const std::string& text) {
  std::vector<std::size_t> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("invalid layer width '" + item + "' in --layers");
    }
  }
  return out;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = to_string(c.model.kind);
  j["factors"] = c.model.factors;
  j["layers"] = layers_to_string(c.model.hidden_layers());
  j["combiner"] = to_string(c.model.combiner);
  j["dmlp_embed"] = c.model.dmlp_embed;
  j["attention_hidden"] = c.model.attention_hidden;
  j["exclude_self_history"] = c.model.exclude_self_history;
  j["init_stddev"] = c.model.init_stddev;
  j["train"] = c.train_path;
  j["test"] = c.test_path;
  j["negatives"] = c.negatives_path;
  j["epochs"] = c.epochs;
  j["batch"] = c.batch_size;
  j["lr"] = c.lr;
  j["l2"] = c.l2;
  j["neg"] = c.neg_ratio;
  j["seed"] = c.seed;
  j["optimizer"] = to_string(c.optimizer);
  j["eval_every"] = c.eval_every;
  j["patience"] = c.patience;
  j["validation"] = c.validation;
  j["checkpoint"] = c.checkpoint_path;
  j["metrics"] = c.metrics_path;
  j["deterministic"] = c.deterministic;
  j["threads"] = c.threads;
  return j;
}

void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "model") c.model.kind = parse_model_kind(value.get<std::string>());
      else if (key == "factors") c.model.factors = value.get<std::size_t>();
      else if (key == "layers") {
        c.model.mlp_layers = value.is_array() ? value.get<std::vector<std::size_t>>()
                                              : parse_layers(value.get<std::string>());
      }
      else if (key == "combiner") c.model.combiner = parse_combiner(value.get<std::string>());
      else if (key == "dmlp_embed") c.model.dmlp_embed = value.get<std::size_t>();
      else if (key == "attention_hidden") c.model.attention_hidden = value.get<std::size_t>();
      else if (key == "exclude_self_history") c.model.exclude_self_history = value.get<bool>();
      else if (key == "init_stddev") c.model.init_stddev = value.get<double>();
      else if (key == "train") c.train_path = value.get<std::string>();
      else if (key == "test") c.test_path = value.get<std::string>();
      else if (key == "negatives") c.negatives_path = value.get<std::string>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "batch") c.batch_size = value.get<std::size_t>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "l2") c.l2 = value.get<double>();
      else if (key == "neg") c.neg_ratio = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "optimizer") c.optimizer = parse_optimizer(value.get<std::string>());
      else if (key == "eval_every") c.eval_every = value.get<std::size_t>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "validation") c.validation = value.get<bool>();
      else if (key == "checkpoint") c.checkpoint_path = value.get<std::string>();
      else if (key == "metrics") c.metrics_path = value.get<std::string>();
      else if (key == "deterministic") c.deterministic = value.get<bool>();
      else if (key == "threads") c.threads = value.get<std::size_t>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  apply_json(base, j);
  return base;
}

void save_config_file(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError(path.string() + ": cannot open for writing");
  out << to_json(config).dump(2) << '\n';
}

}  // namespace dncf
