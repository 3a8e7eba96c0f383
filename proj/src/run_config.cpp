#include "dacnet/run_config.hpp"

#include <fstream>
#include <set>

#include "dacnet/errors.hpp"
#include "dacnet/feature_cache.hpp"

namespace dacnet {

std::string_view to_string(InputChannels channels) {
  return channels == InputChannels::deltas ? "deltas" : "replicate";
}

InputChannels parse_input_channels(std::string_view text) {
  if (text == "deltas") return InputChannels::deltas;
  if (text == "replicate") return InputChannels::replicate;
  throw ConfigError("unknown input_channels '" + std::string(text) + "' (deltas | replicate)");
}

NetworkConfig RunConfig::resolved_network() const {
  return ablation_variant(has_inline_network ? network_inline : load_network_config(network), ablation);
}

std::filesystem::path RunConfig::resolved_cache_root() const {
  if (!cache_root.empty()) return cache_root;
  return resolve_cache_root(manifest.parent_path() / ".dacnet-cache");
}

void RunConfig::validate() const {
  frontend.validate();
  train.validate();
  resolved_network().validate();
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

nlohmann::json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  const FrontendConfig& f = c.frontend;
  return {{"frontend",
           {{"sample_rate", f.sample_rate},
            {"frame_length_ms", f.frame_length_ms},
            {"frame_hop_ms", f.frame_hop_ms},
            {"mel_bins", f.mel_bins},
            {"fft_size", f.fft_size},
            {"delta_window", f.delta_window},
            {"input_channels", to_string(f.channels)}}},
          {"network", to_json(c.has_inline_network ? c.network_inline : load_network_config(c.network))},
          {"ablation", to_string(c.ablation)},
          {"train",
           {{"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"plateau_factor", t.plateau_factor},
            {"plateau_patience", t.plateau_patience},
            {"weight_decay", t.weight_decay},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"epsilon", t.epsilon},
            {"max_epochs", t.max_epochs},
            {"seed", t.seed}}},
          {"paths",
           {{"manifest", c.manifest.generic_string()},
            {"run_dir", c.run_dir.generic_string()},
            {"cache_root", c.cache_root.generic_string()}}},
          {"workers", c.workers}};
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::string& where, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

RunConfig merge_run_config(RunConfig c, const nlohmann::json& j) {
  try {
    reject_unknown(j, "run config", {"frontend", "network", "ablation", "train", "paths", "workers"});
    if (j.contains("frontend")) {
      const auto& f = j.at("frontend");
      reject_unknown(f, "frontend",
                     {"sample_rate", "frame_length_ms", "frame_hop_ms", "mel_bins", "fft_size", "delta_window",
                      "input_channels"});
      take(f, "sample_rate", c.frontend.sample_rate);
      take(f, "frame_length_ms", c.frontend.frame_length_ms);
      take(f, "frame_hop_ms", c.frontend.frame_hop_ms);
      take(f, "mel_bins", c.frontend.mel_bins);
      take(f, "fft_size", c.frontend.fft_size);
      take(f, "delta_window", c.frontend.delta_window);
      if (f.contains("input_channels")) c.frontend.channels = parse_input_channels(f.at("input_channels").get<std::string>());
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      if (n.is_string()) {
        c.network = n.get<std::string>();
        c.has_inline_network = false;
      } else {
        c.network_inline = network_config_from_json(n);
        c.network = c.network_inline.name;
        c.has_inline_network = true;
      }
    }
    if (j.contains("ablation")) c.ablation = parse_ablation(j.at("ablation").get<std::string>());
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown(t, "train",
                     {"batch_size", "learning_rate", "plateau_factor", "plateau_patience", "weight_decay", "beta1",
                      "beta2", "epsilon", "max_epochs", "seed"});
      take(t, "batch_size", c.train.batch_size);
      take(t, "learning_rate", c.train.learning_rate);
      take(t, "plateau_factor", c.train.plateau_factor);
      take(t, "plateau_patience", c.train.plateau_patience);
      take(t, "weight_decay", c.train.weight_decay);
      take(t, "beta1", c.train.beta1);
      take(t, "beta2", c.train.beta2);
      take(t, "epsilon", c.train.epsilon);
      take(t, "max_epochs", c.train.max_epochs);
      take(t, "seed", c.train.seed);
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      reject_unknown(p, "paths", {"manifest", "run_dir", "cache_root"});
      if (p.contains("manifest")) c.manifest = p.at("manifest").get<std::string>();
      if (p.contains("run_dir")) c.run_dir = p.at("run_dir").get<std::string>();
      if (p.contains("cache_root")) c.cache_root = p.at("cache_root").get<std::string>();
    }
    take(j, "workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return merge_run_config(RunConfig{}, j);
}

}  // namespace dacnet
