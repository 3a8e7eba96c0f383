#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "dacnet/frontend.hpp"
#include "dacnet/network_config.hpp"
#include "dacnet/optimizer.hpp"
#include "json.hpp"

namespace dacnet {

// Everything a command needs. Defaults: frontend and training defaults,
// the paper-2021 network preset, full ablation, one worker.
struct RunConfig {
  FrontendConfig frontend;
  std::string network = "paper-2021";  // preset name or path to a network JSON file
  NetworkConfig network_inline;        // used when has_inline_network
  bool has_inline_network = false;
  Ablation ablation = Ablation::full;
  TrainConfig train;
  std::filesystem::path manifest;
  std::filesystem::path run_dir = "runs/default";
  std::filesystem::path cache_root;  // empty: DACNET_CACHE or <manifest dir>/.dacnet-cache
  std::size_t workers = 1;

  /// The network to build, after the ablation is applied.
  NetworkConfig resolved_network() const;
  std::filesystem::path resolved_cache_root() const;
  void validate() const;
};

/// Fully resolved form: the network is inlined so the file alone reproduces the run.
nlohmann::json to_json(const RunConfig& config);

/// Starts from `base` and overrides every key present in `j`. Unknown keys throw ConfigError.
RunConfig merge_run_config(RunConfig base, const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

std::string_view to_string(InputChannels channels);
InputChannels parse_input_channels(std::string_view text);

}  // namespace dacnet
