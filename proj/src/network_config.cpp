#include "dacnet/network_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "dacnet/errors.hpp"

namespace dacnet {

std::vector<BlockInstance> NetworkConfig::instances() const {
  std::vector<BlockInstance> out;
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    const BlockSpec& b = blocks[r];
    for (std::size_t i = 0; i < b.repeats; ++i) {
      BlockInstance inst;
      inst.row = r;
      inst.repeat = i;
      inst.in_channels = i == 0 ? b.in_channels : b.out_channels;
      inst.out_channels = b.out_channels;
      inst.stride = i == 0 ? b.stride : 1;
      inst.expansion = b.expansion;
      inst.dilation = b.dilation;
      out.push_back(inst);
    }
  }
  return out;
}

std::vector<std::size_t> NetworkConfig::active_taps() const {
  std::vector<std::size_t> taps = mse_taps;
  if (taps.empty()) {
    const std::size_t n = instances().size();
    for (std::size_t i = n >= 3 ? n - 3 : 0; i < n; ++i) taps.push_back(i);
  }
  std::sort(taps.begin(), taps.end());
  if (!mse_enabled && !taps.empty()) return {taps.back()};
  return taps;
}

std::size_t NetworkConfig::depthwise_dilation(const BlockInstance& block) const {
  return dilation_enabled ? block.dilation : 1;
}

bool NetworkConfig::has_residual(const BlockInstance& block) const {
  return residual_enabled && block.stride == 1 && block.in_channels == block.out_channels;
}

void NetworkConfig::validate() const {
  input_conv.validate();
  if (input_conv.mode != ConvMode::standard) throw ConfigError("input_conv must be a standard convolution");
  if (blocks.empty()) throw ConfigError("network needs at least one block");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (mse_projection_channels == 0) throw ConfigError("mse_projection_channels must be >= 1");
  if (literal_fc_head && fc_hidden == 0) throw ConfigError("fc_hidden must be >= 1");
  if (!(bn_epsilon > 0.0) || !(bn_momentum > 0.0 && bn_momentum <= 1.0)) {
    throw ConfigError("bn_epsilon must be > 0 and bn_momentum in (0, 1]");
  }
  std::size_t expected_in = input_conv.out_channels;
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    const BlockSpec& b = blocks[r];
    const std::string where = "block " + std::to_string(r);
    if (b.in_channels != expected_in) {
      throw ConfigError(where + ": in_channels " + std::to_string(b.in_channels) +
                        " does not chain with previous output " + std::to_string(expected_in));
    }
    if (b.out_channels == 0 || b.stride == 0 || b.repeats == 0 || b.expansion == 0 || b.dilation == 0) {
      throw ConfigError(where + ": out_channels, stride, repeats, expansion and dilation must be >= 1");
    }
    expected_in = b.out_channels;
  }
  const auto inst = instances();
  std::set<std::size_t> seen;
  for (std::size_t t : mse_taps) {
    if (t >= inst.size()) {
      throw ConfigError("mse tap " + std::to_string(t) + " does not name a block instance (have " +
                        std::to_string(inst.size()) + ")");
    }
    if (!seen.insert(t).second) throw ConfigError("mse tap " + std::to_string(t) + " listed twice");
  }
  const auto taps = active_taps();
  for (std::size_t t : taps) {
    if (inst[t].out_channels != inst[taps.front()].out_channels) {
      throw ConfigError("mse taps must share an output channel count; tap " + std::to_string(t) +
                        " has " + std::to_string(inst[t].out_channels));
    }
  }
}

nlohmann::json to_json(const NetworkConfig& c) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const BlockSpec& b : c.blocks) {
    blocks.push_back({{"in", b.in_channels},
                      {"out", b.out_channels},
                      {"stride", b.stride},
                      {"repeats", b.repeats},
                      {"expansion", b.expansion},
                      {"dilation", b.dilation}});
  }
  return {{"name", c.name},
          {"input_conv",
           {{"in", c.input_conv.in_channels},
            {"out", c.input_conv.out_channels},
            {"kernel_size", c.input_conv.kernel_size},
            {"stride", c.input_conv.stride},
            {"padding", c.input_conv.pad_h}}},
          {"blocks", blocks},
          {"mse_taps", c.mse_taps},
          {"mse_projection_channels", c.mse_projection_channels},
          {"num_classes", c.num_classes},
          {"dilation_enabled", c.dilation_enabled},
          {"mse_enabled", c.mse_enabled},
          {"residual_enabled", c.residual_enabled},
          {"literal_fc_head", c.literal_fc_head},
          {"fc_hidden", c.fc_hidden},
          {"bn_epsilon", c.bn_epsilon},
          {"bn_momentum", c.bn_momentum}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  try {
    NetworkConfig c;
    c.name = j.value("name", c.name);
    if (j.contains("input_conv")) {
      const auto& ic = j.at("input_conv");
      const std::size_t pad = ic.value("padding", std::size_t{1});
      c.input_conv = make_standard(ic.value("kernel_size", std::size_t{3}), ic.value("in", std::size_t{3}),
                                   ic.value("out", std::size_t{32}), ic.value("stride", std::size_t{2}), pad);
    }
    for (const auto& b : j.at("blocks")) {
      BlockSpec s;
      s.in_channels = b.at("in").get<std::size_t>();
      s.out_channels = b.at("out").get<std::size_t>();
      s.stride = b.value("stride", s.stride);
      s.repeats = b.value("repeats", s.repeats);
      s.expansion = b.value("expansion", s.expansion);
      s.dilation = b.value("dilation", s.dilation);
      c.blocks.push_back(s);
    }
    c.mse_taps = j.value("mse_taps", c.mse_taps);
    c.mse_projection_channels = j.value("mse_projection_channels", c.mse_projection_channels);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.dilation_enabled = j.value("dilation_enabled", c.dilation_enabled);
    c.mse_enabled = j.value("mse_enabled", c.mse_enabled);
    c.residual_enabled = j.value("residual_enabled", c.residual_enabled);
    c.literal_fc_head = j.value("literal_fc_head", c.literal_fc_head);
    c.fc_hidden = j.value("fc_hidden", c.fc_hidden);
    c.bn_epsilon = j.value("bn_epsilon", c.bn_epsilon);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network config JSON: ") + e.what());
  }
}

namespace {

NetworkConfig paper_2021() {
  NetworkConfig c;
  c.name = "paper-2021";
  c.input_conv = make_standard(3, 3, 32, 2, 1);
  // (in, out, stride, repeats, expansion, dilation)
  c.blocks = {{32, 16, 1, 1, 6, 2},   {16, 24, 1, 2, 6, 2},   {24, 32, 2, 3, 6, 2},
              {32, 64, 2, 3, 6, 2},   {64, 96, 1, 2, 6, 2},   {96, 160, 2, 2, 6, 2},
              {160, 320, 1, 1, 6, 2}, {320, 320, 1, 2, 1, 2}};
  return c;
}

NetworkConfig paper_2021_mbv2_rows() {
  NetworkConfig c = paper_2021();
  c.name = "paper-2021-mbv2-rows";
  c.blocks[1].stride = 2;
  c.blocks[7].expansion = 6;
  return c;
}

NetworkConfig toy_synth() {
  NetworkConfig c;
  c.name = "toy-synth";
  c.input_conv = make_standard(3, 3, 8, 2, 1);
  c.blocks = {{8, 8, 1, 1, 2, 2}, {8, 16, 2, 1, 2, 2}, {16, 16, 2, 3, 2, 2}};
  c.mse_projection_channels = 32;
  return c;
}

NetworkConfig mini() {
  NetworkConfig c;
  c.name = "mini";
  c.input_conv = make_standard(3, 3, 8, 2, 1);
  c.blocks = {{8, 8, 1, 1, 1, 2}, {8, 8, 1, 1, 1, 2}};
  c.mse_taps = {0, 1};
  c.mse_projection_channels = 8;
  return c;
}

}  // namespace

std::vector<std::string> network_preset_names() {
  return {"paper-2021", "paper-2021-mbv2-rows", "toy-synth", "mini"};
}

NetworkConfig network_preset(std::string_view name) {
  NetworkConfig c;
  if (name == "paper-2021") c = paper_2021();
  else if (name == "paper-2021-mbv2-rows") c = paper_2021_mbv2_rows();
  else if (name == "toy-synth") c = toy_synth();
  else if (name == "mini") c = mini();
  else throw ConfigError("unknown network preset '" + std::string(name) + "'");
  c.validate();
  return c;
}

NetworkConfig load_network_config(const std::string& name_or_path) {
  const auto names = network_preset_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return network_preset(name_or_path);
  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("'" + name_or_path + "' is neither a network preset nor a readable file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(name_or_path + ": " + e.what());
  }
  return network_config_from_json(j);
}

Ablation parse_ablation(std::string_view text) {
  if (text == "full") return Ablation::full;
  if (text == "no_dco" || text == "no-dco") return Ablation::no_dco;
  if (text == "no_mse" || text == "no-mse") return Ablation::no_mse;
  throw ConfigError("unknown ablation '" + std::string(text) + "' (full | no_dco | no_mse)");
}

std::string_view to_string(Ablation which) {
  switch (which) {
    case Ablation::full: return "full";
    case Ablation::no_dco: return "no_dco";
    case Ablation::no_mse: return "no_mse";
  }
  return "?";
}

NetworkConfig ablation_variant(NetworkConfig config, Ablation which) {
  switch (which) {
    case Ablation::full: break;
    case Ablation::no_dco:
      config.dilation_enabled = false;
      for (BlockSpec& b : config.blocks) b.dilation = 1;
      break;
    case Ablation::no_mse: config.mse_enabled = false; break;
  }
  return config;
}

std::size_t receptive_field(const NetworkConfig& config) {
  config.validate();
  const ConvSpec& ic = config.input_conv;
  std::size_t rf = 1 + (ic.kernel_size - 1) * ic.dilation;
  std::size_t jump = ic.stride;
  const auto inst = config.instances();
  const std::size_t deepest = config.active_taps().back();
  for (std::size_t i = 0; i <= deepest; ++i) {
    rf += 2 * config.depthwise_dilation(inst[i]) * jump;  // 3x3 depthwise; the 1x1 layers add nothing
    jump *= inst[i].stride;
  }
  return rf;
}

}  // namespace dacnet
