#include "dacnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dacnet/binary_io.hpp"
#include "dacnet/errors.hpp"

namespace dacnet {

namespace {

Tensor he_normal(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(shape);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

std::size_t fan_in(const ConvSpec& spec) {
  const std::size_t taps = spec.kernel_size * spec.kernel_size;
  return spec.mode == ConvMode::depthwise ? taps : spec.in_channels * taps;
}

}  // namespace

ConvBnLayer Model::make_conv_bn(const std::string& name, const ConvSpec& spec, bool relu,
                                std::mt19937_64& rng) {
  ConvBnLayer layer;
  layer.name = name;
  layer.spec = spec;
  layer.relu = relu;
  layer.weight = make_var(he_normal(spec.kernel_shape(), fan_in(spec), rng), true);
  layer.gamma = make_var(Tensor(Shape{spec.out_channels}, 1.0), true);
  layer.beta = make_var(Tensor(Shape{spec.out_channels}, 0.0), true);
  layer.stats = RunningStats(spec.out_channels);
  params_.push_back({name + ".weight", layer.weight});
  params_.push_back({name + ".bn.gamma", layer.gamma});
  params_.push_back({name + ".bn.beta", layer.beta});
  return layer;
}

Model::Model(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  config_.validate();
  std::mt19937_64 rng(seed_);

  input_ = make_conv_bn("input", config_.input_conv, true, rng);

  const auto instances = config_.instances();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const BlockInstance& inst = instances[i];
    const std::string name = "block" + std::to_string(i);
    const std::size_t hidden = inst.hidden_channels();
    const std::size_t d = config_.depthwise_dilation(inst);
    DscBlock block;
    block.instance = inst;
    block.expand = make_conv_bn(name + ".expand", make_pointwise(inst.in_channels, hidden), true, rng);
    block.depthwise = make_conv_bn(name + ".depthwise",
                                   make_depthwise(kDepthwiseKernel, hidden, inst.stride, d, d), true, rng);
    block.project = make_conv_bn(name + ".project", make_pointwise(hidden, inst.out_channels), false, rng);
    block.residual = config_.has_residual(inst);
    blocks_.push_back(std::move(block));
  }

  for (std::size_t tap : config_.active_taps()) {
    const std::string name = "mse" + std::to_string(tap);
    projections_.push_back(make_conv_bn(
        name, make_pointwise(instances[tap].out_channels, config_.mse_projection_channels), true, rng));
  }

  auto dense = [&](const std::string& name, std::size_t in, std::size_t out) {
    DenseLayer layer{name, make_var(he_normal(Shape{out, in}, in, rng), true),
                     make_var(Tensor(Shape{out}, 0.0), true)};
    params_.push_back({name + ".weight", layer.weight});
    params_.push_back({name + ".bias", layer.bias});
    head_.push_back(std::move(layer));
  };
  const std::size_t width = config_.embedding_width();
  if (config_.literal_fc_head) {
    dense("fc", width, config_.fc_hidden);
    dense("classifier", config_.fc_hidden, config_.num_classes);
  } else {
    dense("classifier", width, config_.num_classes);
  }
}

Var Model::conv_bn(ConvBnLayer& layer, const Var& x, Mode mode, Tape* tape) {
  Var y;
  try {
    y = ops::conv2d(tape, x, layer.weight, nullptr, layer.spec);
  } catch (const ShapeError& e) {
    throw ShapeError("stage '" + layer.name + "': " + e.what());
  }
  y = ops::batchnorm(tape, y, layer.gamma, layer.beta, layer.stats, mode,
                     BatchNormOptions{config_.bn_epsilon, config_.bn_momentum});
  return layer.relu ? ops::relu(tape, y) : y;
}

ForwardResult Model::forward(const Tensor& input, Mode mode, Tape* tape) {
  if (input.rank() != 4) {
    throw ShapeError("model input must be [B, C, F, T], got " + shape_string(input.shape()));
  }
  Var x = conv_bn(input_, make_var(input), mode, tape);

  const auto taps = config_.active_taps();
  std::vector<Var> tapped;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    DscBlock& block = blocks_[i];
    Var h = conv_bn(block.expand, x, mode, tape);
    h = conv_bn(block.depthwise, h, mode, tape);
    h = conv_bn(block.project, h, mode, tape);
    x = block.residual ? ops::add(tape, x, h) : h;
    if (std::find(taps.begin(), taps.end(), i) != taps.end()) tapped.push_back(x);
  }

  ForwardResult result;
  for (std::size_t k = 0; k < taps.size(); ++k) {
    Var projected = conv_bn(projections_[k], tapped[k], mode, tape);
    result.scale_embeddings.push_back(ops::global_avg_pool(tape, projected));
  }
  result.embedding = result.scale_embeddings.size() == 1 ? result.scale_embeddings.front()
                                                         : ops::concat(tape, result.scale_embeddings);
  Var z = result.embedding;
  for (std::size_t k = 0; k < head_.size(); ++k) {
    z = ops::linear(tape, z, head_[k].weight, head_[k].bias);
    if (k + 1 < head_.size()) z = ops::relu(tape, z);
  }
  result.logits = z;
  return result;
}

std::size_t Model::trainable_scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->value.size();
  return n;
}

std::vector<RunningStats*> Model::running_stats() {
  std::vector<RunningStats*> out{&input_.stats};
  for (DscBlock& b : blocks_) {
    out.push_back(&b.expand.stats);
    out.push_back(&b.depthwise.stats);
    out.push_back(&b.project.stats);
  }
  for (ConvBnLayer& p : projections_) out.push_back(&p.stats);
  return out;
}

std::vector<const RunningStats*> Model::running_stats() const {
  auto mutable_stats = const_cast<Model*>(this)->running_stats();
  return {mutable_stats.begin(), mutable_stats.end()};
}

void Model::zero_grad() {
  for (auto& p : params_) p.var->clear_grad();
}

void Model::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::string json = to_json(config_).dump();
  out.write("DACM", 4);
  io::write_le<std::uint8_t>(out, kModelFileVersion);
  io::write_le<std::uint64_t>(out, json.size());
  out.write(json.data(), static_cast<std::streamsize>(json.size()));
  for (const auto& p : params_) {
    for (double v : p.var->value.values()) io::write_le<double>(out, v);
  }
  for (const RunningStats* s : running_stats()) {
    for (double v : s->mean.values()) io::write_le<double>(out, v);
    for (double v : s->var.values()) io::write_le<double>(out, v);
  }
  if (!out) throw DataError("write failed for checkpoint " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[4];
  std::uint8_t version = 0;
  std::uint64_t json_len = 0;
  if (!in.read(magic, 4) || std::memcmp(magic, "DACM", 4) != 0) {
    throw DataError(path.string() + ": bad magic, not a DACM checkpoint");
  }
  if (!io::read_le(in, version) || version != kModelFileVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (!io::read_le(in, json_len) || json_len > (std::uint64_t{1} << 26)) {
    throw DataError(path.string() + ": bad config length");
  }
  std::string json(json_len, '\0');
  if (!in.read(json.data(), static_cast<std::streamsize>(json_len))) {
    throw DataError(path.string() + ": truncated config");
  }
  NetworkConfig config;
  try {
    config = network_config_from_json(nlohmann::json::parse(json));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": config JSON: " + e.what());
  }
  Model model(std::move(config), 0);
  auto read_into = [&](Tensor& t) {
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw DataError(path.string() + ": truncated parameter payload");
    }
  };
  for (auto& p : model.params_) read_into(p.var->value);
  for (RunningStats* s : model.running_stats()) {
    read_into(s->mean);
    read_into(s->var);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes");
  return model;
}

}  // namespace dacnet
