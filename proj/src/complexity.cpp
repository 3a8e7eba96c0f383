#include "dacnet/complexity.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "dacnet/errors.hpp"

namespace dacnet {

std::uint64_t layer_macs(const ConvSpec& spec, std::uint64_t out_h, std::uint64_t out_w) {
  const std::uint64_t k2 = spec.kernel_size * spec.kernel_size;
  const std::uint64_t area = out_h * out_w;
  switch (spec.mode) {
    case ConvMode::depthwise: return k2 * spec.in_channels * area;
    case ConvMode::pointwise: return std::uint64_t{spec.out_channels} * spec.in_channels * area;
    case ConvMode::standard: break;
  }
  return k2 * spec.out_channels * spec.in_channels * area;
}

std::uint64_t layer_params(const ConvSpec& spec) {
  const std::uint64_t k2 = spec.kernel_size * spec.kernel_size;
  std::uint64_t n = 0;
  switch (spec.mode) {
    case ConvMode::depthwise: n = k2 * spec.in_channels; break;
    case ConvMode::pointwise: n = std::uint64_t{spec.in_channels} * spec.out_channels; break;
    case ConvMode::standard: n = k2 * spec.in_channels * spec.out_channels; break;
  }
  return n + (spec.has_bias ? spec.out_channels : 0);
}

std::uint64_t batchnorm_params(std::uint64_t channels) { return 2 * channels; }
std::uint64_t linear_params(std::uint64_t in, std::uint64_t out, bool bias) {
  return in * out + (bias ? out : 0);
}
std::uint64_t linear_macs(std::uint64_t in, std::uint64_t out) { return in * out; }

Fraction Fraction::make(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw ConfigError("fraction with zero denominator");
  const std::uint64_t g = std::gcd(num, den);
  return g == 0 ? Fraction{0, 1} : Fraction{num / g, den / g};
}

Fraction Fraction::operator+(const Fraction& o) const {
  const std::uint64_t l = std::lcm(den, o.den);
  return make(num * (l / den) + o.num * (l / o.den), l);
}

std::string Fraction::str() const { return std::to_string(num) + "/" + std::to_string(den); }

ComplexityReport analyze_network(const NetworkConfig& config, const Shape& input_shape) {
  config.validate();
  if (input_shape.size() != 4) throw ShapeError("analyze input shape must be [B, C, F, T]");
  ComplexityReport report;
  report.network = config.name;
  report.input_shape = input_shape;
  const std::uint64_t batch = input_shape[0];
  Shape shape = input_shape;

  auto add_row = [&](ComplexityRow row) {
    report.total_params += row.params;
    report.total_macs += row.macs;
    if (row.kind == "batchnorm") report.batchnorm_params += row.params;
    else ++report.weighted_layers;
    report.rows.push_back(std::move(row));
  };
  auto conv_bn = [&](const std::string& name, const ConvSpec& spec, const Shape& in) {
    Shape out;
    try {
      out = spec.output_shape(in);
    } catch (const ShapeError& e) {
      throw ShapeError("stage '" + name + "': " + e.what());
    }
    add_row({name, "conv-" + std::string(to_string(spec.mode)), layer_params(spec),
             batch * layer_macs(spec, out[2], out[3]), out});
    add_row({name + ".bn", "batchnorm", batchnorm_params(spec.out_channels), 0, out});
    return out;
  };

  shape = conv_bn("input", config.input_conv, shape);
  const auto instances = config.instances();
  std::vector<Shape> tap_shapes(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const BlockInstance& inst = instances[i];
    const std::string name = "block" + std::to_string(i);
    const std::size_t d = config.depthwise_dilation(inst);
    Shape h = conv_bn(name + ".expand", make_pointwise(inst.in_channels, inst.hidden_channels()), shape);
    h = conv_bn(name + ".depthwise", make_depthwise(3, inst.hidden_channels(), inst.stride, d, d), h);
    shape = conv_bn(name + ".project", make_pointwise(inst.hidden_channels(), inst.out_channels), h);
    tap_shapes[i] = shape;
  }
  for (std::size_t tap : config.active_taps()) {
    conv_bn("mse" + std::to_string(tap),
            make_pointwise(instances[tap].out_channels, config.mse_projection_channels), tap_shapes[tap]);
  }
  const std::uint64_t width = config.embedding_width();
  auto dense = [&](const std::string& name, std::uint64_t in, std::uint64_t out) {
    add_row({name, "linear", linear_params(in, out), batch * linear_macs(in, out), Shape{batch, out}});
  };
  if (config.literal_fc_head) {
    dense("fc", width, config.fc_hidden);
    dense("classifier", config.fc_hidden, config.num_classes);
  } else {
    dense("classifier", width, config.num_classes);
  }
  return report;
}

const std::vector<BaselineRow>& published_baselines() {
  static const std::vector<BaselineRow> rows = {
      {"MobileNet-v1 based", 4.38, 0.34, 0.800},
      {"MobileNet-v2 based", 3.50, 0.33, 0.790},
      {"ShuffleNet based", 2.27, 0.15, 0.819},
      {"Proposed method (published)", kPublishedParamsMillions, kPublishedMacsBillions, 0.831},
      {"DenseNet", 14.51, 3.33, 0.840},
  };
  return rows;
}

PublishedDeviation published_deviation(const ComplexityReport& report) {
  return {report.params_millions() / kPublishedParamsMillions - 1.0,
          report.macs_billions() / kPublishedMacsBillions - 1.0};
}

const char* const kReconstructionNote =
    "the published block table is only partly recoverable (strides, repeats and the expansion "
    "factor of the 8 block rows are reconstructed), so PS and MAO can match the published "
    "totals only approximately";

std::string render_text(const ComplexityReport& report, bool with_baselines) {
  std::ostringstream out;
  char line[256];
  out << "network: " << report.network << "  input: " << shape_string(report.input_shape) << "\n\n";
  std::snprintf(line, sizeof(line), "%-22s %-16s %12s %16s  %s\n", "layer", "kind", "params", "macs", "output");
  out << line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof(line), "%-22s %-16s %12llu %16llu  %s\n", r.layer.c_str(), r.kind.c_str(),
                  static_cast<unsigned long long>(r.params), static_cast<unsigned long long>(r.macs),
                  shape_string(r.output_shape).c_str());
    out << line;
  }
  std::snprintf(line, sizeof(line),
                "\nweighted layers: %llu\nPS  total: %llu (%.3f M)  without BN: %llu  BN: %llu\n"
                "MAO total: %llu (%.3f G)\n",
                static_cast<unsigned long long>(report.weighted_layers),
                static_cast<unsigned long long>(report.total_params), report.params_millions(),
                static_cast<unsigned long long>(report.params_without_batchnorm()),
                static_cast<unsigned long long>(report.batchnorm_params),
                static_cast<unsigned long long>(report.total_macs), report.macs_billions());
  out << line;
  if (with_baselines) {
    out << "\nreference (published)\n";
    std::snprintf(line, sizeof(line), "%-30s %8s %8s %6s\n", "method", "PS", "MAO", "CA");
    out << line;
    for (const auto& b : published_baselines()) {
      std::snprintf(line, sizeof(line), "%-30s %6.2f M %6.2f G %6.3f\n", b.method.c_str(), b.params_millions,
                    b.macs_billions, b.accuracy);
      out << line;
    }
    std::snprintf(line, sizeof(line), "%-30s %6.2f M %6.2f G %6s\n", ("this build: " + report.network).c_str(),
                  report.params_millions(), report.macs_billions(), "-");
    out << line;
    const PublishedDeviation dev = published_deviation(report);
    std::snprintf(line, sizeof(line), "\ndeviation from published: PS %+.1f%%, MAO %+.1f%%\n",
                  100.0 * dev.params_fraction, 100.0 * dev.macs_fraction);
    out << line << "cause: " << kReconstructionNote << "\n";
  }
  return out.str();
}

nlohmann::json render_json(const ComplexityReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"layer", r.layer}, {"kind", r.kind}, {"params", r.params}, {"macs", r.macs},
                    {"output_shape", r.output_shape}});
  }
  nlohmann::json baselines = nlohmann::json::array();
  for (const auto& b : published_baselines()) {
    baselines.push_back({{"method", b.method}, {"ps_millions", b.params_millions},
                         {"mao_billions", b.macs_billions}, {"ca", b.accuracy}});
  }
  return {{"network", report.network},
          {"input_shape", report.input_shape},
          {"rows", rows},
          {"weighted_layers", report.weighted_layers},
          {"ps", report.total_params},
          {"ps_millions", report.params_millions()},
          {"ps_without_bn", report.params_without_batchnorm()},
          {"ps_bn", report.batchnorm_params},
          {"mao", report.total_macs},
          {"mao_billions", report.macs_billions()},
          {"published_baselines", baselines},
          {"deviation_from_published",
           {{"ps_fraction", published_deviation(report).params_fraction},
            {"mao_fraction", published_deviation(report).macs_fraction},
            {"cause", kReconstructionNote}}}};
}

}  // namespace dacnet
