// dacnet: synth-data | features | train | eval | analyze | ablate
//
// Exit status: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.

#include <deque>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dacnet/errors.hpp"
#include "dacnet/parallel.hpp"
#include "dacnet/pipeline.hpp"

namespace {

using namespace dacnet;

// CLI values start at the RunConfig defaults (shown by --help); only flags the
// user actually passed override the config file.
struct RunOptions {
  RunConfig values;
  std::string config_file;
  std::string network = values.network;
  std::string ablation = "full";
  std::string input_channels = "deltas";
  std::string manifest;
  std::string run_dir = values.run_dir.string();
  std::string cache_root;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters;

  RunConfig resolve() const {
    RunConfig c = config_file.empty() ? RunConfig{} : load_run_config(config_file);
    for (const auto& [opt, apply] : setters) {
      if (opt->count() > 0) apply(c);
    }
    return c;
  }
};

template <typename T>
void bind_option(RunOptions& o, CLI::App* cmd, const std::string& name, T& field, const std::string& help,
          std::function<void(RunConfig&)> apply) {
  o.setters.emplace_back(cmd->add_option(name, field, help)->capture_default_str(), std::move(apply));
}

void add_run_options(CLI::App* cmd, RunOptions& o, bool training) {
  cmd->add_option("--config", o.config_file, "JSON run config; flags given here override it")->capture_default_str();
  bind_option(o, cmd, "--manifest", o.manifest, "manifest CSV (path,label,split)",
       [&o](RunConfig& c) { c.manifest = o.manifest; });
  bind_option(o, cmd, "--cache", o.cache_root, "feature cache root (empty: $DACNET_CACHE, else <manifest dir>/.dacnet-cache)",
       [&o](RunConfig& c) { c.cache_root = o.cache_root; });
  bind_option(o, cmd, "--workers", o.values.workers, "parallel workers; results are identical for every value",
       [&o](RunConfig& c) { c.workers = o.values.workers; });
  bind_option(o, cmd, "--mel-bins", o.values.frontend.mel_bins, "mel bands",
       [&o](RunConfig& c) { c.frontend.mel_bins = o.values.frontend.mel_bins; });
  bind_option(o, cmd, "--input-channels", o.input_channels, "deltas | replicate",
       [&o](RunConfig& c) { c.frontend.channels = parse_input_channels(o.input_channels); });
  bind_option(o, cmd, "--batch-size", o.values.train.batch_size, "mini-batch size",
       [&o](RunConfig& c) { c.train.batch_size = o.values.train.batch_size; });
  if (!training) return;
  bind_option(o, cmd, "--run-dir", o.run_dir, "output directory",
       [&o](RunConfig& c) { c.run_dir = o.run_dir; });
  bind_option(o, cmd, "--network", o.network, "network preset or JSON file",
       [&o](RunConfig& c) { c.network = o.network; c.has_inline_network = false; });
  bind_option(o, cmd, "--ablation", o.ablation, "full | no_dco | no_mse",
       [&o](RunConfig& c) { c.ablation = parse_ablation(o.ablation); });
  bind_option(o, cmd, "--max-epochs", o.values.train.max_epochs, "training epochs (0 saves the initial weights)",
       [&o](RunConfig& c) { c.train.max_epochs = o.values.train.max_epochs; });
  bind_option(o, cmd, "--lr", o.values.train.learning_rate, "initial learning rate",
       [&o](RunConfig& c) { c.train.learning_rate = o.values.train.learning_rate; });
  bind_option(o, cmd, "--plateau-factor", o.values.train.plateau_factor, "learning-rate decay factor on a loss plateau",
       [&o](RunConfig& c) { c.train.plateau_factor = o.values.train.plateau_factor; });
  bind_option(o, cmd, "--plateau-patience", o.values.train.plateau_patience, "non-decreasing epochs before decay",
       [&o](RunConfig& c) { c.train.plateau_patience = o.values.train.plateau_patience; });
  bind_option(o, cmd, "--weight-decay", o.values.train.weight_decay, "decoupled weight decay",
       [&o](RunConfig& c) { c.train.weight_decay = o.values.train.weight_decay; });
  bind_option(o, cmd, "--beta1", o.values.train.beta1, "Adam first-moment decay",
       [&o](RunConfig& c) { c.train.beta1 = o.values.train.beta1; });
  bind_option(o, cmd, "--beta2", o.values.train.beta2, "Adam second-moment decay",
       [&o](RunConfig& c) { c.train.beta2 = o.values.train.beta2; });
  bind_option(o, cmd, "--seed", o.values.train.seed, "seed for initialization and shuffling",
       [&o](RunConfig& c) { c.train.seed = o.values.train.seed; });
}

Shape parse_shape(const std::string& text) {
  Shape shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(part, &used);
      if (used != part.size() || v == 0) throw std::invalid_argument(part);
      shape.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("bad --input-shape component '" + part + "'");
    }
  }
  if (shape.size() != 4) throw ConfigError("--input-shape needs four comma-separated sizes B,C,F,T");
  return shape;
}

int run(int argc, char** argv) {
  CLI::App app{"Dilated depthwise-separable CNN for domestic-activity audio classification"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "write a synthetic 9-class corpus and manifest");
  SyntheticSpec spec = default_synthetic_spec();
  std::string synth_out = "data/synth";
  std::size_t synth_workers = 1;
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth->add_option("--train-per-class", spec.train_per_class, "training segments per class")->capture_default_str();
  synth->add_option("--validation-per-class", spec.validation_per_class, "validation segments per class")
      ->capture_default_str();
  synth->add_option("--test-per-class", spec.test_per_class, "test segments per class")->capture_default_str();
  synth->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  synth->add_option("--workers", synth_workers, "parallel workers")->capture_default_str();

  std::deque<RunOptions> options;  // stable addresses for the bound fields

  auto* features = app.add_subcommand("features", "compute or refresh the feature cache for a manifest");
  RunOptions& feat_opts = options.emplace_back();
  add_run_options(features, feat_opts, false);

  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoints, log and test metrics");
  RunOptions& train_opts = options.emplace_back();
  add_run_options(train_cmd, train_opts, true);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint: CA and confusion matrix");
  RunOptions& eval_opts = options.emplace_back();
  add_run_options(eval_cmd, eval_opts, false);
  std::string checkpoint, eval_split = "test", eval_out;
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint (.dacm)")->required();
  eval_cmd->add_option("--split", eval_split, "train | validation | test")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "output directory (empty: <checkpoint dir>/eval-<split>)")
      ->capture_default_str();

  auto* analyze = app.add_subcommand("analyze", "per-layer parameter and MAC report");
  std::string analyze_network_name = "paper-2021", analyze_ablation = "full", analyze_shape = "1,3,28,499";
  std::string analyze_out = "runs/analyze";
  analyze->add_option("--network", analyze_network_name, "network preset or JSON file")->capture_default_str();
  analyze->add_option("--ablation", analyze_ablation, "full | no_dco | no_mse")->capture_default_str();
  analyze->add_option("--input-shape", analyze_shape, "B,C,F,T")->capture_default_str();
  analyze->add_option("--out", analyze_out, "output directory (empty: print only)")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "train full, no_dco and no_mse on the same data");
  RunOptions& ablate_opts = options.emplace_back();
  add_run_options(ablate, ablate_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*synth) {
    set_worker_count(synth_workers);
    run_synth_data(spec, synth_out, std::cout);
  } else if (*features) {
    run_features(feat_opts.resolve(), std::cout);
  } else if (*train_cmd) {
    run_train(train_opts.resolve(), std::cout);
  } else if (*eval_cmd) {
    const auto split = parse_split(eval_split);
    if (!split) throw ConfigError("unknown split '" + eval_split + "'");
    std::filesystem::path out = eval_out;
    if (out.empty()) {
      out = std::filesystem::path(checkpoint).parent_path() / ("eval-" + eval_split);
    }
    run_eval(eval_opts.resolve(), checkpoint, *split, out, std::cout);
  } else if (*analyze) {
    const NetworkConfig net = ablation_variant(load_network_config(analyze_network_name),
                                               parse_ablation(analyze_ablation));
    run_analyze(net, parse_shape(analyze_shape), analyze_out, std::cout);
  } else if (*ablate) {
    run_ablate(ablate_opts.resolve(), std::cout);
  }
  return 0;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << first_line(e.what()) << "\n";
    const std::string all = e.what();
    if (all.find('\n') != std::string::npos) std::cerr << all.substr(all.find('\n') + 1) << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
