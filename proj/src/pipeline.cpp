#include "dacnet/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "dacnet/errors.hpp"
#include "dacnet/parallel.hpp"

namespace dacnet {

namespace fs = std::filesystem;

StagedDir::StagedDir(fs::path final_dir) : final_(std::move(final_dir)) {
  if (final_.empty()) throw ConfigError("output directory must not be empty");
  final_ = final_.lexically_normal();
  if (!final_.has_filename()) final_ = final_.parent_path();
  staging_ = final_.string() + ".partial";
  fs::remove_all(staging_);
  fs::create_directories(staging_);
}

StagedDir::~StagedDir() {
  if (committed_) return;
  try {
    const fs::path quarantine = final_.string() + ".quarantine";
    fs::remove_all(quarantine);
    fs::rename(staging_, quarantine);
    std::cerr << "partial artifacts quarantined in " << quarantine.string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "could not quarantine " << staging_.string() << ": " << e.what() << "\n";
  }
}

void StagedDir::commit() {
  fs::remove_all(final_);
  if (final_.has_parent_path()) fs::create_directories(final_.parent_path());
  fs::rename(staging_, final_);
  committed_ = true;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

namespace {

std::vector<std::string> label_names() { return {class_names().begin(), class_names().end()}; }

void write_confusion(const fs::path& dir, const std::string& stem, const ConfusionMatrix& cm) {
  const auto labels = label_names();
  write_text(dir / (stem + ".csv"), cm.to_csv(labels));
  write_text(dir / (stem + ".txt"), cm.heat_table(labels));
}

DatasetManifest manifest_for(const RunConfig& config) {
  if (config.manifest.empty()) throw ConfigError("no manifest given (--manifest or paths.manifest)");
  return load_manifest(config.manifest);
}

}  // namespace

DatasetManifest run_synth_data(const SyntheticSpec& spec, const fs::path& out_dir, std::ostream& log) {
  StagedDir stage(out_dir);
  DatasetManifest manifest = generate_synthetic(spec, stage.path());
  stage.commit();
  manifest.root = out_dir;
  log << "wrote " << manifest.rows.size() << " segments and " << (out_dir / "manifest.csv").string() << "\n"
      << format_counts(manifest);
  return manifest;
}

CacheStats run_features(const RunConfig& config, std::ostream& log) {
  config.frontend.validate();
  set_worker_count(config.workers);
  const DatasetManifest manifest = manifest_for(config);
  const fs::path root = config.resolved_cache_root();
  log << format_counts(manifest);
  CacheStats stats = build_feature_cache(manifest, config.frontend, root);
  log << "cache " << root.string() << ": " << stats.hits << " hit(s), " << stats.computed << " computed, "
      << stats.errors.size() << " failed\n";
  if (!stats.errors.empty()) {
    std::string all;
    for (const auto& e : stats.errors) all += "\n  " + e;
    throw DataError(std::to_string(stats.errors.size()) + " file(s) failed:" + all);
  }
  return stats;
}

TrainSummary run_train(const RunConfig& config, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  set_worker_count(config.workers);
  const NetworkConfig network = config.resolved_network();
  if (network.num_classes != kNumClasses) {
    throw ConfigError("network has " + std::to_string(network.num_classes) + " classes, the label set has " +
                      std::to_string(kNumClasses));
  }
  const DatasetManifest manifest = manifest_for(config);
  const fs::path cache = config.resolved_cache_root();
  const Dataset training = load_split(manifest, Split::train, config.frontend, cache);
  const Dataset validation = load_split(manifest, Split::validation, config.frontend, cache);
  const Dataset test = load_split(manifest, Split::test, config.frontend, cache);
  if (training.empty() && config.train.max_epochs > 0) throw DataError("manifest has no training rows");

  StagedDir stage(config.run_dir);
  const fs::path dir = stage.path();
  write_text(dir / "config.json", to_json(config).dump(2) + "\n");
  std::ofstream train_log(dir / "train.log");

  Model model(network, config.train.seed);
  TrainSummary summary;
  summary.trainable_scalars = model.trainable_scalar_count();
  auto emit = [&](const std::string& line) {
    train_log << line << "\n" << std::flush;
    log << line << "\n" << std::flush;
  };
  emit("# network " + network.name + " (" + std::string(to_string(config.ablation)) + "), " +
       std::to_string(summary.trainable_scalars) + " trainable scalars; train " + std::to_string(training.size()) +
       ", validation " + std::to_string(validation.size()) + ", test " + std::to_string(test.size()));

  model.save(dir / "model_last.dacm");
  model.save(dir / "model_best.dacm");
  double best_val = -1.0;
  const TrainResult result = train(model, training, validation, config.train, [&](const EpochLog& e, Model& m) {
    emit(format_epoch_log(e));
    m.save(dir / "model_last.dacm");
    if (validation.empty() || e.val_accuracy > best_val) {
      best_val = e.val_accuracy;
      summary.best_epoch = e.epoch;
      m.save(dir / "model_best.dacm");
    }
  });
  summary.epochs = result.epochs.size();
  summary.steps = result.steps;
  if (!result.epochs.empty()) summary.final_train_loss = result.epochs.back().train_loss;

  nlohmann::json metrics = {{"epochs", summary.epochs},
                            {"steps", summary.steps},
                            {"best_epoch", summary.best_epoch},
                            {"trainable_scalars", summary.trainable_scalars}};
  if (!test.empty()) {
    const EvalResult last = evaluate(model, test, config.train.batch_size);
    Model best = Model::load(dir / "model_best.dacm");
    const EvalResult at_best = evaluate(best, test, config.train.batch_size);
    summary.test_ca_last = last.accuracy;
    summary.test_ca_best = at_best.accuracy;
    write_confusion(dir, "confusion_test", last.confusion);
    metrics["test_ca_last_epoch"] = last.accuracy;
    metrics["test_ca_best_validation_epoch"] = at_best.accuracy;
    char line[160];
    std::snprintf(line, sizeof(line), "test CA: last epoch %.4f, best-validation epoch (%zu) %.4f", last.accuracy,
                  summary.best_epoch, at_best.accuracy);
    emit(line);
  }
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  metrics["seconds"] = summary.seconds;
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  train_log.close();
  stage.commit();
  return summary;
}

EvalResult run_eval(const RunConfig& config, const fs::path& checkpoint, Split split, const fs::path& out_dir,
                    std::ostream& log) {
  config.frontend.validate();
  set_worker_count(config.workers);
  Model model = Model::load(checkpoint);
  const DatasetManifest manifest = manifest_for(config);
  const Dataset data = load_split(manifest, split, config.frontend, config.resolved_cache_root());
  StagedDir stage(out_dir);
  const EvalResult result = evaluate(model, data, config.train.batch_size);
  write_confusion(stage.path(), "confusion", result.confusion);
  const nlohmann::json summary = {{"checkpoint", checkpoint.generic_string()},
                                  {"split", to_string(split)},
                                  {"ca", result.accuracy},
                                  {"correct", result.confusion.trace()},
                                  {"total", result.confusion.total()}};
  write_text(stage.path() / "eval.json", summary.dump(2) + "\n");
  stage.commit();
  char line[128];
  std::snprintf(line, sizeof(line), "%s CA %.4f (%zu / %zu)\n", std::string(to_string(split)).c_str(),
                result.accuracy, result.confusion.trace(), result.confusion.total());
  log << line << result.confusion.heat_table(label_names());
  return result;
}

ComplexityReport run_analyze(const NetworkConfig& network, const Shape& input_shape, const fs::path& out_dir,
                             std::ostream& log) {
  const ComplexityReport report = analyze_network(network, input_shape);
  const std::string text = render_text(report);
  log << text;
  if (!out_dir.empty()) {
    StagedDir stage(out_dir);
    write_text(stage.path() / "complexity.txt", text);
    write_text(stage.path() / "complexity.json", render_json(report).dump(2) + "\n");
    stage.commit();
  }
  return report;
}

std::vector<AblationRow> run_ablate(const RunConfig& config, std::ostream& log) {
  config.validate();
  StagedDir stage(config.run_dir);
  std::vector<AblationRow> rows;
  const std::pair<Ablation, const char*> variants[] = {{Ablation::full, "Proposed method"},
                                                       {Ablation::no_dco, "Proposed method without DCO"},
                                                       {Ablation::no_mse, "Proposed method without MSE"}};
  for (const auto& [which, method] : variants) {
    RunConfig variant = config;
    variant.ablation = which;
    variant.run_dir = stage.path() / std::string(to_string(which));
    log << "== " << method << " ==\n";
    rows.push_back({which, method, run_train(variant, log)});
  }
  std::string csv = "method,ablation,trainable_scalars,test_ca_last_epoch,test_ca_best_validation_epoch\n";
  std::string table = "method                          PS (scalars)   CA last   CA best-val\n";
  for (const auto& r : rows) {
    char line[200];
    std::snprintf(line, sizeof(line), "%s,%s,%zu,%.6f,%.6f\n", r.method.c_str(),
                  std::string(to_string(r.which)).c_str(), r.summary.trainable_scalars,
                  r.summary.test_ca_last.value_or(-1.0), r.summary.test_ca_best.value_or(-1.0));
    csv += line;
    std::snprintf(line, sizeof(line), "%-31s %12zu   %7.4f   %11.4f\n", r.method.c_str(),
                  r.summary.trainable_scalars, r.summary.test_ca_last.value_or(-1.0),
                  r.summary.test_ca_best.value_or(-1.0));
    table += line;
  }
  write_text(stage.path() / "ablation.csv", csv);
  write_text(stage.path() / "ablation.txt", table);
  write_text(stage.path() / "config.json", to_json(config).dump(2) + "\n");
  stage.commit();
  log << table;
  return rows;
}

}  // namespace dacnet
