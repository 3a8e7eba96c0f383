#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "dacnet/complexity.hpp"
#include "dacnet/feature_cache.hpp"
#include "dacnet/run_config.hpp"
#include "dacnet/synthetic.hpp"
#include "dacnet/trainer.hpp"

namespace dacnet {

// Artifacts are written to `<final>.partial`. commit() replaces `final` with it;
// destruction without commit moves it to `<final>.quarantine` instead.
class StagedDir {
 public:
  explicit StagedDir(std::filesystem::path final_dir);
  ~StagedDir();
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;

  const std::filesystem::path& path() const { return staging_; }
  void commit();

 private:
  std::filesystem::path final_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

void write_text(const std::filesystem::path& path, const std::string& text);

DatasetManifest run_synth_data(const SyntheticSpec& spec, const std::filesystem::path& out_dir, std::ostream& log);

/// Throws DataError listing every failed file after processing all of them.
CacheStats run_features(const RunConfig& config, std::ostream& log);

struct TrainSummary {
  std::size_t epochs = 0;
  std::size_t steps = 0;
  double final_train_loss = 0.0;
  std::size_t best_epoch = 0;  // 0: initial weights
  std::optional<double> test_ca_last;
  std::optional<double> test_ca_best;
  std::size_t trainable_scalars = 0;
  double seconds = 0.0;
};

/// Writes config.json, train.log, model_last.dacm, model_best.dacm and, with a
/// test split, metrics.json plus the test confusion matrix (CSV and heat table).
TrainSummary run_train(const RunConfig& config, std::ostream& log);

/// Writes eval.json, confusion.csv and confusion.txt into `out_dir`.
EvalResult run_eval(const RunConfig& config, const std::filesystem::path& checkpoint, Split split,
                    const std::filesystem::path& out_dir, std::ostream& log);

/// Prints the text report; writes complexity.txt and complexity.json into `out_dir` when non-empty.
ComplexityReport run_analyze(const NetworkConfig& network, const Shape& input_shape,
                             const std::filesystem::path& out_dir, std::ostream& log);

struct AblationRow {
  Ablation which;
  std::string method;
  TrainSummary summary;
};

/// Trains full, no_dco and no_mse into `<run_dir>/<ablation>` and writes
/// ablation.csv and ablation.txt.
std::vector<AblationRow> run_ablate(const RunConfig& config, std::ostream& log);

}  // namespace dacnet
