#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dacnet/tensor.hpp"

namespace dacnet {

// Rows are target classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  void add(std::size_t target, std::size_t predicted, std::size_t count = 1);
  std::size_t at(std::size_t target, std::size_t predicted) const;
  std::size_t classes() const { return classes_; }
  std::size_t total() const;
  std::size_t trace() const;

  /// trace / total. Throws DataError when empty.
  double accuracy() const;

  /// Header row of predicted labels, one row per target label.
  std::string to_csv(std::span<const std::string> labels) const;
  /// Row-normalized percentages with a shade glyph per cell.
  std::string heat_table(std::span<const std::string> labels) const;

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> row);

/// Row-wise argmax of a [B, C] logit tensor.
std::vector<std::size_t> predict(const Tensor& logits);

/// Most frequent label; ties go to the lowest class index.
std::size_t majority_class(std::span<const std::size_t> labels, std::size_t classes);

/// Confusion matrix of a predictor that always answers `predicted`.
ConfusionMatrix constant_predictor(std::span<const std::size_t> labels, std::size_t classes,
                                   std::size_t predicted);

}  // namespace dacnet
