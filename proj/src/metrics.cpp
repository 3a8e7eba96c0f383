#include "dacnet/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "dacnet/errors.hpp"

namespace dacnet {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t target, std::size_t predicted, std::size_t count) {
  if (target >= classes_ || predicted >= classes_) {
    throw ConfigError("class index out of range for a " + std::to_string(classes_) + "-class confusion matrix");
  }
  counts_[target * classes_ + predicted] += count;
}

std::size_t ConfusionMatrix::at(std::size_t target, std::size_t predicted) const {
  return counts_.at(target * classes_ + predicted);
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t k = 0; k < classes_; ++k) t += at(k, k);
  return t;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  if (n == 0) throw DataError("accuracy of an empty evaluation set");
  return static_cast<double>(trace()) / static_cast<double>(n);
}

namespace {

std::string label_or_index(std::span<const std::string> labels, std::size_t k) {
  return k < labels.size() ? labels[k] : std::to_string(k);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::string ConfusionMatrix::to_csv(std::span<const std::string> labels) const {
  std::ostringstream out;
  out << "target\\predicted";
  for (std::size_t p = 0; p < classes_; ++p) out << ',' << csv_field(label_or_index(labels, p));
  out << '\n';
  for (std::size_t t = 0; t < classes_; ++t) {
    out << csv_field(label_or_index(labels, t));
    for (std::size_t p = 0; p < classes_; ++p) out << ',' << at(t, p);
    out << '\n';
  }
  return out.str();
}

std::string ConfusionMatrix::heat_table(std::span<const std::string> labels) const {
  static constexpr const char* shades[] = {" ", ".", ":", "+", "#"};
  std::size_t width = 6;
  for (std::size_t k = 0; k < classes_; ++k) width = std::max(width, label_or_index(labels, k).size());
  std::ostringstream out;
  out << std::string(width, ' ');
  for (std::size_t p = 0; p < classes_; ++p) {
    char head[16];
    std::snprintf(head, sizeof(head), " %6zu", p);
    out << head;
  }
  out << "   (row %, predicted class index)\n";
  for (std::size_t t = 0; t < classes_; ++t) {
    std::size_t row_total = 0;
    for (std::size_t p = 0; p < classes_; ++p) row_total += at(t, p);
    const std::string name = label_or_index(labels, t);
    out << name << std::string(width - name.size(), ' ');
    for (std::size_t p = 0; p < classes_; ++p) {
      const double pct = row_total ? 100.0 * static_cast<double>(at(t, p)) / static_cast<double>(row_total) : 0.0;
      const int shade = pct <= 0.0 ? 0 : std::min(4, 1 + static_cast<int>(pct / 25.0));
      char cell[16];
      std::snprintf(cell, sizeof(cell), " %5.1f%s", pct, shades[shade]);
      out << cell;
    }
    out << '\n';
  }
  return out.str();
}

std::size_t argmax(std::span<const double> row) {
  if (row.empty()) throw ShapeError("argmax of an empty row");
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.size(); ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

std::vector<std::size_t> predict(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("predict expects [B, C] logits, got " + shape_string(logits.shape()));
  const std::size_t b = logits.dim(0);
  const std::size_t c = logits.dim(1);
  std::vector<std::size_t> out(b);
  for (std::size_t i = 0; i < b; ++i) out[i] = argmax(logits.values().subspan(i * c, c));
  return out;
}

std::size_t majority_class(std::span<const std::size_t> labels, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t l : labels) {
    if (l >= classes) throw ConfigError("label " + std::to_string(l) + " out of range");
    ++counts[l];
  }
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

ConfusionMatrix constant_predictor(std::span<const std::size_t> labels, std::size_t classes,
                                   std::size_t predicted) {
  ConfusionMatrix cm(classes);
  for (std::size_t l : labels) cm.add(l, predicted);
  return cm;
}

}  // namespace dacnet
