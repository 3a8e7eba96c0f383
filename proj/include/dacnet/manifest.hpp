#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dacnet {

inline constexpr std::size_t kNumClasses = 9;

/// Canonical snake_case label identifiers, in class-index order.
const std::array<std::string, kNumClasses>& class_names();
/// Human-readable labels, in class-index order.
const std::array<std::string, kNumClasses>& class_display_names();
/// Accepts a canonical identifier or a display name; nullopt otherwise.
std::optional<std::size_t> parse_class(std::string_view text);

enum class Split { train, validation, test };
inline constexpr std::array<Split, 3> kSplits = {Split::train, Split::validation, Split::test};
std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view text);

struct ManifestRow {
  std::string path;  // relative to the manifest's directory
  std::size_t label = 0;
  Split split = Split::train;

  bool operator==(const ManifestRow&) const = default;
};

struct DatasetManifest {
  std::filesystem::path root;  // directory the row paths are relative to
  std::vector<ManifestRow> rows;

  std::filesystem::path resolve(const ManifestRow& row) const { return root / row.path; }
  std::vector<ManifestRow> split(Split which) const;
  /// counts[split][class]
  std::array<std::array<std::size_t, kNumClasses>, 3> counts() const;
};

/// CSV with header `path,label,split`; fields may be double-quoted. Throws DataError
/// naming the line for a bad header, wrong field count, unknown label or split,
/// duplicate path, or (with check_files) a missing audio file.
DatasetManifest parse_manifest(std::istream& in, const std::string& source, const std::filesystem::path& root,
                               bool check_files);
DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true);

/// Writes canonical labels; load_manifest of the result reproduces `manifest.rows`.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Aligned per-split, per-class count table with totals.
std::string format_counts(const DatasetManifest& manifest);

}  // namespace dacnet
