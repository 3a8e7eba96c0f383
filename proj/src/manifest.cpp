#include "dacnet/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "dacnet/errors.hpp"

namespace dacnet {

const std::array<std::string, kNumClasses>& class_names() {
  static const std::array<std::string, kNumClasses> names = {
      "absence",         "cooking",        "dishwashing", "eating", "other", "social_activity",
      "vacuum_cleaning", "watching_tv", "working"};
  return names;
}

const std::array<std::string, kNumClasses>& class_display_names() {
  static const std::array<std::string, kNumClasses> names = {
      "Absence", "Cooking",         "Dishwashing", "Eating", "Others", "Social activity (visit, etc.)",
      "Vacuum cleaning", "Watching TV", "Working (typing, etc.)"};
  return names;
}

std::optional<std::size_t> parse_class(std::string_view text) {
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (text == class_names()[k] || text == class_display_names()[k]) return k;
  }
  return std::nullopt;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view text) {
  for (Split s : kSplits) {
    if (text == to_string(s)) return s;
  }
  return std::nullopt;
}

std::vector<ManifestRow> DatasetManifest::split(Split which) const {
  std::vector<ManifestRow> out;
  for (const auto& r : rows) {
    if (r.split == which) out.push_back(r);
  }
  return out;
}

std::array<std::array<std::size_t, kNumClasses>, 3> DatasetManifest::counts() const {
  std::array<std::array<std::size_t, kNumClasses>, 3> c{};
  for (const auto& r : rows) ++c[static_cast<std::size_t>(r.split)][r.label];
  return c;
}

namespace {

// Splits one CSV record; "" inside quotes is a literal quote.
std::vector<std::string> split_csv(const std::string& line, bool& ok) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  ok = true;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  ok = !quoted;
  return fields;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

DatasetManifest parse_manifest(std::istream& in, const std::string& source, const std::filesystem::path& root,
                               bool check_files) {
  DatasetManifest manifest;
  manifest.root = root;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw DataError(source + " line " + std::to_string(line_no) + ": " + what);
  };
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line()) throw DataError(source + ": empty file, expected header path,label,split");
  if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (line != "path,label,split") fail("header must be 'path,label,split', got '" + line + "'");

  std::unordered_set<std::string> seen;
  while (next_line()) {
    if (line.empty()) continue;
    bool ok = true;
    const auto f = split_csv(line, ok);
    if (!ok) fail("unterminated quoted field");
    if (f.size() != 3) fail("expected 3 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) fail("empty path");
    const auto label = parse_class(f[1]);
    if (!label) fail("unknown label '" + f[1] + "'");
    const auto split = parse_split(f[2]);
    if (!split) fail("unknown split '" + f[2] + "' (train | validation | test)");
    if (!seen.insert(f[0]).second) fail("duplicate path '" + f[0] + "'");
    ManifestRow row{f[0], *label, *split};
    if (check_files && !std::filesystem::is_regular_file(manifest.resolve(row))) {
      fail("missing audio file '" + manifest.resolve(row).string() + "'");
    }
    manifest.rows.push_back(std::move(row));
  }
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  return parse_manifest(in, path.string(), path.parent_path(), check_files);
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "path,label,split\n";
  for (const auto& r : manifest.rows) {
    out << quote(r.path) << ',' << class_names()[r.label] << ',' << to_string(r.split) << '\n';
  }
  if (!out) throw DataError("write failed for manifest " + path.string());
}

std::string format_counts(const DatasetManifest& manifest) {
  const auto c = manifest.counts();
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-18s %10s %10s %10s\n", "class", "train", "validation", "test");
  out << line;
  std::array<std::size_t, 3> totals{};
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    std::snprintf(line, sizeof(line), "%-18s %10zu %10zu %10zu\n", class_names()[k].c_str(), c[0][k], c[1][k],
                  c[2][k]);
    out << line;
    for (std::size_t s = 0; s < 3; ++s) totals[s] += c[s][k];
  }
  std::snprintf(line, sizeof(line), "%-18s %10zu %10zu %10zu\n", "total", totals[0], totals[1], totals[2]);
  out << line;
  return out.str();
}

}  // namespace dacnet
