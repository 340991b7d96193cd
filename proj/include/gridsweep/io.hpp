#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gridsweep::io {

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

/// Parse a full-token double; throws ParseError naming `what` on failure.
double parse_double(std::string_view text, std::string_view what, int line = 0);
long long parse_int(std::string_view text, std::string_view what, int line = 0);

std::string trim(std::string_view text);

/// RFC 4180 field quoting: quotes only when the field holds a comma, quote or newline.
std::string csv_field(std::string_view field);

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
  std::size_t width_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// Column index by header name; throws ParseError when absent.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

/// Plain-text `key = value` configuration. `#` starts a comment.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  void set(const std::string& key, const std::string& value, int line = 0);
  const std::map<std::string, std::pair<std::string, int>>& entries() const { return values_; }

 private:
  std::map<std::string, std::pair<std::string, int>> values_;  // value, source line
};

/// Collects a command's output files in a hidden staging directory and moves
/// them into place only on commit(). Destruction without commit() removes the
/// staging directory, so a failing command leaves no partial outputs behind.
class StagedOutput {
 public:
  explicit StagedOutput(std::filesystem::path final_dir);
  ~StagedOutput();
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;

  /// Path inside the staging area for a file that will land at final_dir/name.
  std::filesystem::path path(const std::string& name);
  const std::filesystem::path& staging_dir() const { return staging_; }
  void commit();

 private:
  std::filesystem::path final_dir_;
  std::filesystem::path staging_;
};

/// Write `content` to `path` through a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace gridsweep::io
