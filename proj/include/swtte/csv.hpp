#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace swtte::csv {

/// Parsed CSV with a header row. Row numbers are 1-based file lines, the
/// header being row 1, so the first data row is row 2.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_numbers;

  std::optional<std::size_t> column(std::string_view name) const;
  /// Throws Error(module, "missing column 'x'") when absent.
  std::size_t require_column(std::string_view name, const std::string& module) const;
};

/// RFC 4180-style reader: quoted fields, doubled quotes, CRLF tolerated,
/// blank lines skipped. Cells are trimmed of surrounding whitespace.
Table read(std::istream& in, const std::string& module);

std::string escape(std::string_view field);

double parse_double(std::string_view text, std::size_t row, std::string_view column,
                    const std::string& module);
int parse_int(std::string_view text, std::size_t row, std::string_view column,
              const std::string& module);

}  // namespace swtte::csv

namespace swtte {

/// Reads a whole file; gzip-compressed input is decompressed transparently.
std::string read_text_file(const std::string& path);

/// Writes to `path.tmp` then renames over `path`.
void write_text_file_atomic(const std::string& path, std::string_view content);

}  // namespace swtte
