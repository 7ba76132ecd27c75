#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace telecouple {

/// A header-first CSV file held as strings. Fields are comma separated and
/// unquoted; identifiers must not contain commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based line number of each row in the source file, for messages.
  std::vector<std::size_t> line_numbers;

  std::optional<std::size_t> column(std::string_view name) const;
};

/// Throws Error(FileNotFound) when the file cannot be opened, and
/// Error(SchemaError) on ragged rows or an empty file.
CsvTable read_csv(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);

/// Parses a finite or non-finite double; nullopt when the cell is not a number.
std::optional<double> parse_double(std::string_view cell);

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace telecouple
