#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace saltseg {

// Minimal comma-separated tables. Fields never contain commas or quotes in
// the formats used here (ids, RLE strings, numbers), so no quoting is done.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Throws IoError if unreadable, FormatError if the header differs from
/// `expected_header` or a row has the wrong number of fields.
CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header);

/// Writes atomically (temp file + rename). Throws IoError.
void write_csv(const std::filesystem::path& path, const CsvTable& table);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace saltseg
