#pragma once

// Small CSV reader/writer for the library's file formats, plus a content
// hash used by the pipeline cache.

#include <cstdint>
#include <string>
#include <vector>

namespace scex {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;          // -1 if absent
  int require_column(const std::string& name) const;  // throws input_error
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// FNV-1a content hash, printed as 16 hex digits. Not cryptographic; used only
// for pipeline stage caching.
std::uint64_t fnv1a_hash(const void* data, std::size_t len);
std::string file_hash(const std::string& path);

std::string format_double(double v);  // shortest round-trip representation

}  // namespace scex
