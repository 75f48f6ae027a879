#pragma once

#include <string>
#include <vector>

namespace diskcd {

// Materialized comma-separated file. No quoting: identifiers and numbers only.
struct Csv {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // 1-based source line of a data row, for error messages
  int64_t line_of(size_t row) const { return static_cast<int64_t>(row) + 2; }
};

// Reads the whole file; every row must have as many fields as the header.
// Blank lines are skipped, CRLF endings are tolerated.
Csv read_csv(const std::string& path);

// Exact header match (names and order), else MalformedHeader.
void require_header(const Csv& csv, const std::vector<std::string>& expected);

}  // namespace diskcd
