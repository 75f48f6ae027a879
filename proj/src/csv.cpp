#include "diskcd/csv.hpp"

#include <fstream>
#include <sstream>

#include "diskcd/error.hpp"

namespace diskcd {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace

Csv read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::Io, "cannot open file: " + path);
  Csv csv;
  csv.path = path;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (csv.header.empty()) {
      csv.header = std::move(fields);
      continue;
    }
    if (fields.size() != csv.header.size())
      fail(Err::MalformedRow, path + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(csv.header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
    csv.rows.push_back(std::move(fields));
  }
  if (csv.header.empty()) fail(Err::MalformedHeader, path + ": empty file, header expected");
  return csv;
}

void require_header(const Csv& csv, const std::vector<std::string>& expected) {
  if (csv.header == expected) return;
  std::ostringstream want;
  for (size_t i = 0; i < expected.size(); ++i) want << (i ? "," : "") << expected[i];
  std::ostringstream got;
  for (size_t i = 0; i < csv.header.size(); ++i) got << (i ? "," : "") << csv.header[i];
  fail(Err::MalformedHeader, csv.path + ": header must be '" + want.str() + "', got '" + got.str() + "'");
}

}  // namespace diskcd
