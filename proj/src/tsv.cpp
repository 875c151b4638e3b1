#include "sgcp/tsv.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sgcp/error.hpp"

namespace sgcp {

std::vector<TsvRow> parse_tsv(std::istream& in, std::size_t columns, const std::string& origin) {
  std::vector<TsvRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    TsvRow row;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      row.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (row.size() != columns)
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                      " tab-separated fields, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<TsvRow> read_tsv(const std::string& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  return parse_tsv(in, columns, path);
}

void write_tsv_row(std::ostream& out, const TsvRow& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << '\t';
    for (char c : row[i]) out << (c == '\t' || c == '\n' || c == '\r' ? ' ' : c);
  }
  out << '\n';
}

void write_tsv(const std::string& path, const std::vector<TsvRow>& rows) {
  std::ostringstream s;
  for (const auto& r : rows) write_tsv_row(s, r);
  write_text_file(path, s.str());
}

std::vector<std::vector<ConstituencyTree>> read_tree_file(const std::string& path, std::size_t per_line) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::vector<ConstituencyTree>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<ConstituencyTree> trees;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      const std::string field = line.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
      try {
        trees.push_back(parse_bracketed(field));
      } catch (const ParseError& e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": tree " + std::to_string(trees.size() + 1) + ": " +
                        e.what());
      }
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (trees.size() != per_line)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(per_line) +
                      " trees, found " + std::to_string(trees.size()));
    out.push_back(std::move(trees));
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << content;
  if (!out) throw DataError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace sgcp
