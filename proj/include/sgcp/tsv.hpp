#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sgcp/syntax_tree.hpp"

namespace sgcp {

using TsvRow = std::vector<std::string>;

/// Every non-empty line must have exactly `columns` tab-separated fields;
/// errors name the file and 1-based line number.
std::vector<TsvRow> read_tsv(const std::string& path, std::size_t columns);
std::vector<TsvRow> parse_tsv(std::istream& in, std::size_t columns, const std::string& origin);

/// Tabs and newlines inside fields are replaced by spaces.
void write_tsv_row(std::ostream& out, const TsvRow& row);
void write_tsv(const std::string& path, const std::vector<TsvRow>& rows);

/// Tree file with `per_line` bracketed trees per line, tab-separated.
std::vector<std::vector<ConstituencyTree>> read_tree_file(const std::string& path, std::size_t per_line);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace sgcp
