#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "sgcp/syntax_tree.hpp"
#include "sgcp/tsv.hpp"

namespace toy {

struct Corpus {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<sgcp::ConstituencyTree> source_trees;
  std::vector<sgcp::ConstituencyTree> target_trees;

  std::vector<sgcp::ConstituencyTree> all_trees() const {
    auto t = source_trees;
    t.insert(t.end(), target_trees.begin(), target_trees.end());
    return t;
  }
};

inline std::string fixture(const std::string& name) { return std::string(SGCP_FIXTURES) + "/" + name; }

inline Corpus load() {
  Corpus c;
  for (const auto& row : sgcp::read_tsv(fixture("toy_pairs.tsv"), 2)) c.pairs.emplace_back(row[0], row[1]);
  for (auto& trees : sgcp::read_tree_file(fixture("toy_trees.tsv"), 2)) {
    c.source_trees.push_back(trees[0]);
    c.target_trees.push_back(trees[1]);
  }
  return c;
}

inline sgcp::ConstituencyTree worked_tree() {
  std::ifstream in(fixture("worked_example.tree"));
  std::string line;
  std::getline(in, line);
  return sgcp::parse_bracketed(line);
}

inline const char* kWorkedSentence = "what is the best language to learn first ?";
inline const char* kWorkedSource = "which language should i learn first ?";

}  // namespace toy
