#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgcp/metrics.hpp"
#include "sgcp/syntax_tree.hpp"

namespace sgcp {

/// One paraphrase pair with parses of both sides.
struct SourcePair {
  std::string x, z;
  ConstituencyTree x_tree, z_tree;
};

struct BuildOptions {
  std::size_t max_tokens = 30;   // pairs with a longer side are dropped up front
  std::size_t max_length_diff = 2;
  double max_bleu = 0.6;
};

struct BuildStats {
  std::size_t input_pairs = 0;
  std::size_t too_long = 0;
  std::size_t no_candidate = 0;  // pairs whose candidate set ended up empty
  std::size_t pool_size = 0;
};

struct BuildResult {
  std::vector<EvalTriple> triples;
  BuildStats stats;
};

/// For each pair (X, Z) picks as exemplar the sentence of the pooled corpus
/// (every X and Z, deduplicated) that is neither X nor Z, is within
/// `max_length_diff` words of Z, has sentence BLEU(C, X) <= `max_bleu`, and
/// minimises skeleton TED to Z. TED ties go to the earliest pool entry.
/// Throws DataError with fewer than two pairs or when no triple survives.
BuildResult build_eval_set(const std::vector<SourcePair>& pairs, const BuildOptions& options = {});

struct EvalSplit {
  std::vector<EvalTriple> test, validation;
};

/// Seeded shuffle, then the first `test_n` triples form the test set and
/// the next `val_n` the validation set.
EvalSplit split_eval_set(const std::vector<EvalTriple>& triples, std::size_t test_n, std::size_t val_n,
                         std::uint64_t seed);

}  // namespace sgcp
