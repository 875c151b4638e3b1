#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sgcp/syntax_tree.hpp"

namespace sgcp {

using Tokens = std::vector<std::string>;

/// Word sequence used by every metric: the pipeline pretokenizer (lowercased).
Tokens metric_tokens(std::string_view sentence);

/// BLEU-4 with brevity penalty. Orders for which the candidate has no n-grams
/// are left out of the geometric mean; an order with zero matches contributes
/// 0.1 / (candidate n-gram count) instead of zero.
double sentence_bleu(const Tokens& candidate, const Tokens& reference);
double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references);

/// F1 over clipped n-gram overlap. When either side has no n-grams of this
/// order the score is 1 for identical non-empty sequences and 0 otherwise.
double rouge_n(const Tokens& candidate, const Tokens& reference, int n);
/// F1 over the longest common subsequence.
double rouge_l(const Tokens& candidate, const Tokens& reference);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

struct TedScores {
  int ted_e = 0;  // generation vs exemplar
  int ted_r = 0;  // generation vs reference
};
/// Tree edit distance between syntax skeletons (terminals are stripped).
TedScores ted_metrics(const ConstituencyTree& generation, const ConstituencyTree& exemplar,
                      const ConstituencyTree& reference);

struct EvalTriple {
  std::string source, exemplar, reference;
  ConstituencyTree source_tree, exemplar_tree, reference_tree;
};

enum class BleuMode { Corpus, Sentence };

struct MetricRow {
  std::string system;
  double bleu = 0, rouge1 = 0, rouge2 = 0, rougel = 0;  // in [0, 1]
  double ted_r = 0, ted_e = 0;  // NaN when no output has a tree; reported as "-"
  std::size_t count = 0;
  std::size_t unparsed = 0;  // outputs without a tree, left out of the TED means
};

/// Scores one system's outputs against the references. `trees[i]` is the
/// parse of `outputs[i]` if known.
MetricRow score_system(const std::string& name, const std::vector<EvalTriple>& triples,
                       const std::vector<std::string>& outputs,
                       const std::vector<std::optional<ConstituencyTree>>& trees, BleuMode mode);

/// Source-as-Output and Exemplar-as-Output rows.
std::vector<MetricRow> baselines(const std::vector<EvalTriple>& triples, BleuMode mode);

/// Aligned table; alignment metrics are multiplied by 100.
std::string format_report(const std::vector<MetricRow>& rows);
std::string format_report_tsv(const std::vector<MetricRow>& rows);

struct PermutationResult {
  double p_value = 1.0;
  bool significant = false;
  bool exact = false;
};

/// Two-sided paired sign-flip test on the mean difference. Enumerates all
/// 2^n sign patterns when that is at most `iterations`; otherwise samples
/// `iterations` patterns and returns (hits + 1) / (iterations + 1).
PermutationResult permutation_test(const std::vector<double>& a, const std::vector<double>& b,
                                   std::size_t iterations = 10000, std::uint64_t seed = 1, double alpha = 0.05);

}  // namespace sgcp
