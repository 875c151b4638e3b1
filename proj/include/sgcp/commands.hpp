#pragma once

#include <iosfwd>
#include <string>

#include "sgcp/config.hpp"

// Command implementations behind the `sgcp` tool. Each takes the merged
// settings (config file, then command-line overrides; keys are the flag names
// with '-' replaced by '_'), writes only under `out`, and reports progress on
// `log`. Failures surface as UsageError, DataError, ParseError or
// NumericError.
namespace sgcp::cli {

/// pairs + trees -> out/{bpe.model, vocab.txt, labels.txt, corpus.tsv, stats.txt}
void cmd_preprocess(const KeyValueConfig& settings, std::ostream& log);

/// pairs + trees [+ data = preprocess dir] -> out/{manifest.txt, ..., loss.tsv,
/// best.ckpt, last.ckpt}
void cmd_train(const KeyValueConfig& settings, std::ostream& log);

/// checkpoint + (triples + trees | pairs + trees) -> out/generations.tsv
void cmd_generate(const KeyValueConfig& settings, std::ostream& log);

/// generations + triples + trees [+ gen_trees] -> out/{report.txt, report.tsv}
void cmd_evaluate(const KeyValueConfig& settings, std::ostream& log);

/// pairs + trees -> out/{triples, test, valid}.{tsv, trees}, out/stats.txt
void cmd_build_dataset(const KeyValueConfig& settings, std::ostream& log);

/// `tree` (bracketed text) or the first tree of `trees`, pruned at `height`.
void cmd_inspect_tree(const KeyValueConfig& settings, std::ostream& log);

/// Exit status for an exception escaping a command: 1 usage, 2 data, 3 numeric.
int exit_code_for(const std::exception& e);

}  // namespace sgcp::cli
