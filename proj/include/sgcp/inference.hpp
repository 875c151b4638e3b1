#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sgcp/model.hpp"
#include "sgcp/syntax_tree.hpp"
#include "sgcp/text_pipeline.hpp"

namespace sgcp {

struct BeamOptions {
  std::size_t width = 5;
  std::size_t max_len = 60;  // generated tokens, EOS included
};

struct Hypothesis {
  std::vector<int> tokens;  // extended ids, EOS excluded
  double log_prob = 0.0;
  bool finished = false;
  QueueCursor syntax;
  std::vector<std::size_t> cursor_history;  // cursor used at each step

  /// log-probability divided by the number of decoding steps taken.
  double score() const;
};

/// Source side of one decoding problem.
struct EncodedSource {
  std::vector<std::string> pieces;
  std::vector<int> base_ids;
  std::vector<int> ext_ids;
  std::vector<std::string> extension;
};

EncodedSource encode_source(const BpeModel& bpe, const Vocab& vocab, const std::string& sentence);

/// Beam search over one source and a pruned exemplar skeleton. Returns the
/// finished hypotheses ranked best first, or the unfinished beam if none
/// finished within `max_len` steps. PAD and SOS are never proposed.
std::vector<Hypothesis> beam_decode(Model& model, const EncodedSource& source, const SyntaxSkeleton& pruned,
                                    const BeamOptions& options);

/// Surface string of extended ids.
std::string detokenize(const Vocab& vocab, const std::vector<std::string>& extension, const std::vector<int>& ids);

struct Generation {
  std::string text;
  int height = 0;
};

/// Index of the candidate with the highest word-level ROUGE-1 against
/// `source`; ties go to the smallest height.
std::size_t select_by_rouge(const std::string& source, const std::vector<Generation>& candidates);

/// Heights tried by the multi-height variant: H_max down to H_max - 4,
/// skipping heights below 1.
std::vector<int> candidate_heights(int max_height);

class Generator {
 public:
  Generator(Model& model, const BpeModel& bpe, const Vocab& vocab, BeamOptions options = {})
      : model_(model), bpe_(bpe), vocab_(vocab), options_(options) {}

  /// Exemplar tree may carry terminals; they are stripped. `height` defaults
  /// to the exemplar skeleton height.
  Generation generate_f(const std::string& source, const ConstituencyTree& exemplar,
                        std::optional<int> height = std::nullopt);
  Generation generate_r(const std::string& source, const ConstituencyTree& exemplar);

 private:
  Model& model_;
  const BpeModel& bpe_;
  const Vocab& vocab_;
  BeamOptions options_;
};

}  // namespace sgcp
