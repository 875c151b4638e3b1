#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sgcp {

/// Marker appended to the last symbol of every word.
inline constexpr std::string_view kEndOfWord = "</w>";

/// Lowercases, splits on whitespace, separates punctuation and splits
/// clitics the way treebank tokenizers do ("can't" -> "ca n't").
/// Already-tokenized text passes through unchanged.
std::vector<std::string> pretokenize(std::string_view sentence);

/// Splits UTF-8 text into code points (invalid bytes become single units).
std::vector<std::string> utf8_chars(std::string_view text);

using MergeRule = std::pair<std::string, std::string>;

class BpeModel {
 public:
  BpeModel() = default;
  BpeModel(std::vector<std::string> alphabet, std::vector<MergeRule> merges);

  const std::vector<MergeRule>& merges() const { return merges_; }
  const std::vector<std::string>& alphabet() const { return alphabet_; }
  bool in_alphabet(std::string_view ch) const;

  /// Subword pieces of one word; the last piece carries kEndOfWord.
  std::vector<std::string> segment_word(std::string_view word) const;
  /// pretokenize + segment_word for every token.
  std::vector<std::string> segment(std::string_view sentence) const;

  /// Line-oriented text: a header, an alphabet line, then one
  /// "left right" merge rule per line in rank order.
  void save(std::ostream& out) const;
  static BpeModel load(std::istream& in);

 private:
  std::vector<std::string> alphabet_;
  std::vector<MergeRule> merges_;
  std::map<MergeRule, int> rank_;
};

/// Greedy pair merging: each round merges the most frequent adjacent pair,
/// ties broken by the lexicographically smallest pair. Stops early when no
/// pair remains. Throws DataError on an empty corpus.
BpeModel train_bpe(const std::vector<std::vector<std::string>>& corpus, int num_merges);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumReserved = 4;

  /// Reserved entries only.
  Vocab();

  /// Keeps the `max_size - kNumReserved` most frequent pieces, ties broken
  /// lexicographically.
  static Vocab build(const std::vector<std::vector<std::string>>& piece_sequences, std::size_t max_size);

  int lookup(std::string_view piece) const;
  bool contains(std::string_view piece) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }

  /// One token per line; the line number is the id.
  void save(std::ostream& out) const;
  static Vocab load(std::istream& in);

 private:
  void add(std::string piece);
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
};

/// Base vocabulary plus the current source sentence's out-of-vocabulary
/// pieces, which get ids |V|, |V|+1, ... in first-occurrence order.
class ExtendedVocab {
 public:
  ExtendedVocab(const Vocab& base, const std::vector<std::string>& source_pieces);

  const Vocab& base() const { return *base_; }
  const std::vector<std::string>& extension() const { return extension_; }
  std::size_t size() const { return base_->size() + extension_.size(); }

  /// Base id, extension id, or Vocab::kUnk.
  int lookup(std::string_view piece) const;
  const std::string& token(int id) const;
  /// Extended ids of each source piece (parallel to the constructor input).
  const std::vector<int>& source_ids() const { return source_ids_; }

 private:
  const Vocab* base_;
  std::vector<std::string> extension_;
  std::vector<int> source_ids_;
};

ExtendedVocab extend_for_copy(const Vocab& vocab, const std::vector<std::string>& source_pieces);

/// Sentence -> base-vocabulary ids (no SOS/EOS).
std::vector<int> encode(const BpeModel& model, const Vocab& vocab, std::string_view sentence);

/// Ids -> sentence. Reserved PAD/SOS/EOS ids are skipped; UNK renders as a
/// standalone "<unk>" word. Throws std::out_of_range on an unknown id.
std::string decode(const BpeModel& model, const Vocab& vocab, const std::vector<int>& ids);

/// Joins subword pieces back into space-separated words.
std::string join_pieces(const std::vector<std::string>& pieces);

/// Word-start flags of a piece sequence: 1 on the first piece of each word.
std::vector<int> word_starts(const std::vector<std::string>& pieces);

}  // namespace sgcp
