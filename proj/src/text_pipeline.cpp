#include "sgcp/text_pipeline.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "sgcp/error.hpp"

namespace sgcp {

namespace {

constexpr std::string_view kPunct = "?!.,;:\"()[]{}`";
constexpr std::string_view kUnkText = "<unk>";
constexpr std::string_view kBpeHeader = "#sgcp-bpe v1";

bool is_punct(char c) { return kPunct.find(c) != std::string_view::npos; }

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

void split_clitic(std::string word, std::vector<std::string>& out) {
  static constexpr std::array<std::string_view, 6> kClitics{"'s", "'re", "'ve", "'ll", "'d", "'m"};
  if (word.size() > 3 && ends_with(word, "n't")) {
    out.push_back(word.substr(0, word.size() - 3));
    out.emplace_back("n't");
    return;
  }
  for (auto c : kClitics) {
    if (word.size() > c.size() && ends_with(word, c)) {
      out.push_back(word.substr(0, word.size() - c.size()));
      out.emplace_back(c);
      return;
    }
  }
  out.push_back(std::move(word));
}

bool ends_with_marker(std::string_view piece) { return ends_with(piece, kEndOfWord); }

}  // namespace

std::vector<std::string> pretokenize(std::string_view sentence) {
  std::vector<std::string> out;
  std::string lowered(sentence);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c); });
  std::istringstream in(lowered);
  std::string chunk;
  while (in >> chunk) {
    std::size_t b = 0, e = chunk.size();
    std::vector<std::string> trailing;
    while (b < e && is_punct(chunk[b])) out.emplace_back(1, chunk[b++]);
    while (e > b && is_punct(chunk[e - 1])) trailing.emplace_back(1, chunk[--e]);
    if (e > b) split_clitic(chunk.substr(b, e - b), out);
    out.insert(out.end(), trailing.rbegin(), trailing.rend());
  }
  return out;
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) len = 1;
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// BPE

BpeModel::BpeModel(std::vector<std::string> alphabet, std::vector<MergeRule> merges)
    : alphabet_(std::move(alphabet)), merges_(std::move(merges)) {
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());
  for (std::size_t i = 0; i < merges_.size(); ++i) rank_.emplace(merges_[i], static_cast<int>(i));
}

bool BpeModel::in_alphabet(std::string_view ch) const {
  return std::binary_search(alphabet_.begin(), alphabet_.end(), ch,
                            [](auto a, auto b) { return std::string_view(a) < std::string_view(b); });
}

std::vector<std::string> BpeModel::segment_word(std::string_view word) const {
  std::vector<std::string> symbols = utf8_chars(word);
  if (symbols.empty()) return symbols;
  symbols.back() += kEndOfWord;
  for (;;) {
    int best_rank = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = rank_.find(MergeRule{symbols[i], symbols[i + 1]});
      if (it != rank_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    const auto& rule = merges_[static_cast<std::size_t>(best_rank)];
    std::vector<std::string> next;
    next.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (i + 1 < symbols.size() && symbols[i] == rule.first && symbols[i + 1] == rule.second) {
        next.push_back(symbols[i] + symbols[i + 1]);
        ++i;
      } else {
        next.push_back(std::move(symbols[i]));
      }
    }
    symbols = std::move(next);
  }
  return symbols;
}

std::vector<std::string> BpeModel::segment(std::string_view sentence) const {
  std::vector<std::string> out;
  for (const auto& word : pretokenize(sentence)) {
    auto pieces = segment_word(word);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

void BpeModel::save(std::ostream& out) const {
  out << kBpeHeader << '\n' << "#alphabet";
  for (const auto& ch : alphabet_) out << ' ' << ch;
  out << '\n';
  for (const auto& [a, b] : merges_) out << a << ' ' << b << '\n';
}

BpeModel BpeModel::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kBpeHeader) throw DataError("bpe model: missing header");
  if (!std::getline(in, line) || line.rfind("#alphabet", 0) != 0) throw DataError("bpe model: missing alphabet line");
  std::vector<std::string> alphabet;
  {
    std::istringstream ls(line.substr(9));
    std::string ch;
    while (ls >> ch) alphabet.push_back(ch);
  }
  std::vector<MergeRule> merges;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    MergeRule r;
    std::string extra;
    if (!(ls >> r.first >> r.second) || (ls >> extra))
      throw DataError("bpe model: malformed merge rule on line " + std::to_string(lineno));
    merges.push_back(std::move(r));
  }
  return BpeModel(std::move(alphabet), std::move(merges));
}

BpeModel train_bpe(const std::vector<std::vector<std::string>>& corpus, int num_merges) {
  if (num_merges < 0) throw std::invalid_argument("train_bpe: negative merge count");
  std::map<std::string, long> word_freq;
  for (const auto& seq : corpus)
    for (const auto& w : seq)
      if (!w.empty()) ++word_freq[w];
  if (word_freq.empty()) throw DataError("train_bpe: empty corpus");

  std::vector<std::string> alphabet;
  std::vector<std::pair<std::vector<std::string>, long>> words;
  for (const auto& [w, f] : word_freq) {
    auto chars = utf8_chars(w);
    alphabet.insert(alphabet.end(), chars.begin(), chars.end());
    chars.back() += kEndOfWord;
    words.emplace_back(std::move(chars), f);
  }

  std::vector<MergeRule> merges;
  for (int m = 0; m < num_merges; ++m) {
    std::map<MergeRule, long> counts;
    for (const auto& [sym, f] : words)
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) counts[{sym[i], sym[i + 1]}] += f;
    if (counts.empty()) break;
    // std::map iterates pairs in lexicographic order, so the first maximum wins ties.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;
    const MergeRule rule = best->first;
    for (auto& [sym, f] : words) {
      std::vector<std::string> next;
      next.reserve(sym.size());
      for (std::size_t i = 0; i < sym.size(); ++i) {
        if (i + 1 < sym.size() && sym[i] == rule.first && sym[i + 1] == rule.second) {
          next.push_back(sym[i] + sym[i + 1]);
          ++i;
        } else {
          next.push_back(std::move(sym[i]));
        }
      }
      sym = std::move(next);
    }
    merges.push_back(rule);
  }
  return BpeModel(std::move(alphabet), std::move(merges));
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocab::Vocab() {
  for (const char* r : {"<pad>", "<unk>", "<sos>", "<eos>"}) add(r);
}

void Vocab::add(std::string piece) {
  if (ids_.count(piece)) throw DataError("vocab: duplicate token '" + piece + "'");
  ids_.emplace(piece, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(piece));
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& piece_sequences, std::size_t max_size) {
  if (max_size < kNumReserved) throw std::invalid_argument("vocab: max size below reserved count");
  Vocab v;
  std::map<std::string, long> freq;
  for (const auto& seq : piece_sequences)
    for (const auto& p : seq) ++freq[p];
  for (const char* r : {"<pad>", "<unk>", "<sos>", "<eos>"}) freq.erase(r);
  std::vector<std::pair<std::string, long>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [piece, f] : ranked) {
    if (v.size() >= max_size) break;
    v.add(std::move(piece));
  }
  return v;
}

int Vocab::lookup(std::string_view piece) const {
  auto it = ids_.find(piece);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view piece) const { return ids_.find(piece) != ids_.end(); }

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocab::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(std::istream& in) {
  Vocab v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (lineno < kNumReserved) {
      if (line != v.tokens_[lineno]) throw DataError("vocab: reserved token mismatch on line " + std::to_string(lineno + 1));
    } else {
      v.add(line);
    }
    ++lineno;
  }
  if (lineno < kNumReserved) throw DataError("vocab: file truncated");
  return v;
}

ExtendedVocab::ExtendedVocab(const Vocab& base, const std::vector<std::string>& source_pieces) : base_(&base) {
  for (const auto& p : source_pieces) {
    int id = base.lookup(p);
    if (!base.contains(p)) {
      auto it = std::find(extension_.begin(), extension_.end(), p);
      if (it == extension_.end()) {
        extension_.push_back(p);
        it = extension_.end() - 1;
      }
      id = static_cast<int>(base.size() + static_cast<std::size_t>(it - extension_.begin()));
    }
    source_ids_.push_back(id);
  }
}

int ExtendedVocab::lookup(std::string_view piece) const {
  if (base_->contains(piece)) return base_->lookup(piece);
  auto it = std::find(extension_.begin(), extension_.end(), piece);
  if (it == extension_.end()) return Vocab::kUnk;
  return static_cast<int>(base_->size() + static_cast<std::size_t>(it - extension_.begin()));
}

const std::string& ExtendedVocab::token(int id) const {
  if (id >= 0 && static_cast<std::size_t>(id) >= base_->size()) {
    auto k = static_cast<std::size_t>(id) - base_->size();
    if (k >= extension_.size()) throw std::out_of_range("extended vocab: id " + std::to_string(id) + " out of range");
    return extension_[k];
  }
  return base_->token(id);
}

ExtendedVocab extend_for_copy(const Vocab& vocab, const std::vector<std::string>& source_pieces) {
  return ExtendedVocab(vocab, source_pieces);
}

// ---------------------------------------------------------------------------

std::vector<int> encode(const BpeModel& model, const Vocab& vocab, std::string_view sentence) {
  std::vector<int> ids;
  for (const auto& p : model.segment(sentence)) ids.push_back(vocab.lookup(p));
  return ids;
}

std::string join_pieces(const std::vector<std::string>& pieces) {
  std::string out;
  bool in_word = false;
  auto boundary = [&] {
    if (!out.empty()) out += ' ';
  };
  for (const auto& p : pieces) {
    if (p == kUnkText || p == "<unk>") {
      boundary();
      out += kUnkText;
      in_word = false;
      continue;
    }
    if (!in_word) boundary();
    if (ends_with_marker(p)) {
      out.append(p, 0, p.size() - kEndOfWord.size());
      in_word = false;
    } else {
      out += p;
      in_word = true;
    }
  }
  return out;
}

std::string decode(const BpeModel& /*model*/, const Vocab& vocab, const std::vector<int>& ids) {
  std::vector<std::string> pieces;
  for (int id : ids) {
    const std::string& t = vocab.token(id);
    if (id == Vocab::kPad || id == Vocab::kSos || id == Vocab::kEos) continue;
    pieces.push_back(t);
  }
  return join_pieces(pieces);
}

std::vector<int> word_starts(const std::vector<std::string>& pieces) {
  std::vector<int> starts;
  bool at_start = true;
  for (const auto& p : pieces) {
    starts.push_back(at_start ? 1 : 0);
    at_start = ends_with_marker(p);
  }
  return starts;
}

}  // namespace sgcp
