#include "sgcp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sgcp/error.hpp"
#include "sgcp/metrics.hpp"

namespace sgcp {

double Hypothesis::score() const {
  const std::size_t steps = tokens.size() + (finished ? 1 : 0);
  return steps == 0 ? 0.0 : log_prob / static_cast<double>(steps);
}

EncodedSource encode_source(const BpeModel& bpe, const Vocab& vocab, const std::string& sentence) {
  EncodedSource s;
  s.pieces = bpe.segment(sentence);
  if (s.pieces.empty()) throw DataError("empty source sentence");
  const ExtendedVocab ext(vocab, s.pieces);
  for (const auto& p : s.pieces) s.base_ids.push_back(vocab.lookup(p));
  s.ext_ids = ext.source_ids();
  s.extension = ext.extension();
  return s;
}

namespace {

struct Live {
  Hypothesis hyp;
  Var state;
  int prev = Vocab::kSos;
};

struct Candidate {
  std::size_t parent;
  int token;
  double log_prob;
  QueueCursor next;
  Var state;
};

}  // namespace

std::vector<Hypothesis> beam_decode(Model& model, const EncodedSource& source, const SyntaxSkeleton& pruned,
                                    const BeamOptions& options) {
  if (options.width == 0) throw std::invalid_argument("beam width must be at least 1");
  if (options.max_len == 0) throw std::invalid_argument("max_len must be at least 1");
  if (source.base_ids.empty()) throw DataError("empty source sentence");

  Tape tape(false);
  const SemanticEncoding enc = model.encode_semantic(tape, source.base_ids);
  const SyntaxEncoding syn = model.encode_syntax(tape, pruned);
  const std::size_t ext_size = model.config().vocab_size + source.extension.size();

  std::vector<Live> live(1);
  live[0].state = enc.init_state;
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step < options.max_len && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t j = 0; j < live.size(); ++j) {
      const Live& l = live[j];
      const StepOutput out = model.decode_step(tape, enc, l.state, syn.queue[l.hyp.syntax.cursor - 1], l.prev,
                                               source.ext_ids, ext_size);
      const Tensor& dist = out.dist.value();
      const QueueCursor next = advance_syntax(l.hyp.syntax, out.p_bop.scalar(), syn.queue.size());
      std::vector<int> ids;
      for (std::size_t z = 0; z < dist.size(); ++z)
        if (z != Vocab::kPad && z != Vocab::kSos && dist[z] > 0.0) ids.push_back(static_cast<int>(z));
      const std::size_t k = std::min(options.width, ids.size());
      std::partial_sort(ids.begin(), ids.begin() + static_cast<long>(k), ids.end(), [&](int a, int b) {
        const double pa = dist[static_cast<std::size_t>(a)], pb = dist[static_cast<std::size_t>(b)];
        return pa != pb ? pa > pb : a < b;
      });
      for (std::size_t i = 0; i < k; ++i)
        cands.push_back({j, ids[i], l.hyp.log_prob + std::log(dist[static_cast<std::size_t>(ids[i])]), next,
                         out.next_state});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });
    const std::size_t room = options.width - finished.size();
    if (cands.size() > room) cands.resize(room);

    std::vector<Live> next_live;
    for (const Candidate& c : cands) {
      const Live& parent = live[c.parent];
      Hypothesis h = parent.hyp;
      h.log_prob = c.log_prob;
      h.cursor_history.push_back(parent.hyp.syntax.cursor);
      if (c.token == Vocab::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
        continue;
      }
      h.tokens.push_back(c.token);
      h.syntax = c.next;
      next_live.push_back({std::move(h), c.state, c.token});
    }
    live = std::move(next_live);
    if (finished.size() >= options.width) break;
  }

  std::vector<Hypothesis> out;
  if (!finished.empty()) {
    out = std::move(finished);
  } else {
    for (auto& l : live) out.push_back(std::move(l.hyp));
  }
  std::stable_sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) { return a.score() > b.score(); });
  return out;
}

std::string detokenize(const Vocab& vocab, const std::vector<std::string>& extension, const std::vector<int>& ids) {
  std::vector<std::string> pieces;
  for (int id : ids) {
    if (id == Vocab::kPad || id == Vocab::kSos || id == Vocab::kEos) continue;
    const auto u = static_cast<std::size_t>(id);
    pieces.push_back(u < vocab.size() ? vocab.token(id) : extension.at(u - vocab.size()));
  }
  return join_pieces(pieces);
}

std::size_t select_by_rouge(const std::string& source, const std::vector<Generation>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("select_by_rouge: no candidates");
  const Tokens src = metric_tokens(source);
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = rouge_n(metric_tokens(candidates[i].text), src, 1);
    if (s > best_score || (s == best_score && candidates[i].height < candidates[best].height)) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::vector<int> candidate_heights(int max_height) {
  std::vector<int> hs;
  for (int h = max_height; h >= max_height - 4; --h)
    if (h >= 1 && std::find(hs.begin(), hs.end(), h) == hs.end()) hs.push_back(h);
  return hs;
}

Generation Generator::generate_f(const std::string& source, const ConstituencyTree& exemplar, std::optional<int> height) {
  const SyntaxSkeleton skeleton = exemplar.has_tokens() ? strip_terminals(exemplar) : SyntaxSkeleton(exemplar);
  const int h = height.value_or(sgcp::height(skeleton));
  if (h < 1) throw std::invalid_argument("pruning height must be at least 1");
  const PrunedTree pruned = prune(skeleton, h);
  const EncodedSource src = encode_source(bpe_, vocab_, source);
  const auto ranked = beam_decode(model_, src, pruned.skeleton, options_);
  return {ranked.empty() ? std::string() : detokenize(vocab_, src.extension, ranked.front().tokens),
          std::min(h, sgcp::height(skeleton))};
}

Generation Generator::generate_r(const std::string& source, const ConstituencyTree& exemplar) {
  const SyntaxSkeleton skeleton = exemplar.has_tokens() ? strip_terminals(exemplar) : SyntaxSkeleton(exemplar);
  std::vector<Generation> cands;
  for (int h : candidate_heights(sgcp::height(skeleton))) cands.push_back(generate_f(source, skeleton.tree(), h));
  return cands[select_by_rouge(source, cands)];
}

}  // namespace sgcp
