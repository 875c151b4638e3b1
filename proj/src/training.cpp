#include "sgcp/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "sgcp/checkpoint.hpp"
#include "sgcp/error.hpp"
#include "sgcp/rng.hpp"
#include "sgcp/tsv.hpp"

namespace sgcp {

namespace {

constexpr double kProbFloor = 1e-12;

std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

std::size_t argmax(const Tensor& t) {
  return static_cast<std::size_t>(std::max_element(t.data().begin(), t.data().end()) - t.data().begin());
}

}  // namespace

TrainConfig TrainConfig::from(const KeyValueConfig& kv) {
  TrainConfig c;
  auto size = [&](const char* key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw UsageError(std::string("config key ") + key + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.lr = kv.get_double("lr", c.lr);
  c.tf_ratio = kv.get_double("tf_ratio", c.tf_ratio);
  c.max_len = size("max_len", c.max_len);
  c.batch = size("batch", c.batch);
  c.epochs = size("epochs", c.epochs);
  c.seed = static_cast<std::uint64_t>(size("seed", c.seed));
  c.hidden = size("hidden", c.hidden);
  c.embed = size("embed", c.embed);
  c.vocab_cap = size("vocab_cap", c.vocab_cap);
  c.merges = static_cast<int>(size("merges", static_cast<std::size_t>(c.merges)));
  c.max_steps = size("max_steps", c.max_steps);
  c.valid_n = size("valid_n", c.valid_n);
  c.ckpt_every = size("ckpt_every", c.ckpt_every);
  c.min_height = static_cast<int>(size("min_height", static_cast<std::size_t>(c.min_height)));
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw UsageError("lr must be positive");
  if (!(tf_ratio >= 0.0 && tf_ratio <= 1.0)) throw UsageError("tf_ratio must lie in [0, 1]");
  if (batch == 0) throw UsageError("batch must be positive");
  if (hidden == 0 || embed == 0) throw UsageError("hidden and embed must be positive");
  if (max_len < 2) throw UsageError("max_len must be at least 2");
  if (min_height < 1) throw UsageError("min_height must be at least 1");
}

std::optional<PreparedPair> prepare_pair(const std::string& source, const std::string& paraphrase,
                                         const ConstituencyTree& paraphrase_tree, const BpeModel& bpe,
                                         const Vocab& vocab, std::size_t max_len, std::string* reason) {
  auto skip = [&](std::string why) -> std::optional<PreparedPair> {
    if (reason) *reason = std::move(why);
    return std::nullopt;
  };
  const auto words = pretokenize(paraphrase);
  if (words.empty()) return skip("empty paraphrase");
  if (!paraphrase_tree.has_tokens()) return skip("paraphrase tree has no terminals");
  const auto tree_words = pretokenize(join_words(paraphrase_tree.tokens()));
  if (tree_words != words) return skip("tree terminals do not match the paraphrase tokens");

  const auto source_pieces = bpe.segment(source);
  if (source_pieces.empty()) return skip("empty source");
  if (source_pieces.size() > max_len) return skip("source longer than max_len");

  PreparedPair p;
  const ExtendedVocab ext(vocab, source_pieces);
  for (const auto& piece : source_pieces) p.source.push_back(vocab.lookup(piece));
  p.source_ext = ext.source_ids();
  p.extension = ext.extension();
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (const auto& piece : bpe.segment_word(words[w])) {
      p.target.push_back(ext.lookup(piece));
      p.piece_word.push_back(static_cast<int>(w));
    }
  }
  if (p.target.size() + 1 > max_len) return skip("paraphrase longer than max_len");
  p.tree = paraphrase_tree;
  p.skeleton = strip_terminals(paraphrase_tree);
  p.max_height = height(p.skeleton);
  return p;
}

TextResources build_resources(const std::vector<std::pair<std::string, std::string>>& pairs,
                              const std::vector<ConstituencyTree>& trees, int merges, std::size_t vocab_cap) {
  std::vector<std::vector<std::string>> words;
  for (const auto& [a, b] : pairs) {
    words.push_back(pretokenize(a));
    words.push_back(pretokenize(b));
  }
  TextResources r;
  r.bpe = train_bpe(words, merges);
  std::vector<std::vector<std::string>> pieces;
  for (const auto& [a, b] : pairs) {
    pieces.push_back(r.bpe.segment(a));
    pieces.push_back(r.bpe.segment(b));
  }
  r.vocab = Vocab::build(pieces, vocab_cap);
  std::vector<SyntaxSkeleton> skeletons;
  for (const auto& t : trees) skeletons.push_back(strip_terminals(t));
  r.labels = LabelVocab::build(skeletons);
  return r;
}

AlignedExample align_at_height(const PreparedPair& pair, int h) {
  AlignedExample ex;
  ex.pair = &pair;
  ex.height = std::clamp(h, 1, pair.max_height);
  ex.exemplar = prune(pair.skeleton, ex.height).skeleton;
  const SignallingVector sv = leaf_spans(pair.tree, ex.height);
  ex.bits.resize(pair.target.size());
  for (std::size_t i = 0; i < pair.target.size(); ++i) {
    const int w = pair.piece_word[i];
    const bool first_piece = i == 0 || pair.piece_word[i - 1] != w;
    ex.bits[i] = first_piece ? sv.bits[static_cast<std::size_t>(w)] : 0;
  }
  return ex;
}

LossTerms example_loss(Tape& tape, Model& model, const AlignedExample& ex, double tf_ratio, Rng* rng) {
  if (ex.pair == nullptr) throw std::invalid_argument("example_loss: example has no pair");
  const PreparedPair& pair = *ex.pair;
  const std::size_t T = pair.target.size();
  const std::size_t ext_size = pair.ext_size(model.config().vocab_size);
  if (tf_ratio < 1.0 && rng == nullptr) throw std::invalid_argument("example_loss: tf_ratio < 1 needs an rng");
  if (ex.bits.size() != T || T == 0 || ex.bits[0] != 1)
    throw DataError("example_loss: signalling vector does not fit the target");

  SemanticEncoding enc = model.encode_semantic(tape, pair.source);
  SyntaxEncoding syn = model.encode_syntax(tape, ex.exemplar);

  LossTerms out;
  out.steps = T + 1;
  out.pops = 1;
  std::vector<Var> terms;
  Var state = enc.init_state;
  std::size_t cursor = 1;
  int prev = Vocab::kSos;
  double nll_sum = 0.0, bce_sum = 0.0;
  for (std::size_t k = 0; k <= T; ++k) {
    StepOutput step = model.decode_step(tape, enc, state, syn.queue[cursor - 1], prev, pair.source_ext, ext_size);
    const int gold = k < T ? pair.target[k] : Vocab::kEos;
    Var nll = scale(log(clamp(pick(step.dist, static_cast<std::size_t>(gold)), kProbFloor, 1.0)), -1.0);
    nll_sum += nll.scalar();
    terms.push_back(nll);
    if (k < T) {
      // p_t decides the syntax signal of step t+1; the last token keeps its leaf for EOS
      const int target = k + 1 < T ? ex.bits[k + 1] : 0;
      Var pc = clamp(step.p_bop, kProbFloor, 1.0 - kProbFloor);
      Var bce = scale(log(target ? pc : one_minus(pc)), -1.0);
      bce_sum += bce.scalar();
      terms.push_back(bce);
      out.gate_probs.push_back(step.p_bop.scalar());
      out.gate_targets.push_back(target);
      if (target) {
        if (cursor >= syn.queue.size()) throw DataError("example_loss: signalling vector overruns the leaf queue");
        ++cursor;
        ++out.pops;
      }
      const bool gold_input = tf_ratio >= 1.0 || rng->bernoulli(tf_ratio);
      prev = gold_input ? gold : static_cast<int>(argmax(step.dist.value()));
    }
    state = step.next_state;
  }
  if (cursor != syn.queue.size()) throw DataError("example_loss: signalling vector leaves queue elements unused");
  const double inv = 1.0 / static_cast<double>(out.steps);
  out.total = scale(add_n(terms), inv);
  out.token_nll = nll_sum * inv;
  out.gate_bce = bce_sum * inv;
  return out;
}

Var batch_loss(Tape& tape, Model& model, std::span<const AlignedExample> batch, double tf_ratio, Rng* rng) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  std::vector<Var> losses;
  for (const auto& ex : batch) losses.push_back(example_loss(tape, model, ex, tf_ratio, rng).total);
  return scale(add_n(losses), 1.0 / static_cast<double>(batch.size()));
}

// ---------------------------------------------------------------------------

Adam::Adam(ParameterStore& params, double lr, double beta1, double beta2, double eps)
    : params_(params.all()), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.grad.same_shape(p.value)) continue;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * g;
      v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------

double evaluate_loss(Model& model, const std::vector<PreparedPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_loss: no pairs");
  double total = 0.0;
  for (const auto& p : pairs) {
    Tape tape(false);
    total += example_loss(tape, model, align_at_height(p, p.max_height), 1.0, nullptr).total.scalar();
  }
  return total / static_cast<double>(pairs.size());
}

TrainResult train(Model& model, const std::vector<PreparedPair>& data, const std::vector<PreparedPair>& valid,
                  const TrainConfig& config, Rng& rng, const std::string& out_dir) {
  config.validate();
  if (data.empty()) throw DataError("train: no training examples");
  namespace fs = std::filesystem;
  if (!out_dir.empty()) fs::create_directories(out_dir);
  auto ckpt = [&](const std::string& name) {
    if (!out_dir.empty()) save_checkpoint((fs::path(out_dir) / name).string(), model.params());
  };

  TrainResult result;
  Adam adam(model.params(), config.lr);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  bool have_best = false;
  bool done = false;

  for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_examples = 0;
    for (std::size_t start = 0; start < order.size() && !done; start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      model.params().zero_grad();
      StepLog log;
      for (std::size_t j = start; j < end; ++j) {
        const PreparedPair& pair = data[order[j]];
        const int lo = std::min(config.min_height, pair.max_height);
        const int h = rng.between(lo, pair.max_height);
        const AlignedExample ex = align_at_height(pair, h);
        Tape tape;
        LossTerms terms = example_loss(tape, model, ex, config.tf_ratio, &rng);
        tape.backward(terms.total, weight);
        log.loss += weight * terms.total.scalar();
        log.token_nll += weight * terms.token_nll;
        log.gate_bce += weight * terms.gate_bce;
        epoch_loss += terms.total.scalar();
        ++epoch_examples;
      }
      adam.step();
      log.step = adam.steps();
      result.log.push_back(log);
      if (config.ckpt_every && log.step % config.ckpt_every == 0) ckpt("step-" + std::to_string(log.step) + ".ckpt");
      if (config.max_steps && log.step >= config.max_steps) done = true;
    }
    const double score = valid.empty() ? epoch_loss / static_cast<double>(epoch_examples) : evaluate_loss(model, valid);
    result.epoch_valid_loss.push_back(score);
    if (!have_best || score < result.best_loss) {
      have_best = true;
      result.best_loss = score;
      ckpt("best.ckpt");
    }
  }
  result.steps = adam.steps();
  ckpt("last.ckpt");

  if (!out_dir.empty()) {
    std::ostringstream s;
    s << "step\tloss\ttoken_nll\tgate_bce\n" << std::setprecision(9);
    for (const auto& l : result.log) s << l.step << '\t' << l.loss << '\t' << l.token_nll << '\t' << l.gate_bce << '\n';
    write_text_file((fs::path(out_dir) / "loss.tsv").string(), s.str());
  }
  return result;
}

}  // namespace sgcp
