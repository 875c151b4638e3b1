#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgcp/autodiff.hpp"
#include "sgcp/config.hpp"
#include "sgcp/model.hpp"
#include "sgcp/syntax_tree.hpp"
#include "sgcp/text_pipeline.hpp"

namespace sgcp {

class Rng;

struct TrainConfig {
  double lr = 7e-5;
  double tf_ratio = 0.9;
  std::size_t max_len = 60;
  std::size_t batch = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t hidden = 128;
  std::size_t embed = 300;
  std::size_t vocab_cap = 24000;
  int merges = 2000;
  std::size_t max_steps = 0;  // 0: no limit
  std::size_t valid_n = 0;    // pairs held out from the end of the corpus
  std::size_t ckpt_every = 0; // 0: only best/last
  int min_height = 3;

  /// Reads the documented keys; unknown keys are ignored.
  static TrainConfig from(const KeyValueConfig& kv);
  void validate() const;
};

/// Everything about a (source, paraphrase) pair that does not depend on the
/// pruning height.
struct PreparedPair {
  std::vector<int> source;      // base ids, OOV -> UNK
  std::vector<int> source_ext;  // copy-extended ids
  std::vector<std::string> extension;
  std::vector<int> target;      // copy-extended ids (UNK when not copyable)
  std::vector<int> piece_word;  // target piece -> word index
  ConstituencyTree tree;        // paraphrase tree with terminals
  SyntaxSkeleton skeleton;
  int max_height = 1;

  std::size_t ext_size(std::size_t vocab_size) const { return vocab_size + extension.size(); }
};

/// Returns nullopt and sets `reason` when the tree terminals differ from the
/// pretokenized paraphrase or a side exceeds `max_len` pieces.
std::optional<PreparedPair> prepare_pair(const std::string& source, const std::string& paraphrase,
                                         const ConstituencyTree& paraphrase_tree, const BpeModel& bpe,
                                         const Vocab& vocab, std::size_t max_len, std::string* reason = nullptr);

struct TextResources {
  BpeModel bpe;
  Vocab vocab;
  LabelVocab labels;
};

/// BPE and vocabulary over both sides of every pair; labels over every tree.
TextResources build_resources(const std::vector<std::pair<std::string, std::string>>& pairs,
                              const std::vector<ConstituencyTree>& trees, int merges, std::size_t vocab_cap);

/// Training example at one pruning height. The paraphrase's own tree is the
/// exemplar.
struct AlignedExample {
  const PreparedPair* pair = nullptr;
  SyntaxSkeleton exemplar;  // pruned skeleton
  std::vector<int> bits;    // signalling bit per target piece
  int height = 1;
};

AlignedExample align_at_height(const PreparedPair& pair, int height);

struct LossTerms {
  Var total;             // (token NLL + gate BCE) / steps
  double token_nll = 0;  // per-step average
  double gate_bce = 0;   // per-step average
  std::size_t steps = 0; // target length + 1 (EOS)
  std::size_t pops = 0;  // queue elements consumed, including the first
  std::vector<double> gate_probs;
  std::vector<int> gate_targets;
};

/// Teacher-forced loss of one example. The gate is always teacher-forced;
/// token inputs are gold with probability `tf_ratio`, else the previous
/// argmax (drawn from `rng`, which may be null when tf_ratio == 1).
LossTerms example_loss(Tape& tape, Model& model, const AlignedExample& ex, double tf_ratio, Rng* rng);

/// Mean of example losses on one tape.
Var batch_loss(Tape& tape, Model& model, std::span<const AlignedExample> batch, double tf_ratio, Rng* rng);

class Adam {
 public:
  Adam(ParameterStore& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

struct StepLog {
  std::size_t step = 0;
  double loss = 0, token_nll = 0, gate_bce = 0;
};

struct TrainResult {
  std::vector<StepLog> log;
  std::vector<double> epoch_valid_loss;
  double best_loss = 0;
  std::size_t steps = 0;
};

/// Teacher-forced loss averaged over pairs at their full height.
double evaluate_loss(Model& model, const std::vector<PreparedPair>& pairs);

/// Trains in place. With a non-empty `out_dir`, writes loss.tsv, best.ckpt,
/// last.ckpt and step-N.ckpt every `ckpt_every` steps. Best is chosen by
/// validation loss, or training loss when `valid` is empty.
TrainResult train(Model& model, const std::vector<PreparedPair>& data, const std::vector<PreparedPair>& valid,
                  const TrainConfig& config, Rng& rng, const std::string& out_dir = "");

}  // namespace sgcp
