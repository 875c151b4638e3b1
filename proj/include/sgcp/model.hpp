#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sgcp/autodiff.hpp"
#include "sgcp/syntax_tree.hpp"

namespace sgcp {

class Rng;

/// Constituent label vocabulary. Index 0 is reserved for unseen labels.
class LabelVocab {
 public:
  static constexpr int kUnkTag = 0;
  static constexpr const char* kUnkTagName = "<UNK-TAG>";

  LabelVocab();
  /// Every label of every skeleton, sorted.
  static LabelVocab build(const std::vector<SyntaxSkeleton>& skeletons);
  explicit LabelVocab(const std::vector<std::string>& labels);

  int lookup(const std::string& label) const;
  const std::string& label(int id) const { return labels_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

  void save(std::ostream& out) const;
  static LabelVocab load(std::istream& in);

 private:
  std::vector<std::string> labels_;
  std::map<std::string, int> ids_;
};

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed = 300;
  std::size_t hidden = 128;
  std::size_t layers = 3;

  void save(std::ostream& out, const LabelVocab& labels) const;
  /// Reads the key=value manifest written by `save`.
  static ModelConfig load(std::istream& in);
};

/// Column vectors produced by the semantic encoder for one source sentence.
struct SemanticEncoding {
  std::vector<Var> states;  // h^X_i, 2*hidden each (forward on top of backward)
  Var matrix;               // 2*hidden x T, the states side by side
  Var keys;                 // W_h * matrix, precomputed for attention
  Var init_state;           // decoder s_0
};

struct SyntaxEncoding {
  std::vector<Var> nodes;  // one per skeleton node, in node order
  LeafQueue leaves;        // node ids of the leaves, left to right
  std::vector<Var> queue;  // representations of `leaves`
};

struct Attention {
  Var weights;  // T x 1
  Var context;  // 2*hidden x 1
};

/// Syntactic part of the decoder state. The cursor is 1-based into the
/// leaf queue; the first element is popped before the first step.
struct QueueCursor {
  std::size_t cursor = 1;
  bool exhausted = false;
};

/// Moves to the next queue element when p >= 0.5. At the last element the
/// cursor stays and `exhausted` is set.
QueueCursor advance_syntax(QueueCursor state, double p, std::size_t queue_size);

struct StepOutput {
  Var dist;       // extended-vocabulary distribution, size x 1
  Var p_gen;      // 1x1
  Var attention;  // T x 1
  Var p_bop;      // 1x1
  Var next_state; // s_{t+1}
};

class Model {
 public:
  Model(ModelConfig config, LabelVocab labels);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  const LabelVocab& labels() const { return labels_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// Uniform(-scale, scale) for every weight; biases start at zero.
  void init(Rng& rng, double scale = 0.1);

  /// `ids` are base-vocabulary ids (copy-extended ids must be mapped to UNK).
  SemanticEncoding encode_semantic(Tape& tape, std::span<const int> ids);
  SyntaxEncoding encode_syntax(Tape& tape, const SyntaxSkeleton& pruned);
  Attention attend(Tape& tape, const SemanticEncoding& enc, Var state);
  Var gate(Tape& tape, Var features);

  /// One decoder step: attention with `state`, then the bop gate, the
  /// pointer-generator distribution over `ext_size` ids, and the GRU update on
  /// [c; h^Y; e(z')]. `prev_token` may be an extended id; those embed as UNK.
  StepOutput decode_step(Tape& tape, const SemanticEncoding& enc, Var state, Var syntax, int prev_token,
                         std::span<const int> source_ext_ids, std::size_t ext_size);

  /// Token embedding of `id`, UNK for ids outside the base vocabulary.
  Var embed_token(Tape& tape, int id);

 private:
  Var gru_cell(Tape& tape, const std::string& prefix, Var x, Var h);
  void add_gru(const std::string& prefix, std::size_t input, std::size_t hidden);
  Var p(Tape& tape, const std::string& name) { return tape.param(params_.get(name)); }

  ModelConfig config_;
  LabelVocab labels_;
  ParameterStore params_;
};

}  // namespace sgcp
