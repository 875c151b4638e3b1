#include "sgcp/model.hpp"

#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "sgcp/error.hpp"
#include "sgcp/rng.hpp"
#include "sgcp/text_pipeline.hpp"

namespace sgcp {

LabelVocab::LabelVocab() : LabelVocab(std::vector<std::string>{}) {}

LabelVocab::LabelVocab(const std::vector<std::string>& labels) {
  labels_.push_back(kUnkTagName);
  ids_.emplace(kUnkTagName, kUnkTag);
  for (const auto& l : labels) {
    if (ids_.count(l)) continue;
    ids_.emplace(l, static_cast<int>(labels_.size()));
    labels_.push_back(l);
  }
}

LabelVocab LabelVocab::build(const std::vector<SyntaxSkeleton>& skeletons) {
  std::set<std::string> all;
  for (const auto& s : skeletons)
    for (const auto& n : s.tree().nodes()) all.insert(n.label);
  return LabelVocab(std::vector<std::string>(all.begin(), all.end()));
}

int LabelVocab::lookup(const std::string& label) const {
  auto it = ids_.find(label);
  return it == ids_.end() ? kUnkTag : it->second;
}

void LabelVocab::save(std::ostream& out) const {
  for (std::size_t i = 1; i < labels_.size(); ++i) out << labels_[i] << '\n';
}

LabelVocab LabelVocab::load(std::istream& in) {
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) labels.push_back(line);
  return LabelVocab(labels);
}

void ModelConfig::save(std::ostream& out, const LabelVocab& labels) const {
  out << "format=sgcp-model-1\n"
      << "vocab_size=" << vocab_size << '\n'
      << "embed=" << embed << '\n'
      << "hidden=" << hidden << '\n'
      << "layers=" << layers << '\n'
      << "num_labels=" << labels.size() << '\n'
      << "decoder_gru_input=context,syntax,token\n"
      << "labels=";
  for (std::size_t i = 0; i < labels.size(); ++i) out << (i ? " " : "") << labels.label(static_cast<int>(i));
  out << '\n';
}

ModelConfig ModelConfig::load(std::istream& in) {
  ModelConfig c;
  std::string line;
  bool have_vocab = false;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    auto num = [&] {
      try {
        return static_cast<std::size_t>(std::stoull(value));
      } catch (const std::exception&) {
        throw DataError("manifest: bad value for " + key + ": '" + value + "'");
      }
    };
    if (key == "vocab_size") {
      c.vocab_size = num();
      have_vocab = true;
    } else if (key == "embed") {
      c.embed = num();
    } else if (key == "hidden") {
      c.hidden = num();
    } else if (key == "layers") {
      c.layers = num();
    }
  }
  if (!have_vocab) throw DataError("manifest: missing vocab_size");
  return c;
}

QueueCursor advance_syntax(QueueCursor state, double p, std::size_t queue_size) {
  if (p < 0.5) return state;
  if (state.cursor < queue_size) {
    ++state.cursor;
  } else {
    state.exhausted = true;
  }
  return state;
}

// ---------------------------------------------------------------------------

void Model::add_gru(const std::string& prefix, std::size_t input, std::size_t hidden) {
  params_.add(prefix + ".Wx", 3 * hidden, input);
  params_.add(prefix + ".Wh", 3 * hidden, hidden);
  params_.add(prefix + ".bx", 3 * hidden, 1);
  params_.add(prefix + ".bh", 3 * hidden, 1);
}

Model::Model(ModelConfig config, LabelVocab labels) : config_(config), labels_(std::move(labels)) {
  const std::size_t V = config_.vocab_size, E = config_.embed, H = config_.hidden;
  if (V <= static_cast<std::size_t>(Vocab::kEos) || E == 0 || H == 0 || config_.layers == 0)
    throw std::invalid_argument("model: vocab_size, embed, hidden and layers must be positive");
  const std::size_t feat = 2 * H + H + H + E;

  params_.add("emb.token", V, E);
  params_.add("emb.label", labels_.size(), H);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::size_t in = l == 0 ? E : 2 * H;
    add_gru("enc" + std::to_string(l) + ".fwd", in, H);
    add_gru("enc" + std::to_string(l) + ".bwd", in, H);
  }
  params_.add("init.W", H, 2 * H);
  params_.add("init.b", H, 1);

  params_.add("syn.Wpa", H, H);
  params_.add("syn.Wv", H, H);
  params_.add("syn.bv", H, 1);
  params_.add("syn.root", H, 1);

  params_.add("attn.v", 1, H);
  params_.add("attn.Wh", H, 2 * H);
  params_.add("attn.Ws", H, H);
  params_.add("attn.b", H, 1);

  params_.add("bop.W", 1, feat);
  params_.add("bop.b", 1, 1);

  params_.add("out.W", V, feat);
  params_.add("out.b", V, 1);

  params_.add("gen.wc", 1, 2 * H);
  params_.add("gen.ws", 1, H);
  params_.add("gen.wx", 1, E);
  params_.add("gen.b", 1, 1);

  add_gru("dec", 2 * H + H + E, H);
}

void Model::init(Rng& rng, double scale) {
  for (Parameter* p : params_.all()) {
    const bool bias = p->value.cols() == 1 && p->name != "syn.root";
    for (double& v : p->value.data()) v = bias ? 0.0 : rng.uniform(-scale, scale);
  }
}

Var Model::embed_token(Tape& tape, int id) {
  if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) id = Vocab::kUnk;
  return lookup(tape, params_.get("emb.token"), static_cast<std::size_t>(id));
}

// r, z, n gates stacked in that order.
Var Model::gru_cell(Tape& tape, const std::string& prefix, Var x, Var h) {
  const std::size_t H = h.value().rows();
  Var gx = add(matmul(p(tape, prefix + ".Wx"), x), p(tape, prefix + ".bx"));
  Var gh = add(matmul(p(tape, prefix + ".Wh"), h), p(tape, prefix + ".bh"));
  Var r = sigmoid(add(slice_rows(gx, 0, H), slice_rows(gh, 0, H)));
  Var z = sigmoid(add(slice_rows(gx, H, H), slice_rows(gh, H, H)));
  Var n = tanh(add(slice_rows(gx, 2 * H, H), mul(r, slice_rows(gh, 2 * H, H))));
  return add(mul(one_minus(z), n), mul(z, h));
}

SemanticEncoding Model::encode_semantic(Tape& tape, std::span<const int> ids) {
  if (ids.empty()) throw DataError("encode_semantic: empty source");
  const std::size_t T = ids.size(), H = config_.hidden;
  std::vector<Var> inputs;
  for (int id : ids) inputs.push_back(embed_token(tape, id));

  Var zero = tape.constant(Tensor(H, 1));
  Var fwd_final, bwd_final;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string base = "enc" + std::to_string(l);
    std::vector<Var> fwd(T), bwd(T);
    Var h = zero;
    for (std::size_t t = 0; t < T; ++t) fwd[t] = h = gru_cell(tape, base + ".fwd", inputs[t], h);
    h = zero;
    for (std::size_t t = T; t-- > 0;) bwd[t] = h = gru_cell(tape, base + ".bwd", inputs[t], h);
    fwd_final = fwd[T - 1];
    bwd_final = bwd[0];
    for (std::size_t t = 0; t < T; ++t) {
      Var parts[] = {fwd[t], bwd[t]};
      inputs[t] = concat(parts);
    }
  }

  SemanticEncoding enc;
  enc.states = inputs;
  enc.matrix = hconcat(enc.states);
  enc.keys = matmul(p(tape, "attn.Wh"), enc.matrix);
  Var finals[] = {fwd_final, bwd_final};
  enc.init_state = tanh(add(matmul(p(tape, "init.W"), concat(finals)), p(tape, "init.b")));
  return enc;
}

SyntaxEncoding Model::encode_syntax(Tape& tape, const SyntaxSkeleton& pruned) {
  const ConstituencyTree& tree = pruned.tree();
  if (tree.empty()) throw DataError("encode_syntax: empty tree");
  Var Wpa = p(tape, "syn.Wpa"), Wv = p(tape, "syn.Wv"), bv = p(tape, "syn.bv"), root = p(tape, "syn.root");
  Parameter& labels = params_.get("emb.label");
  SyntaxEncoding out;
  out.nodes.resize(tree.size());
  // preorder storage: a parent always precedes its children
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const TreeNode& node = tree.node(static_cast<NodeId>(i));
    Var parent = node.parent == kNoNode ? root : out.nodes[static_cast<std::size_t>(node.parent)];
    Var label = lookup(tape, labels, static_cast<std::size_t>(labels_.lookup(node.label)));
    out.nodes[i] = gelu(add(add(matmul(Wpa, parent), matmul(Wv, label)), bv));
  }
  out.leaves = tree.leaves();
  for (NodeId id : out.leaves) out.queue.push_back(out.nodes[static_cast<std::size_t>(id)]);
  return out;
}

Attention Model::attend(Tape& tape, const SemanticEncoding& enc, Var state) {
  Var query = add(matmul(p(tape, "attn.Ws"), state), p(tape, "attn.b"));
  Var scores = matmul(p(tape, "attn.v"), tanh(add_column(enc.keys, query)));  // 1 x T
  Var alpha = softmax(scores);
  Attention a;
  a.weights = transpose(alpha);
  a.context = matmul(enc.matrix, a.weights);
  return a;
}

Var Model::gate(Tape& tape, Var features) {
  return sigmoid(add(matmul(p(tape, "bop.W"), features), p(tape, "bop.b")));
}

StepOutput Model::decode_step(Tape& tape, const SemanticEncoding& enc, Var state, Var syntax, int prev_token,
                              std::span<const int> source_ext_ids, std::size_t ext_size) {
  const std::size_t V = config_.vocab_size;
  if (ext_size < V) throw std::invalid_argument("decode_step: extended size below the vocabulary size");
  if (source_ext_ids.size() != enc.states.size())
    throw std::invalid_argument("decode_step: source ids do not match the encoded length");

  StepOutput out;
  Attention att = attend(tape, enc, state);
  Var e = embed_token(tape, prev_token);
  Var feat_parts[] = {att.context, syntax, state, e};
  Var features = concat(feat_parts);

  out.attention = att.weights;
  out.p_bop = gate(tape, features);

  Var vocab = softmax(add(matmul(p(tape, "out.W"), features), p(tape, "out.b")));
  Var gen_terms[] = {matmul(p(tape, "gen.wc"), att.context), matmul(p(tape, "gen.ws"), state),
                     matmul(p(tape, "gen.wx"), e), p(tape, "gen.b")};
  out.p_gen = sigmoid(add_n(gen_terms));

  Var widened = vocab;
  if (ext_size > V) {
    Var parts[] = {vocab, tape.constant(Tensor(ext_size - V, 1))};
    widened = concat(parts);
  }
  Var copied = scatter_add(att.weights, source_ext_ids, ext_size);
  out.dist = add(scalar_mul(out.p_gen, widened), scalar_mul(one_minus(out.p_gen), copied));

  Var gru_parts[] = {att.context, syntax, e};
  out.next_state = gru_cell(tape, "dec", concat(gru_parts), state);
  return out;
}

}  // namespace sgcp
