#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "sgcp/error.hpp"
#include "sgcp/rng.hpp"
#include "sgcp/training.hpp"
#include "sgcp/tsv.hpp"
#include "support/reference_model.hpp"
#include "support/toy_data.hpp"

using namespace sgcp;

namespace {

struct Setup {
  toy::Corpus corpus = toy::load();
  TextResources res;
  std::vector<PreparedPair> pairs;

  explicit Setup(int merges = 400, std::size_t vocab_cap = 1000) {
    corpus.pairs.emplace_back(toy::kWorkedSource, toy::kWorkedSentence);
    corpus.source_trees.push_back(toy::worked_tree());
    corpus.target_trees.push_back(toy::worked_tree());
    res = build_resources(corpus.pairs, corpus.all_trees(), merges, vocab_cap);
    for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
      auto p = prepare_pair(corpus.pairs[i].first, corpus.pairs[i].second, corpus.target_trees[i], res.bpe, res.vocab, 60);
      REQUIRE(p);
      pairs.push_back(*p);
    }
  }

  const PreparedPair& worked_tree() const { return pairs.back(); }
};

ModelConfig config_for(const Setup& s, std::size_t hidden, std::size_t embed) {
  ModelConfig c;
  c.vocab_size = s.res.vocab.size();
  c.hidden = hidden;
  c.embed = embed;
  return c;
}

void randomize(Model& m, std::uint64_t seed, double scale) {
  Rng rng(seed);
  m.init(rng, scale);
  for (Parameter* p : m.params().all())
    if (p->value.cols() == 1)
      for (double& v : p->value.data()) v = rng.uniform(-scale, scale);
}

}  // namespace

TEST_CASE("aligned examples") {
  Setup s;
  const PreparedPair& p = s.worked_tree();

  SUBCASE("whole-word pieces reproduce the signalling vector") {
    REQUIRE(p.target.size() == 9);
    CHECK(align_at_height(p, 3).bits == std::vector<int>{1, 1, 1, 0, 0, 0, 0, 0, 1});
    CHECK(align_at_height(p, 1).bits == std::vector<int>{1, 0, 0, 0, 0, 0, 0, 0, 0});
    // full height: one bit per word, queue = preterminals
    const AlignedExample full = align_at_height(p, p.max_height);
    CHECK(full.bits == std::vector<int>(9, 1));
    CHECK(full.exemplar.tree().leaves().size() == 9);
  }
  SUBCASE("subword pieces inherit the bit on their first piece only") {
    Setup chars(0);
    const PreparedPair& q = chars.worked_tree();
    const AlignedExample ex = align_at_height(q, 3);
    // "what" "is" "the" ... in characters
    std::vector<int> expected;
    const std::vector<int> a = {1, 1, 1, 0, 0, 0, 0, 0, 1};
    const auto words = pretokenize(toy::kWorkedSentence);
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto n = utf8_chars(words[w]).size();
      expected.push_back(a[w]);
      for (std::size_t k = 1; k < n; ++k) expected.push_back(0);
    }
    CHECK(ex.bits == expected);
  }
  SUBCASE("misaligned trees are skipped with a reason") {
    std::string why;
    auto bad = prepare_pair("a b", "what is it ?", toy::worked_tree(), s.res.bpe, s.res.vocab, 60, &why);
    CHECK_FALSE(bad);
    CHECK(why.find("terminals") != std::string::npos);
    auto longer = prepare_pair(toy::kWorkedSource, toy::kWorkedSentence, toy::worked_tree(), s.res.bpe, s.res.vocab, 5, &why);
    CHECK_FALSE(longer);
    CHECK(why.find("max_len") != std::string::npos);
  }
  SUBCASE("copyable target pieces use extended ids") {
    Setup small(400, 12);  // tiny vocabulary: most pieces are out of vocabulary
    const PreparedPair& q = small.worked_tree();
    CHECK_FALSE(q.extension.empty());
    // "language" appears in the source, so it is copyable
    const auto lang = small.res.bpe.segment_word("language");
    REQUIRE(lang.size() == 1);
    const ExtendedVocab ext(small.res.vocab, small.res.bpe.segment(toy::kWorkedSource));
    CHECK(q.target[4] == ext.lookup(lang[0]));
    CHECK(q.target[4] >= static_cast<int>(small.res.vocab.size()));
  }
}

TEST_CASE("loss matches a direct arithmetic evaluation") {
  Setup s(400, 20);
  Model m(config_for(s, 3, 4), s.res.labels);
  randomize(m, 7, 0.4);
  ref::Net net{m.params()};
  double batch = 0.0;
  std::vector<AlignedExample> exs = {align_at_height(s.worked_tree(), 3), align_at_height(s.pairs[0], 2)};
  for (const auto& ex : exs) {
    Tape t(false);
    const LossTerms terms = example_loss(t, m, ex, 1.0, nullptr);
    const double expected = net.example_loss(m, ex);
    CHECK(terms.total.scalar() == doctest::Approx(expected).epsilon(1e-11));
    CHECK(terms.total.scalar() > 0.0);
    CHECK(terms.token_nll + terms.gate_bce == doctest::Approx(terms.total.scalar()).epsilon(1e-12));
    batch += expected / 2;
  }
  Tape t(false);
  CHECK(batch_loss(t, m, exs, 1.0, nullptr).scalar() == doctest::Approx(batch).epsilon(1e-11));
}

TEST_CASE("gate term is binary cross-entropy and pops equal the signal sum") {
  Setup s;
  Model m(config_for(s, 4, 4), s.res.labels);
  randomize(m, 8, 0.3);
  for (int h : {1, 2, 3, 5}) {
    const AlignedExample ex = align_at_height(s.worked_tree(), h);
    Tape t(false);
    const LossTerms terms = example_loss(t, m, ex, 1.0, nullptr);
    int sum_a = 0;
    for (int b : ex.bits) sum_a += b;
    CHECK(terms.pops == static_cast<std::size_t>(sum_a));
    CHECK(terms.pops == ex.exemplar.tree().leaves().size());
    double bce = 0.0;
    REQUIRE(terms.gate_probs.size() == ex.bits.size());
    for (std::size_t k = 0; k < terms.gate_probs.size(); ++k) {
      const double p = terms.gate_probs[k];
      const int y = terms.gate_targets[k];
      CHECK(y == (k + 1 < ex.bits.size() ? ex.bits[k + 1] : 0));
      bce += -(y * std::log(p) + (1 - y) * std::log(1 - p));
    }
    CHECK(terms.gate_bce == doctest::Approx(bce / static_cast<double>(terms.steps)).epsilon(1e-12));
  }
}

TEST_CASE("full loss gradient on a two-example batch") {
  Setup s(400, 20);
  Model m(config_for(s, 4, 3), s.res.labels);
  randomize(m, 9, 0.5);
  std::vector<AlignedExample> exs = {align_at_height(s.worked_tree(), 3), align_at_height(s.pairs[1], 4)};
  GradCheckOptions opt;
  opt.samples_per_param = 6;
  const auto r = grad_check([&](Tape& t) { return batch_loss(t, m, exs, 1.0, nullptr); }, m.params(), opt);
  INFO("worst " << r.worst_param << "[" << r.worst_index << "] " << r.worst_analytic << " vs " << r.worst_numeric);
  CHECK(r.max_rel_error < 1e-5);
  CHECK(r.checked >= m.params().size());
}

TEST_CASE("adam") {
  ParameterStore ps;
  Parameter& x = ps.add("x", 2, 1);
  x.value = Tensor(2, 1, {1.0, -2.0});

  SUBCASE("zero gradient leaves parameters alone") {
    Adam adam(ps, 0.1);
    adam.step();
    CHECK(x.value == Tensor(2, 1, {1.0, -2.0}));
  }
  SUBCASE("first step moves by about lr against the gradient sign") {
    Adam adam(ps, 0.01);
    x.grad = Tensor(2, 1, {3.0, -0.5});
    adam.step();
    CHECK(x.value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(x.value[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  }
  SUBCASE("quadratic descent") {
    // f = 0.5 (3 x0^2 + x1^2); final point from oracles/adam_quadratic.py 0.01
    Adam adam(ps, 0.01);
    std::vector<double> f;
    for (int k = 0; k < 100; ++k) {
      x.grad = Tensor(2, 1, {3 * x.value[0], x.value[1]});
      f.push_back(0.5 * (3 * x.value[0] * x.value[0] + x.value[1] * x.value[1]));
      adam.step();
    }
    for (std::size_t k = 5; k < f.size(); ++k) CHECK(f[k] < f[k - 1]);
    CHECK(x.value[0] == doctest::Approx(0.2244460441519301).epsilon(1e-12));
    CHECK(x.value[1] == doctest::Approx(-1.0984483782104042).epsilon(1e-12));
  }
}

TEST_CASE("training is deterministic and logs every step") {
  Setup s(400, 200);
  std::vector<PreparedPair> data(s.pairs.begin(), s.pairs.begin() + 6);
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.embed = 4;
  cfg.batch = 3;
  cfg.epochs = 2;
  cfg.lr = 1e-2;
  cfg.tf_ratio = 0.5;
  const auto dir = std::filesystem::temp_directory_path() / "sgcp_train_test";
  std::filesystem::remove_all(dir);

  auto run = [&](const std::string& out) {
    Model m(config_for(s, 4, 4), s.res.labels);
    Rng rng(cfg.seed);
    m.init(rng);
    return train(m, data, {}, cfg, rng, out);
  };
  const TrainResult a = run((dir / "a").string());
  const TrainResult b = run((dir / "b").string());
  REQUIRE(a.log.size() == 4);
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
  CHECK(read_text_file((dir / "a" / "loss.tsv").string()) == read_text_file((dir / "b" / "loss.tsv").string()));
  CHECK(std::filesystem::exists(dir / "a" / "best.ckpt"));
  CHECK(std::filesystem::exists(dir / "a" / "last.ckpt"));
  const auto rows = read_tsv((dir / "a" / "loss.tsv").string(), 4);
  CHECK(rows.size() == 5);
  CHECK(rows[0] == TsvRow{"step", "loss", "token_nll", "gate_bce"});
  std::filesystem::remove_all(dir);
}

TEST_CASE("train config") {
  std::istringstream in("lr = 0.01\n# comment\nbatch=4\nhidden = 8\nunknown = x\n");
  const TrainConfig c = TrainConfig::from(KeyValueConfig::parse(in));
  CHECK(c.lr == 0.01);
  CHECK(c.batch == 4);
  CHECK(c.hidden == 8);
  CHECK(c.tf_ratio == 0.9);
  std::istringstream bad("tf_ratio = 2\n");
  CHECK_THROWS_AS(TrainConfig::from(KeyValueConfig::parse(bad)), UsageError);
  std::istringstream junk("lr 0.1\n");
  CHECK_THROWS_AS(KeyValueConfig::parse(junk), DataError);
}
