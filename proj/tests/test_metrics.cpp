#include <cmath>
#include <functional>

#include "doctest.h"
#include "sgcp/error.hpp"
#include "sgcp/metrics.hpp"
#include "sgcp/rng.hpp"

using namespace sgcp;

namespace {

Tokens w(const std::string& s) { return metric_tokens(s); }

// Longest common subsequence by trying every subsequence of the shorter side.
std::size_t lcs_bruteforce(const Tokens& a, const Tokens& b) {
  const Tokens& s = a.size() <= b.size() ? a : b;
  const Tokens& l = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (unsigned mask = 0; mask < (1u << s.size()); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (mask >> i & 1u) sub.push_back(s[i]);
    std::size_t j = 0;
    for (std::size_t i = 0; i < l.size() && j < sub.size(); ++i)
      if (l[i] == sub[j]) ++j;
    if (j == sub.size()) best = std::max(best, sub.size());
  }
  return best;
}

// Recursive enumeration of all sign patterns.
double exact_p(const std::vector<double>& d) {
  const double n = static_cast<double>(d.size());
  double obs = 0.0;
  for (double x : d) obs += x;
  obs = std::abs(obs / n);
  long hits = 0, all = 0;
  std::function<void(std::size_t, double)> go = [&](std::size_t i, double s) {
    if (i == d.size()) {
      ++all;
      if (std::abs(s / n) >= obs - 1e-12) ++hits;
      return;
    }
    go(i + 1, s + d[i]);
    go(i + 1, s - d[i]);
  };
  go(0, 0.0);
  return static_cast<double>(hits) / static_cast<double>(all);
}

EvalTriple triple(const std::string& x, const std::string& tx, const std::string& y, const std::string& ty,
                  const std::string& z, const std::string& tz) {
  return {x, y, z, parse_bracketed(tx), parse_bracketed(ty), parse_bracketed(tz)};
}

}  // namespace

TEST_CASE("bleu") {
  CHECK(sentence_bleu(w("the cat sat on the mat"), w("the cat sat on the mat")) == 1.0);
  CHECK(sentence_bleu(w("a"), w("a")) == 1.0);
  CHECK(sentence_bleu({}, w("a b")) == 0.0);
  // frozen from oracles/bleu.py
  CHECK(sentence_bleu(w("the the the"), w("the cat sat")) == doctest::Approx(0.11856311014966876).epsilon(1e-12));
  CHECK(sentence_bleu(w("the cat sat on the mat"), w("the cat is on the mat")) ==
        doctest::Approx(0.25406637407730737).epsilon(1e-12));
  CHECK(sentence_bleu(w("a b c d e"), w("a b c d e f g h")) == doctest::Approx(0.5488116360940264).epsilon(1e-12));
  CHECK(sentence_bleu(w("how do i learn python quickly ?"), w("what is the best way to learn python ?")) ==
        doctest::Approx(0.05809334108283256).epsilon(1e-12));
  // hand computation: p1 = 1/3, p2 = 0.1/2, p3 = 0.1/1, no 4-grams
  CHECK(sentence_bleu(w("the the the"), w("the cat sat")) == doctest::Approx(std::cbrt(1.0 / 3 * 0.05 * 0.1)));
  // disjoint: only the smoothing floor remains
  CHECK(sentence_bleu(w("x y z w"), w("a b c d")) < 0.11);

  SUBCASE("corpus level pools counts") {
    std::vector<Tokens> c = {w("a b c d"), w("e f")}, r = {w("a b c d"), w("e g")};
    const double v = corpus_bleu(c, r);
    // p1 = 5/6, p2 = 3/4, p3 = 2/2, p4 = 1/1
    CHECK(v == doctest::Approx(std::pow(5.0 / 6 * 3.0 / 4, 0.25)).epsilon(1e-12));
    CHECK_THROWS_AS(corpus_bleu(c, {r[0]}), DataError);
  }
}

TEST_CASE("rouge") {
  const Tokens s = w("the quick brown fox");
  CHECK(rouge_n(s, s, 1) == 1.0);
  CHECK(rouge_n(s, s, 2) == 1.0);
  CHECK(rouge_l(s, s) == 1.0);
  CHECK(rouge_n({}, s, 1) == 0.0);
  CHECK(rouge_l({}, s) == 0.0);
  CHECK(rouge_n(w("a"), w("a"), 2) == 1.0);
  CHECK(rouge_n(w("a"), w("b"), 2) == 0.0);
  CHECK(rouge_l(w("a b c d"), w("a c b d")) == 0.75);
  CHECK(lcs_length(w("a b c d"), w("a c b d")) == 3);
  // P = 2/3, R = 2/4
  CHECK(rouge_n(w("a b x"), w("a b c d"), 1) == doctest::Approx(2 * (2.0 / 3) * 0.5 / (2.0 / 3 + 0.5)));

  SUBCASE("LCS agrees with subsequence enumeration") {
    Rng rng(4);
    const std::vector<std::string> alpha = {"a", "b", "c"};
    for (int k = 0; k < 300; ++k) {
      Tokens a, b;
      for (int i = rng.between(0, 8); i > 0; --i) a.push_back(alpha[rng.below(3)]);
      for (int i = rng.between(0, 8); i > 0; --i) b.push_back(alpha[rng.below(3)]);
      CHECK(lcs_length(a, b) == lcs_bruteforce(a, b));
    }
  }
  SUBCASE("unigram score bounds the bigram score on repetition-free pairs") {
    Rng rng(5);
    for (int k = 0; k < 300; ++k) {
      std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g", "h"};
      rng.shuffle(pool);
      Tokens c(pool.begin(), pool.begin() + rng.between(1, 5));
      rng.shuffle(pool);
      Tokens r(pool.begin(), pool.begin() + rng.between(2, 6));
      CHECK(rouge_n(c, r, 1) >= rouge_n(c, r, 2));
    }
  }
  SUBCASE("with repeated words the bigram score can exceed the unigram score") {
    // clipped unigram overlap 2 of 3, bigram overlap 2 of 2
    CHECK(rouge_n(w("a b a"), w("b a b"), 1) == doctest::Approx(2.0 / 3));
    CHECK(rouge_n(w("a b a"), w("b a b"), 2) == 1.0);
  }
  SUBCASE("bounded in [0, 1]") {
    Rng rng(6);
    for (int k = 0; k < 200; ++k) {
      Tokens a, b;
      for (int i = rng.between(0, 7); i > 0; --i) a.push_back(std::string(1, static_cast<char>('a' + rng.below(4))));
      for (int i = rng.between(0, 7); i > 0; --i) b.push_back(std::string(1, static_cast<char>('a' + rng.below(4))));
      for (double v : {sentence_bleu(a, b), rouge_n(a, b, 1), rouge_n(a, b, 2), rouge_l(a, b)}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("tree edit metrics use skeletons") {
  const auto g = parse_bracketed("(S (NP (PRP i)) (VP (VBP run)))");
  const auto y = parse_bracketed("(S (NP (PRP you)) (VP (VBP walk)))");
  const auto z = parse_bracketed("(S (NP (DT the) (NN dog)) (VP (VBZ runs)))");
  const TedScores t = ted_metrics(g, y, z);
  CHECK(t.ted_e == 0);
  CHECK(t.ted_r == 3);  // relabel PRP, insert NN, relabel VBP
}

TEST_CASE("baselines and aggregation") {
  std::vector<EvalTriple> ts = {
      triple("how do i learn python ?", "(ROOT (SBARQ (WHADVP (WRB how)) (SQ (VBP do) (NP (PRP i)) (VP (VB learn) (NP (NN python)))) (. ?)))",
             "what is the best car ?", "(ROOT (SBARQ (WHNP (WP what)) (SQ (VBZ is) (NP (DT the) (JJS best) (NN car))) (. ?)))",
             "what is the best way to learn python ?",
             "(ROOT (SBARQ (WHNP (WP what)) (SQ (VBZ is) (NP (NP (DT the) (JJS best) (NN way)) (S (VP (TO to) (VP (VB learn) (NP (NN python))))))) (. ?)))"),
      triple("i like tea", "(ROOT (S (NP (PRP i)) (VP (VBP like) (NP (NN tea)))))", "dogs bark", "(ROOT (S (NP (NNS dogs)) (VP (VBP bark))))",
             "tea is liked by me", "(ROOT (S (NP (NN tea)) (VP (VBZ is) (VP (VBN liked) (PP (IN by) (NP (PRP me)))))))"),
  };
  const auto rows = baselines(ts, BleuMode::Corpus);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].system == "Source-as-Output");
  CHECK(rows[1].system == "Exemplar-as-Output");
  CHECK(rows[1].ted_e == 0.0);
  CHECK(rows[0].ted_e > 0.0);

  SUBCASE("single triple equals direct metric calls") {
    std::vector<EvalTriple> one = {ts[0]};
    const auto r = score_system("x", one, {ts[0].source}, {ts[0].source_tree}, BleuMode::Sentence);
    const Tokens c = w(ts[0].source), ref = w(ts[0].reference);
    CHECK(r.bleu == sentence_bleu(c, ref));
    CHECK(r.rouge1 == rouge_n(c, ref, 1));
    CHECK(r.rouge2 == rouge_n(c, ref, 2));
    CHECK(r.rougel == rouge_l(c, ref));
    const TedScores t = ted_metrics(ts[0].source_tree, ts[0].exemplar_tree, ts[0].reference_tree);
    CHECK(r.ted_e == t.ted_e);
    CHECK(r.ted_r == t.ted_r);
  }
  SUBCASE("means over examples") {
    const auto r = score_system("x", ts, {ts[0].source, ts[1].source}, {std::nullopt, ts[1].source_tree},
                                BleuMode::Sentence);
    const double m = (rouge_l(w(ts[0].source), w(ts[0].reference)) + rouge_l(w(ts[1].source), w(ts[1].reference))) / 2;
    CHECK(std::abs(r.rougel - m) < 1e-9);
    CHECK(r.unparsed == 1);
    CHECK(r.ted_e == ted_metrics(ts[1].source_tree, ts[1].exemplar_tree, ts[1].reference_tree).ted_e);
  }
  SUBCASE("no trees at all leaves TED undefined") {
    const auto r = score_system("x", ts, {ts[0].source, ts[1].source}, {std::nullopt, std::nullopt}, BleuMode::Sentence);
    CHECK(r.unparsed == 2);
    CHECK(std::isnan(r.ted_e));
    CHECK(std::isnan(r.ted_r));
    const std::string txt = format_report({r});
    CHECK(txt.find(" -") != std::string::npos);
  }
  SUBCASE("report formats name all six metrics") {
    const std::string txt = format_report(rows);
    const std::string tsv = format_report_tsv(rows);
    for (const char* m : {"BLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L", "TED-R", "TED-E"}) {
      CHECK(txt.find(m) != std::string::npos);
      CHECK(tsv.find(m) != std::string::npos);
    }
    CHECK(txt.find("Exemplar-as-Output") != std::string::npos);
  }
}

TEST_CASE("permutation test") {
  SUBCASE("identical samples") {
    const std::vector<double> a = {0.1, 0.5, 0.3, 0.9};
    const auto r = permutation_test(a, a);
    CHECK(r.p_value == 1.0);
    CHECK_FALSE(r.significant);
    std::vector<double> big(50, 0.4);
    CHECK(permutation_test(big, big, 2000).p_value == 1.0);
  }
  SUBCASE("extreme separation") {
    Rng rng(2);
    std::vector<double> a, b;
    for (int i = 0; i < 50; ++i) {
      b.push_back(rng.uniform());
      a.push_back(b.back() + 100);
    }
    const auto r = permutation_test(a, b, 5000, 3);
    CHECK_FALSE(r.exact);
    CHECK(r.p_value < 0.05);
    CHECK(r.significant);
  }
  SUBCASE("exact enumeration on small samples") {
    Rng rng(8);
    for (std::size_t n = 1; n <= 10; ++n) {
      for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> a, b, d;
        for (std::size_t i = 0; i < n; ++i) {
          a.push_back(std::round(rng.uniform(0, 10)) / 10);
          b.push_back(std::round(rng.uniform(0, 10)) / 10);
          d.push_back(a.back() - b.back());
        }
        const auto r = permutation_test(a, b, 1u << 10);
        CHECK(r.exact);
        CHECK(r.p_value == doctest::Approx(exact_p(d)).epsilon(1e-15));
      }
    }
  }
  SUBCASE("six points") {
    const std::vector<double> a = {0.9, 0.8, 0.7, 0.75, 0.6, 0.95}, b = {0.5, 0.6, 0.65, 0.7, 0.62, 0.4};
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) d.push_back(a[i] - b[i]);
    const auto r = permutation_test(a, b, 64);
    CHECK(r.exact);
    CHECK(r.p_value == exact_p(d));
  }
  SUBCASE("seeded sampling is reproducible") {
    std::vector<double> a(40), b(40);
    Rng rng(9);
    for (std::size_t i = 0; i < 40; ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform();
    }
    CHECK(permutation_test(a, b, 999, 7).p_value == permutation_test(a, b, 999, 7).p_value);
  }
  CHECK_THROWS_AS(permutation_test({1.0}, {1.0, 2.0}), DataError);
}
