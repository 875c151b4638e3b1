#include "sgcp/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "sgcp/error.hpp"
#include "sgcp/rng.hpp"
#include "sgcp/text_pipeline.hpp"

namespace sgcp {

namespace {

constexpr int kBleuOrder = 4;
constexpr double kBleuSmoothing = 0.1;

using NgramCounts = std::map<std::vector<std::string>, long>;

NgramCounts ngrams(const Tokens& t, int n) {
  NgramCounts out;
  const auto un = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + un <= t.size(); ++i) ++out[Tokens(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + un))];
  return out;
}

long clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
  long m = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

long total(const Tokens& t, int n) { return std::max<long>(0, static_cast<long>(t.size()) - n + 1); }

struct BleuStats {
  long matches[kBleuOrder] = {0, 0, 0, 0};
  long totals[kBleuOrder] = {0, 0, 0, 0};
  long cand_len = 0;
  long ref_len = 0;

  void add(const Tokens& c, const Tokens& r) {
    for (int n = 1; n <= kBleuOrder; ++n) {
      matches[n - 1] += clipped_overlap(ngrams(c, n), ngrams(r, n));
      totals[n - 1] += total(c, n);
    }
    cand_len += static_cast<long>(c.size());
    ref_len += static_cast<long>(r.size());
  }

  double score() const {
    if (cand_len == 0) return 0.0;
    double log_sum = 0.0;
    int orders = 0;
    for (int k = 0; k < kBleuOrder; ++k) {
      if (totals[k] == 0) continue;
      const double p = matches[k] > 0 ? static_cast<double>(matches[k]) / static_cast<double>(totals[k])
                                       : kBleuSmoothing / static_cast<double>(totals[k]);
      log_sum += std::log(p);
      ++orders;
    }
    const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return bp * std::exp(log_sum / orders);
  }
};

double f1(double overlap, double cand_total, double ref_total) {
  if (overlap <= 0.0) return 0.0;
  const double p = overlap / cand_total, r = overlap / ref_total;
  return 2.0 * p * r / (p + r);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string fmt(double v, int decimals) {
  if (std::isnan(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace

Tokens metric_tokens(std::string_view sentence) { return pretokenize(sentence); }

double sentence_bleu(const Tokens& candidate, const Tokens& reference) {
  BleuStats s;
  s.add(candidate, reference);
  return s.score();
}

double corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  if (candidates.size() != references.size()) throw DataError("corpus_bleu: candidate and reference counts differ");
  BleuStats s;
  for (std::size_t i = 0; i < candidates.size(); ++i) s.add(candidates[i], references[i]);
  return s.score();
}

double rouge_n(const Tokens& candidate, const Tokens& reference, int n) {
  if (n < 1) throw std::invalid_argument("rouge_n: n must be positive");
  const long ct = total(candidate, n), rt = total(reference, n);
  if (ct == 0 || rt == 0) return !candidate.empty() && candidate == reference ? 1.0 : 0.0;
  const long m = clipped_overlap(ngrams(candidate, n), ngrams(reference, n));
  return f1(static_cast<double>(m), static_cast<double>(ct), static_cast<double>(rt));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  return f1(static_cast<double>(lcs_length(candidate, reference)), static_cast<double>(candidate.size()),
            static_cast<double>(reference.size()));
}

TedScores ted_metrics(const ConstituencyTree& generation, const ConstituencyTree& exemplar,
                      const ConstituencyTree& reference) {
  const SyntaxSkeleton g = strip_terminals(generation);
  return {ted(g, strip_terminals(exemplar)), ted(g, strip_terminals(reference))};
}

MetricRow score_system(const std::string& name, const std::vector<EvalTriple>& triples,
                       const std::vector<std::string>& outputs,
                       const std::vector<std::optional<ConstituencyTree>>& trees, BleuMode mode) {
  if (outputs.size() != triples.size() || trees.size() != triples.size())
    throw DataError("score_system: " + std::to_string(outputs.size()) + " outputs for " +
                    std::to_string(triples.size()) + " triples");
  MetricRow row;
  row.system = name;
  row.count = triples.size();
  std::vector<Tokens> cands, refs;
  std::vector<double> bleu, r1, r2, rl, te, tr;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const Tokens c = metric_tokens(outputs[i]);
    const Tokens r = metric_tokens(triples[i].reference);
    cands.push_back(c);
    refs.push_back(r);
    bleu.push_back(sentence_bleu(c, r));
    r1.push_back(rouge_n(c, r, 1));
    r2.push_back(rouge_n(c, r, 2));
    rl.push_back(rouge_l(c, r));
    if (trees[i]) {
      const TedScores t = ted_metrics(*trees[i], triples[i].exemplar_tree, triples[i].reference_tree);
      te.push_back(t.ted_e);
      tr.push_back(t.ted_r);
    } else {
      ++row.unparsed;
    }
  }
  row.bleu = mode == BleuMode::Corpus ? corpus_bleu(cands, refs) : mean(bleu);
  row.rouge1 = mean(r1);
  row.rouge2 = mean(r2);
  row.rougel = mean(rl);
  row.ted_e = te.empty() ? std::nan("") : mean(te);
  row.ted_r = tr.empty() ? std::nan("") : mean(tr);
  return row;
}

std::vector<MetricRow> baselines(const std::vector<EvalTriple>& triples, BleuMode mode) {
  std::vector<std::string> src, ex;
  std::vector<std::optional<ConstituencyTree>> src_t, ex_t;
  for (const auto& t : triples) {
    src.push_back(t.source);
    src_t.emplace_back(t.source_tree);
    ex.push_back(t.exemplar);
    ex_t.emplace_back(t.exemplar_tree);
  }
  return {score_system("Source-as-Output", triples, src, src_t, mode),
          score_system("Exemplar-as-Output", triples, ex, ex_t, mode)};
}

std::string format_report(const std::vector<MetricRow>& rows) {
  const std::vector<std::string> head = {"System", "BLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L", "TED-R", "TED-E"};
  std::vector<std::vector<std::string>> cells = {head};
  for (const auto& r : rows)
    cells.push_back({r.system, fmt(100 * r.bleu, 1), fmt(100 * r.rouge1, 1), fmt(100 * r.rouge2, 1),
                     fmt(100 * r.rougel, 1), fmt(r.ted_r, 2), fmt(r.ted_e, 2)});
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      const std::string pad(width[j] - row[j].size(), ' ');
      if (j == 0)
        out << row[j] << pad;
      else
        out << "  " << pad << row[j];
    }
    out << '\n';
  }
  return out.str();
}

std::string format_report_tsv(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << "system\tBLEU\tROUGE-1\tROUGE-2\tROUGE-L\tTED-R\tTED-E\tcount\tunparsed\n";
  for (const auto& r : rows)
    out << r.system << '\t' << fmt(100 * r.bleu, 6) << '\t' << fmt(100 * r.rouge1, 6) << '\t' << fmt(100 * r.rouge2, 6)
        << '\t' << fmt(100 * r.rougel, 6) << '\t' << fmt(r.ted_r, 6) << '\t' << fmt(r.ted_e, 6) << '\t' << r.count
        << '\t' << r.unparsed << '\n';
  return out.str();
}

PermutationResult permutation_test(const std::vector<double>& a, const std::vector<double>& b, std::size_t iterations,
                                   std::uint64_t seed, double alpha) {
  if (a.size() != b.size()) throw DataError("permutation_test: score lists have different lengths");
  PermutationResult res;
  const std::size_t n = a.size();
  if (n == 0) return res;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  auto stat = [&](auto sign) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += sign(i) ? -d[i] : d[i];
    return std::abs(s / static_cast<double>(n));
  };
  const double observed = stat([](std::size_t) { return false; });
  const double threshold = observed - 1e-12;

  if (n < 63 && (std::uint64_t{1} << n) <= iterations) {
    const std::uint64_t patterns = std::uint64_t{1} << n;
    std::uint64_t hits = 0;
    for (std::uint64_t mask = 0; mask < patterns; ++mask)
      if (stat([mask](std::size_t i) { return (mask >> i) & 1u; }) >= threshold) ++hits;
    res.p_value = static_cast<double>(hits) / static_cast<double>(patterns);
    res.exact = true;
  } else {
    Rng rng(seed);
    std::uint64_t hits = 0;
    std::vector<bool> flip(n);
    for (std::size_t it = 0; it < iterations; ++it) {
      for (std::size_t i = 0; i < n; ++i) flip[i] = rng.bernoulli(0.5);
      if (stat([&flip](std::size_t i) { return flip[i]; }) >= threshold) ++hits;
    }
    res.p_value = static_cast<double>(hits + 1) / static_cast<double>(iterations + 1);
  }
  res.significant = res.p_value < alpha;
  return res;
}

}  // namespace sgcp
