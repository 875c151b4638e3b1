#include "sgcp/dataset_builder.hpp"

#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>

#include "sgcp/error.hpp"
#include "sgcp/rng.hpp"

namespace sgcp {

namespace {

// Absorbs floating-point noise in BLEU values that are exactly the threshold.
constexpr double kBleuTolerance = 1e-9;

struct PoolEntry {
  std::string text;
  Tokens tokens;
  SyntaxSkeleton skeleton;
  const ConstituencyTree* tree;
};

}  // namespace

BuildResult build_eval_set(const std::vector<SourcePair>& pairs, const BuildOptions& options) {
  if (pairs.size() < 2) throw DataError("build_eval_set: need at least 2 pairs, got " + std::to_string(pairs.size()));
  BuildResult result;
  result.stats.input_pairs = pairs.size();

  std::vector<const SourcePair*> kept;
  for (const auto& p : pairs) {
    if (metric_tokens(p.x).size() > options.max_tokens || metric_tokens(p.z).size() > options.max_tokens)
      ++result.stats.too_long;
    else
      kept.push_back(&p);
  }

  std::vector<PoolEntry> pool;
  std::map<std::string, std::size_t> index;
  auto add = [&](const std::string& s, const ConstituencyTree& t) {
    auto [it, fresh] = index.emplace(s, pool.size());
    if (fresh) pool.push_back({s, metric_tokens(s), strip_terminals(t), &t});
    return it->second;
  };
  std::vector<std::pair<std::size_t, std::size_t>> ids;
  for (const SourcePair* p : kept) {
    const std::size_t xi = add(p->x, p->x_tree);
    ids.emplace_back(xi, add(p->z, p->z_tree));
  }
  result.stats.pool_size = pool.size();

  std::map<std::pair<std::size_t, std::size_t>, int> ted_cache;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const SourcePair& p = *kept[k];
    const auto [xi, zi] = ids[k];
    const Tokens x = metric_tokens(p.x);
    const Tokens z = metric_tokens(p.z);
    const SyntaxSkeleton zs = strip_terminals(p.z_tree);
    std::size_t best = pool.size();
    int best_ted = std::numeric_limits<int>::max();
    for (std::size_t c = 0; c < pool.size(); ++c) {
      if (c == xi || c == zi) continue;
      const auto diff = static_cast<long>(pool[c].tokens.size()) - static_cast<long>(z.size());
      if (static_cast<std::size_t>(std::labs(diff)) > options.max_length_diff) continue;
      if (sentence_bleu(pool[c].tokens, x) > options.max_bleu + kBleuTolerance) continue;
      auto [it, fresh] = ted_cache.emplace(std::make_pair(zi, c), 0);
      if (fresh) it->second = ted(zs, pool[c].skeleton);
      if (it->second < best_ted) {
        best_ted = it->second;
        best = c;
      }
    }
    if (best == pool.size()) {
      ++result.stats.no_candidate;
      continue;
    }
    result.triples.push_back({p.x, pool[best].text, p.z, p.x_tree, *pool[best].tree, p.z_tree});
  }
  if (result.triples.empty()) throw DataError("build_eval_set: no pair has a surviving exemplar candidate");
  return result;
}

EvalSplit split_eval_set(const std::vector<EvalTriple>& triples, std::size_t test_n, std::size_t val_n,
                         std::uint64_t seed) {
  if (test_n + val_n > triples.size())
    throw DataError("split: asked for " + std::to_string(test_n + val_n) + " triples but only " +
                    std::to_string(triples.size()) + " exist");
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  EvalSplit s;
  for (std::size_t i = 0; i < test_n; ++i) s.test.push_back(triples[order[i]]);
  for (std::size_t i = test_n; i < test_n + val_n; ++i) s.validation.push_back(triples[order[i]]);
  return s;
}

}  // namespace sgcp
