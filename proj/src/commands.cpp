#include "sgcp/commands.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "sgcp/checkpoint.hpp"
#include "sgcp/dataset_builder.hpp"
#include "sgcp/error.hpp"
#include "sgcp/inference.hpp"
#include "sgcp/metrics.hpp"
#include "sgcp/rng.hpp"
#include "sgcp/training.hpp"
#include "sgcp/tsv.hpp"

namespace sgcp::cli {

namespace fs = std::filesystem;

namespace {

std::string required(const KeyValueConfig& s, const std::string& key) {
  if (!s.has(key) || s.get_string(key, "").empty()) throw UsageError("missing required --" + key);
  return s.get_string(key, "");
}

std::string input_file(const KeyValueConfig& s, const std::string& key) {
  const std::string path = required(s, key);
  if (!fs::is_regular_file(path)) throw DataError("--" + key + ": no such file: " + path);
  return path;
}

fs::path output_dir(const KeyValueConfig& s) {
  const fs::path dir = required(s, "out");
  fs::create_directories(dir);
  std::ostringstream echo;
  s.write(echo);
  write_text_file((dir / "config.echo").string(), echo.str());
  return dir;
}

std::size_t non_negative(const KeyValueConfig& s, const std::string& key, std::size_t fallback) {
  const long long v = s.get_int(key, static_cast<long long>(fallback));
  if (v < 0) throw UsageError("--" + key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

struct PairData {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<ConstituencyTree> source_trees, target_trees;

  std::vector<ConstituencyTree> all_trees() const {
    auto t = source_trees;
    t.insert(t.end(), target_trees.begin(), target_trees.end());
    return t;
  }
};

void check_aligned(std::size_t rows, std::size_t trees, const std::string& rows_path, const std::string& tree_path) {
  if (trees < rows)
    throw DataError(tree_path + ":" + std::to_string(trees + 1) + ": missing tree line for line " +
                    std::to_string(trees + 1) + " of " + rows_path);
  if (trees > rows)
    throw DataError(tree_path + ":" + std::to_string(rows + 1) + ": tree line without a matching line in " + rows_path);
}

PairData read_pairs(const std::string& pairs_path, const std::string& trees_path) {
  const auto rows = read_tsv(pairs_path, 2);
  const auto trees = read_tree_file(trees_path, 2);
  check_aligned(rows.size(), trees.size(), pairs_path, trees_path);
  PairData d;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.pairs.emplace_back(rows[i][0], rows[i][1]);
    d.source_trees.push_back(trees[i][0]);
    d.target_trees.push_back(trees[i][1]);
  }
  return d;
}

std::vector<EvalTriple> read_triples(const std::string& triples_path, const std::string& trees_path) {
  const auto rows = read_tsv(triples_path, 3);
  const auto trees = read_tree_file(trees_path, 3);
  check_aligned(rows.size(), trees.size(), triples_path, trees_path);
  std::vector<EvalTriple> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.push_back({rows[i][0], rows[i][1], rows[i][2], trees[i][0], trees[i][1], trees[i][2]});
  return out;
}

void write_triples(const fs::path& stem, const std::vector<EvalTriple>& triples) {
  std::vector<TsvRow> rows, trees;
  for (const auto& t : triples) {
    rows.push_back({t.source, t.exemplar, t.reference});
    trees.push_back({serialize(t.source_tree), serialize(t.exemplar_tree), serialize(t.reference_tree)});
  }
  write_tsv(stem.string() + ".tsv", rows);
  write_tsv(stem.string() + ".trees", trees);
}

template <typename T>
void save_to(const fs::path& path, const T& obj) {
  std::ostringstream s;
  obj.save(s);
  write_text_file(path.string(), s.str());
}

void save_resources(const fs::path& dir, const TextResources& r) {
  save_to(dir / "bpe.model", r.bpe);
  save_to(dir / "vocab.txt", r.vocab);
  save_to(dir / "labels.txt", r.labels);
}

template <typename T>
T load_from(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw DataError("missing " + path.string());
  std::istringstream s(read_text_file(path.string()));
  return T::load(s);
}

TextResources load_resources(const fs::path& dir) {
  return {load_from<BpeModel>(dir / "bpe.model"), load_from<Vocab>(dir / "vocab.txt"),
          load_from<LabelVocab>(dir / "labels.txt")};
}

std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (int id : ids) s += (s.empty() ? "" : " ") + std::to_string(id);
  return s;
}

struct Prepared {
  std::vector<PreparedPair> pairs;
  std::map<std::string, std::size_t> skipped;  // reason -> count
  std::size_t skipped_total = 0;
};

Prepared prepare_all(const PairData& d, const TextResources& r, std::size_t max_len) {
  Prepared p;
  for (std::size_t i = 0; i < d.pairs.size(); ++i) {
    std::string why;
    auto pp = prepare_pair(d.pairs[i].first, d.pairs[i].second, d.target_trees[i], r.bpe, r.vocab, max_len, &why);
    if (pp) {
      p.pairs.push_back(std::move(*pp));
    } else {
      ++p.skipped[why];
      ++p.skipped_total;
    }
  }
  return p;
}

std::string stats_text(std::size_t total, const Prepared& p) {
  std::ostringstream s;
  s << "pairs\t" << total << "\nkept\t" << p.pairs.size() << "\nskipped\t" << p.skipped_total << '\n';
  for (const auto& [why, n] : p.skipped) s << "skipped: " << why << '\t' << n << '\n';
  return s.str();
}

std::optional<ConstituencyTree> parse_optional_tree(const std::string& line) {
  if (line.empty() || line == "-") return std::nullopt;
  return parse_bracketed(line);
}

}  // namespace

void cmd_preprocess(const KeyValueConfig& settings, std::ostream& log) {
  const std::string pairs_path = input_file(settings, "pairs");
  const std::string trees_path = input_file(settings, "trees");
  const TrainConfig cfg = TrainConfig::from(settings);
  const PairData data = read_pairs(pairs_path, trees_path);
  const fs::path out = output_dir(settings);

  const TextResources res = build_resources(data.pairs, data.all_trees(), cfg.merges, cfg.vocab_cap);
  save_resources(out, res);
  const Prepared prep = prepare_all(data, res, cfg.max_len);
  std::vector<TsvRow> rows;
  for (const auto& p : prep.pairs) {
    std::string ext;
    for (const auto& e : p.extension) ext += (ext.empty() ? "" : " ") + e;
    rows.push_back({join_ids(p.source), join_ids(p.target), ext});
  }
  write_tsv((out / "corpus.tsv").string(), rows);
  const std::string stats = stats_text(data.pairs.size(), prep);
  write_text_file((out / "stats.txt").string(), stats);
  log << "preprocess: " << prep.pairs.size() << " of " << data.pairs.size() << " pairs kept, " << prep.skipped_total
      << " skipped; vocab " << res.vocab.size() << ", labels " << res.labels.size() << '\n';
}

void cmd_train(const KeyValueConfig& settings, std::ostream& log) {
  const std::string pairs_path = input_file(settings, "pairs");
  const std::string trees_path = input_file(settings, "trees");
  if (settings.has("data") && !fs::is_directory(settings.get_string("data", "")))
    throw DataError("--data: no such directory: " + settings.get_string("data", ""));
  const TrainConfig cfg = TrainConfig::from(settings);
  const PairData data = read_pairs(pairs_path, trees_path);
  const fs::path out = output_dir(settings);

  const TextResources res = settings.has("data")
                                ? load_resources(settings.get_string("data", ""))
                                : build_resources(data.pairs, data.all_trees(), cfg.merges, cfg.vocab_cap);
  Prepared prep = prepare_all(data, res, cfg.max_len);
  if (prep.pairs.size() <= cfg.valid_n)
    throw DataError("train: " + std::to_string(prep.pairs.size()) + " usable pairs, cannot hold out " +
                    std::to_string(cfg.valid_n) + " for validation");
  std::vector<PreparedPair> valid(prep.pairs.end() - static_cast<long>(cfg.valid_n), prep.pairs.end());
  prep.pairs.resize(prep.pairs.size() - cfg.valid_n);

  ModelConfig mc;
  mc.vocab_size = res.vocab.size();
  mc.hidden = cfg.hidden;
  mc.embed = cfg.embed;
  save_resources(out, res);
  std::ostringstream manifest;
  mc.save(manifest, res.labels);
  write_text_file((out / "manifest.txt").string(), manifest.str());
  write_text_file((out / "stats.txt").string(), stats_text(data.pairs.size(), prep));

  Model model(mc, res.labels);
  Rng rng(cfg.seed);
  model.init(rng);
  const TrainResult r = train(model, prep.pairs, valid, cfg, rng, out.string());
  log << "train: " << r.steps << " steps on " << prep.pairs.size() << " pairs (" << prep.skipped_total
      << " skipped), best loss " << r.best_loss << '\n';
}

void cmd_generate(const KeyValueConfig& settings, std::ostream& log) {
  const fs::path ckpt = input_file(settings, "checkpoint");
  const std::string trees_path = input_file(settings, "trees");
  const bool from_triples = settings.has("triples");
  const std::string inputs = input_file(settings, from_triples ? "triples" : "pairs");
  const std::string mode = settings.get_string("mode", "F");
  if (mode != "F" && mode != "R") throw UsageError("--mode must be F or R, got '" + mode + "'");
  std::optional<int> h;
  if (settings.has("height")) {
    if (mode == "R") throw UsageError("--height applies to mode F only");
    h = static_cast<int>(settings.get_int("height", 0));
    if (*h < 1) throw UsageError("--height must be at least 1");
  }
  BeamOptions beam;
  beam.width = non_negative(settings, "beam", beam.width);
  beam.max_len = non_negative(settings, "max_len", beam.max_len);
  if (beam.width == 0) throw UsageError("--beam must be at least 1");

  std::vector<std::pair<std::string, std::string>> items;
  std::vector<ConstituencyTree> exemplar_trees;
  if (from_triples) {
    for (auto& t : read_triples(inputs, trees_path)) {
      items.emplace_back(t.source, t.exemplar);
      exemplar_trees.push_back(std::move(t.exemplar_tree));
    }
  } else {
    const auto rows = read_tsv(inputs, 2);
    const auto trees = read_tree_file(trees_path, 1);
    check_aligned(rows.size(), trees.size(), inputs, trees_path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      items.emplace_back(rows[i][0], rows[i][1]);
      exemplar_trees.push_back(trees[i][0]);
    }
  }

  const fs::path dir = ckpt.parent_path();
  const TextResources res = load_resources(dir);
  const ModelConfig mc = load_from<ModelConfig>(dir / "manifest.txt");
  const fs::path out = output_dir(settings);
  Model model(mc, res.labels);
  load_checkpoint(ckpt.string(), model.params());
  Generator gen(model, res.bpe, res.vocab, beam);

  std::vector<TsvRow> rows;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Generation g =
        mode == "F" ? gen.generate_f(items[i].first, exemplar_trees[i], h) : gen.generate_r(items[i].first, exemplar_trees[i]);
    rows.push_back({items[i].first, items[i].second, std::to_string(g.height), g.text});
  }
  write_tsv((out / "generations.tsv").string(), rows);
  log << "generate: " << rows.size() << " sentences, mode " << mode << ", beam " << beam.width << '\n';
}

void cmd_evaluate(const KeyValueConfig& settings, std::ostream& log) {
  const std::string gen_path = input_file(settings, "generations");
  const std::string triples_path = input_file(settings, "triples");
  const std::string trees_path = input_file(settings, "trees");
  const std::optional<std::string> gen_trees_path =
      settings.has("gen_trees") ? std::optional(input_file(settings, "gen_trees")) : std::nullopt;
  const std::string bleu = settings.get_string("bleu", "corpus");
  if (bleu != "corpus" && bleu != "sentence") throw UsageError("--bleu must be corpus or sentence, got '" + bleu + "'");
  const BleuMode mode = bleu == "corpus" ? BleuMode::Corpus : BleuMode::Sentence;

  const auto triples = read_triples(triples_path, trees_path);
  const auto gens = read_tsv(gen_path, 4);
  if (gens.size() != triples.size())
    throw DataError(gen_path + ": " + std::to_string(gens.size()) + " generations for " +
                    std::to_string(triples.size()) + " triples");
  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    if (gens[i][0] != triples[i].source)
      throw DataError(gen_path + ":" + std::to_string(i + 1) + ": source does not match " + triples_path);
    outputs.push_back(gens[i][3]);
  }

  std::vector<std::optional<ConstituencyTree>> trees;
  if (gen_trees_path) {
    std::istringstream in(read_text_file(*gen_trees_path));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      try {
        trees.push_back(parse_optional_tree(line));
      } catch (const ParseError& e) {
        throw DataError(*gen_trees_path + ":" + std::to_string(n) + ": " + e.what());
      }
    }
    check_aligned(outputs.size(), trees.size(), gen_path, *gen_trees_path);
  } else {
    // Without parses, a generation identical to a known sentence borrows its tree.
    std::map<std::string, const ConstituencyTree*> known;
    for (const auto& t : triples) {
      known.emplace(t.source, &t.source_tree);
      known.emplace(t.exemplar, &t.exemplar_tree);
      known.emplace(t.reference, &t.reference_tree);
    }
    for (const auto& o : outputs) {
      auto it = known.find(o);
      trees.push_back(it == known.end() ? std::nullopt : std::optional(*it->second));
    }
  }

  const fs::path out = output_dir(settings);
  std::vector<MetricRow> rows = baselines(triples, mode);
  rows.push_back(score_system(settings.get_string("system", "SGCP"), triples, outputs, trees, mode));
  const std::string report = format_report(rows);
  write_text_file((out / "report.txt").string(), report);
  write_text_file((out / "report.tsv").string(), format_report_tsv(rows));
  log << report;
  if (rows.back().unparsed)
    log << rows.back().unparsed << " of " << rows.back().count << " generations have no tree; left out of TED\n";
}

void cmd_build_dataset(const KeyValueConfig& settings, std::ostream& log) {
  const std::string pairs_path = input_file(settings, "pairs");
  const std::string trees_path = input_file(settings, "trees");
  const PairData data = read_pairs(pairs_path, trees_path);
  BuildOptions opt;
  opt.max_tokens = non_negative(settings, "max_tokens", opt.max_tokens);
  const auto seed = static_cast<std::uint64_t>(non_negative(settings, "seed", 1));

  std::vector<SourcePair> pairs;
  for (std::size_t i = 0; i < data.pairs.size(); ++i)
    pairs.push_back({data.pairs[i].first, data.pairs[i].second, data.source_trees[i], data.target_trees[i]});
  const fs::path out = output_dir(settings);
  const BuildResult r = build_eval_set(pairs, opt);
  const std::size_t n = r.triples.size();
  const std::size_t test_n = non_negative(settings, "test_n", std::min<std::size_t>(3000, n));
  const std::size_t val_n = non_negative(settings, "val_n", std::min<std::size_t>(3000, n - std::min(test_n, n)));
  const EvalSplit split = split_eval_set(r.triples, test_n, val_n, seed);

  write_triples(out / "triples", r.triples);
  write_triples(out / "test", split.test);
  write_triples(out / "valid", split.validation);
  std::ostringstream stats;
  stats << "pairs\t" << r.stats.input_pairs << "\ntoo_long\t" << r.stats.too_long << "\nno_candidate\t"
        << r.stats.no_candidate << "\npool\t" << r.stats.pool_size << "\ntriples\t" << n << "\ntest\t"
        << split.test.size() << "\nvalid\t" << split.validation.size() << '\n';
  write_text_file((out / "stats.txt").string(), stats.str());
  log << "build-dataset: " << n << " triples from " << r.stats.input_pairs << " pairs (" << r.stats.too_long
      << " too long, " << r.stats.no_candidate << " without a candidate); test " << split.test.size() << ", valid "
      << split.validation.size() << '\n';
}

void cmd_inspect_tree(const KeyValueConfig& settings, std::ostream& log) {
  ConstituencyTree tree;
  if (settings.has("tree")) {
    tree = parse_bracketed(settings.get_string("tree", ""));
  } else if (settings.has("trees")) {
    const auto trees = read_tree_file(input_file(settings, "trees"), 1);
    if (trees.empty()) throw DataError(settings.get_string("trees", "") + ": no trees");
    tree = trees.front().front();
  } else {
    throw UsageError("inspect-tree needs a tree argument or --trees");
  }
  const SyntaxSkeleton skel = strip_terminals(tree);
  const int full = height(skel);
  const int h = static_cast<int>(settings.get_int("height", full));
  if (h < 1) throw UsageError("--height must be at least 1");
  const PrunedTree pruned = prune(skel, h);

  std::ostringstream s;
  s << "height " << std::min(h, full) << " of " << full << '\n';
  s << pretty_print(pruned.skeleton.tree());
  s << "queue:";
  for (NodeId id : leaf_queue(pruned)) s << ' ' << display_label(pruned.skeleton.tree().node(id).label);
  s << '\n';
  if (tree.has_tokens()) {
    const SignallingVector sv = leaf_spans(tree, h);
    s << "tokens:";
    for (const auto& t : tree.tokens()) s << ' ' << t;
    s << "\na =";
    for (int b : sv.bits) s << ' ' << b;
    s << "\nspans:";
    for (const auto& sp : sv.spans) s << " [" << sp.begin + 1 << ',' << sp.end << ']';
    s << '\n';
  }
  log << s.str();
  if (settings.has("out")) write_text_file((output_dir(settings) / "inspect.txt").string(), s.str());
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e)) return 1;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  return 2;
}

}  // namespace sgcp::cli
