#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

#include "doctest.h"
#include "sgcp/checkpoint.hpp"
#include "sgcp/commands.hpp"
#include "sgcp/error.hpp"
#include "sgcp/inference.hpp"
#include "sgcp/tsv.hpp"
#include "support/toy_data.hpp"

using namespace sgcp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("sgcp_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

KeyValueConfig toy_settings(const std::string& out) {
  KeyValueConfig s;
  s.set("pairs", toy::fixture("toy_pairs.tsv"));
  s.set("trees", toy::fixture("toy_trees.tsv"));
  s.set("out", out);
  s.set("hidden", "6");
  s.set("embed", "6");
  s.set("epochs", "2");
  s.set("batch", "8");
  s.set("lr", "0.005");
  s.set("merges", "150");
  s.set("vocab_cap", "400");
  return s;
}

std::string run_quiet(void (*cmd)(const KeyValueConfig&, std::ostream&), const KeyValueConfig& s) {
  std::ostringstream log;
  cmd(s, log);
  return log.str();
}

struct Exit {
  int code;
  std::string err;
};

Exit run_binary(const std::string& args, const TempDir& dir) {
  const std::string err = dir / "stderr.txt";
  const std::string cmd = std::string(SGCP_CLI) + " " + args + " > " + (dir / "stdout.txt") + " 2> " + err;
  const int status = std::system(cmd.c_str());
  return {WEXITSTATUS(status), read_text_file(err)};
}

}  // namespace

TEST_CASE("preprocess") {
  TempDir dir("pre");
  KeyValueConfig s = toy_settings(dir / "a");
  run_quiet(cli::cmd_preprocess, s);
  s.set("out", dir / "b");
  run_quiet(cli::cmd_preprocess, s);
  for (const char* f : {"bpe.model", "vocab.txt", "labels.txt", "corpus.tsv", "stats.txt"}) {
    INFO(f);
    CHECK(read_text_file(dir / (std::string("a/") + f)) == read_text_file(dir / (std::string("b/") + f)));
  }
  CHECK(fs::exists(dir / "a/config.echo"));

  SUBCASE("character vocabulary matches a direct count") {
    s.set("merges", "0");
    s.set("out", dir / "chars");
    run_quiet(cli::cmd_preprocess, s);
    std::map<std::string, int> counts;
    for (const auto& row : read_tsv(toy::fixture("toy_pairs.tsv"), 2))
      for (const auto& side : row)
        for (const auto& word : pretokenize(side))
          for (std::size_t i = 0; i < word.size(); ++i)
            ++counts[word.substr(i, 1) + (i + 1 == word.size() ? "</w>" : "")];
    std::vector<std::pair<int, std::string>> order;
    for (const auto& [piece, n] : counts) order.emplace_back(-n, piece);
    std::sort(order.begin(), order.end());
    std::istringstream vocab(read_text_file(dir / "chars/vocab.txt"));
    std::vector<std::string> lines;
    for (std::string line; std::getline(vocab, line);) lines.push_back(line);
    REQUIRE(lines.size() == order.size() + 4);
    for (std::size_t i = 0; i < order.size(); ++i) CHECK(lines[i + 4] == order[i].second);
  }
  SUBCASE("a missing tree line is reported with its line number") {
    std::istringstream trees(read_text_file(toy::fixture("toy_trees.tsv")));
    std::string all, line;
    for (int i = 0; i < 20 && std::getline(trees, line); ++i) all += line + "\n";
    write_text_file(dir / "short.trees", all);
    s.set("trees", dir / "short.trees");
    s.set("out", dir / "c");
    try {
      run_quiet(cli::cmd_preprocess, s);
      FAIL("expected a data error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":21:") != std::string::npos);
    }
  }
}

TEST_CASE("inspect-tree on the worked example") {
  KeyValueConfig s;
  s.set("tree", read_text_file(toy::fixture("worked_example.tree")));
  s.set("height", "3");
  const std::string out = run_quiet(cli::cmd_inspect_tree, s);
  CHECK(out.find("queue: WP VBZ NP <DOT>\n") != std::string::npos);
  CHECK(out.find("a = 1 1 1 0 0 0 0 0 1\n") != std::string::npos);
  CHECK(out.find("spans: [1,1] [2,2] [3,8] [9,9]\n") != std::string::npos);
}

TEST_CASE("toy pipeline") {
  TempDir dir("pipe");
  KeyValueConfig s = toy_settings(dir / "pre");
  run_quiet(cli::cmd_preprocess, s);
  s.set("data", dir / "pre");
  s.set("out", dir / "model");
  run_quiet(cli::cmd_train, s);
  for (const char* f : {"manifest.txt", "best.ckpt", "last.ckpt", "loss.tsv", "config.echo"})
    CHECK(fs::exists(dir / (std::string("model/") + f)));

  KeyValueConfig b = toy_settings(dir / "ds");
  b.set("seed", "5");
  b.set("test_n", "10");
  b.set("val_n", "4");
  run_quiet(cli::cmd_build_dataset, b);
  CHECK(read_tsv(dir / "ds/test.tsv", 3).size() == 10);
  CHECK(read_tsv(dir / "ds/valid.tsv", 3).size() == 4);

  KeyValueConfig g;
  g.set("checkpoint", dir / "model/best.ckpt");
  g.set("triples", dir / "ds/test.tsv");
  g.set("trees", dir / "ds/test.trees");
  g.set("out", dir / "gen");
  g.set("mode", "F");
  g.set("height", "3");
  g.set("beam", "2");
  run_quiet(cli::cmd_generate, g);
  const auto gens = read_tsv(dir / "gen/generations.tsv", 4);
  REQUIRE(gens.size() == 10);

  SUBCASE("mode F output equals the library generator") {
    std::istringstream m(read_text_file(dir / "model/manifest.txt")), l(read_text_file(dir / "model/labels.txt")),
        bp(read_text_file(dir / "model/bpe.model")), v(read_text_file(dir / "model/vocab.txt"));
    const ModelConfig mc = ModelConfig::load(m);
    Model model(mc, LabelVocab::load(l));
    load_checkpoint(dir / "model/best.ckpt", model.params());
    const BpeModel bpe = BpeModel::load(bp);
    const Vocab vocab = Vocab::load(v);
    Generator lib(model, bpe, vocab, {2, 60});
    const auto trees = read_tree_file(dir / "ds/test.trees", 3);
    for (std::size_t i = 0; i < gens.size(); ++i) {
      const Generation e = lib.generate_f(gens[i][0], trees[i][1], 3);
      CHECK(gens[i][3] == e.text);
      CHECK(gens[i][2] == std::to_string(e.height));
    }
  }
  SUBCASE("evaluate reports every metric") {
    KeyValueConfig e;
    e.set("generations", dir / "gen/generations.tsv");
    e.set("triples", dir / "ds/test.tsv");
    e.set("trees", dir / "ds/test.trees");
    e.set("out", dir / "eval");
    run_quiet(cli::cmd_evaluate, e);
    const auto rows = read_tsv(dir / "eval/report.tsv", 9);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == TsvRow{"system", "BLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L", "TED-R", "TED-E", "count", "unparsed"});
    CHECK(rows[2][0] == "Exemplar-as-Output");
    CHECK(rows[2][6] == "0.000000");
    CHECK(rows[3][0] == "SGCP");
    e.set("bleu", "neither");
    CHECK_THROWS_AS(run_quiet(cli::cmd_evaluate, e), UsageError);
  }
  SUBCASE("mode R rejects an explicit height") {
    g.set("mode", "R");
    CHECK_THROWS_AS(run_quiet(cli::cmd_generate, g), UsageError);
  }
}

TEST_CASE("command line") {
  TempDir dir("bin");
  const std::string pairs = toy::fixture("toy_pairs.tsv"), trees = toy::fixture("toy_trees.tsv");
  const std::string before = read_text_file(pairs) + read_text_file(trees);

  SUBCASE("usage errors exit 1") {
    const Exit e = run_binary("generate --mode X --checkpoint " + pairs + " --pairs " + pairs + " --trees " + trees +
                                  " --out " + (dir / "o"),
                              dir);
    CHECK(e.code == 1);
    CHECK(e.err.rfind("error: usage: ", 0) == 0);
    CHECK(std::count(e.err.begin(), e.err.end(), '\n') == 1);
    CHECK(run_binary("frobnicate", dir).code == 1);
  }
  SUBCASE("data errors exit 2") {
    const Exit e = run_binary("preprocess --pairs " + (dir / "missing.tsv") + " --trees " + trees + " --out " + (dir / "o"), dir);
    CHECK(e.code == 2);
    CHECK(e.err.rfind("error: data: ", 0) == 0);
    CHECK(std::count(e.err.begin(), e.err.end(), '\n') == 1);
    CHECK_FALSE(fs::exists(dir / "o"));
  }
  SUBCASE("numeric errors exit 3") {
    write_text_file(dir / "nan.conf", "hidden = 4\nembed = 4\nlr = 1e300\nepochs = 1\nbatch = 4\n");
    const Exit e = run_binary("train --config " + (dir / "nan.conf") + " --pairs " + pairs + " --trees " + trees +
                                  " --out " + (dir / "o"),
                              dir);
    CHECK(e.code == 3);
    CHECK(e.err.rfind("error: numeric: ", 0) == 0);
  }
  SUBCASE("flags override the config file and are echoed") {
    write_text_file(dir / "c.conf", "height = 2\nseed = 9\n");
    const Exit e = run_binary("inspect-tree --config " + (dir / "c.conf") + " --height 3 --trees " + toy::fixture("worked_example.tree") +
                                  " --out " + (dir / "o"),
                              dir);
    REQUIRE(e.code == 0);
    const std::string echo = read_text_file(dir / "o/config.echo");
    CHECK(echo.find("height = 3\n") != std::string::npos);
    CHECK(echo.find("seed = 9\n") != std::string::npos);
    CHECK(read_text_file(dir / "stdout.txt").find("queue: WP VBZ NP <DOT>") != std::string::npos);
  }
  CHECK(read_text_file(pairs) + read_text_file(trees) == before);
}
