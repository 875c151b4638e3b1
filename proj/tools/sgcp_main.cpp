#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sgcp/commands.hpp"
#include "sgcp/error.hpp"

namespace {

using Command = void (*)(const sgcp::KeyValueConfig&, std::ostream&);

struct Flags {
  std::string config;
  std::map<std::string, std::string> values;  // only flags actually given
};

void add_flag(CLI::App* app, Flags& f, const std::string& name, const std::string& help) {
  app->add_option_function<std::string>(
      "--" + name, [&f, name](const std::string& v) {
        std::string key = name;
        for (char& c : key)
          if (c == '-') c = '_';
        f.values[key] = v;
      },
      help);
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syntax-guided paraphrase generation"};
  app.require_subcommand(1);
  Flags flags;
  std::optional<std::string> tree_text;

  struct Spec {
    const char* name;
    const char* help;
    Command run;
    std::vector<const char*> options;
  };
  const std::vector<Spec> specs = {
      {"preprocess", "Train BPE, build vocabularies and binarize a pair corpus", sgcp::cli::cmd_preprocess,
       {"pairs", "trees", "out"}},
      {"train", "Train a model", sgcp::cli::cmd_train, {"pairs", "trees", "out", "data"}},
      {"generate", "Generate paraphrases", sgcp::cli::cmd_generate,
       {"checkpoint", "pairs", "triples", "trees", "out", "mode", "height", "beam"}},
      {"evaluate", "Score generations against references", sgcp::cli::cmd_evaluate,
       {"generations", "triples", "trees", "gen-trees", "bleu", "out"}},
      {"build-dataset", "Build evaluation triples from paraphrase pairs", sgcp::cli::cmd_build_dataset,
       {"pairs", "trees", "out"}},
      {"inspect-tree", "Show a pruned tree, its leaf queue and token spans", sgcp::cli::cmd_inspect_tree,
       {"trees", "height", "out"}},
  };
  const std::map<std::string, std::string> help = {
      {"pairs", "tab-separated sentence pairs"},
      {"trees", "bracketed trees aligned with the input lines, tab-separated"},
      {"out", "output directory"},
      {"data", "directory written by preprocess"},
      {"checkpoint", "checkpoint file inside a training output directory"},
      {"triples", "tab-separated source, exemplar, reference"},
      {"mode", "F (one height) or R (best of five heights)"},
      {"height", "pruning height"},
      {"beam", "beam width"},
      {"generations", "generation file written by generate"},
      {"gen-trees", "parse of each generation, one per line; '-' for none"},
      {"bleu", "corpus or sentence"},
  };

  Command chosen = nullptr;
  for (const Spec& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", flags.config, "key = value settings file");
    add_flag(sub, flags, "seed", "random seed");
    for (const char* o : s.options) add_flag(sub, flags, o, help.at(o));
    if (std::string(s.name) == "inspect-tree") sub->add_option("tree", tree_text, "bracketed tree");
    sub->callback([&chosen, run = s.run] { chosen = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << '\n';
    return 1;
  }

  try {
    sgcp::KeyValueConfig settings = flags.config.empty() ? sgcp::KeyValueConfig{} : sgcp::KeyValueConfig::load(flags.config);
    for (const auto& [k, v] : flags.values) settings.set(k, v);
    if (tree_text) settings.set("tree", *tree_text);
    chosen(settings, std::cout);
  } catch (const std::exception& e) {
    const int code = sgcp::cli::exit_code_for(e);
    static const char* kinds[] = {"", "usage", "data", "numeric"};
    std::cerr << "error: " << kinds[code] << ": " << one_line(e.what()) << '\n';
    return code;
  }
  return 0;
}
