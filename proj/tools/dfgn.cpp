// dfgn: train, evaluate, ablate and inspect answer-selection models.
//
// Exit codes: 0 success, 1 bad input (config, data, flags), 2 runtime failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dfgn/pipeline.hpp"

namespace {

constexpr int kInputError = 1;
constexpr int kRuntimeError = 2;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string split = "dev";
  std::vector<std::string> presets;
  std::string out;
  std::string question;
  std::string answer;
};

dfgn::RunConfig resolve_config(const Options& o) {
  dfgn::RunConfig cfg = o.config_path.empty() ? dfgn::RunConfig{} : dfgn::load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.checkpoint.empty()) cfg.checkpoint_path = o.checkpoint;
  dfgn::validate(cfg);
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw dfgn::IoError("cannot write " + path);
  out << text;
  if (!out) throw dfgn::IoError("failed while writing " + path);
}

// Log lines go to stderr and, when configured, to cfg.log_path.
class RunLog {
 public:
  explicit RunLog(const std::string& path) {
    if (path.empty()) return;
    file_.open(path, std::ios::trunc);
    if (!file_) throw dfgn::IoError("cannot write log " + path);
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cerr; }

 private:
  std::ofstream file_;
};

int cmd_train(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto corpus = dfgn::load_corpus(cfg);
  RunLog log(cfg.log_path);
  const auto result = dfgn::train(cfg, corpus, &log.stream());
  std::cerr << "best epoch " << result.best_epoch << ", checkpoint " << cfg.checkpoint_path << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto ckpt = dfgn::load_checkpoint(cfg.checkpoint_path);
  const auto model = dfgn::model_from_checkpoint(cfg, ckpt);
  const auto corpus = dfgn::load_corpus(cfg);
  const auto& groups = dfgn::split_groups(corpus, o.split);
  if (groups.empty()) throw dfgn::ConfigError("split '" + o.split + "' has no questions");
  const auto report = dfgn::evaluate(model, dfgn::prepare_groups(groups, corpus.table, cfg));
  const std::string out = o.out.empty() ? cfg.report_path : o.out;
  write_text(out, dfgn::to_json(report).dump(2) + "\n");
  std::cerr << o.split << ": MAP " << report.map << " MRR " << report.mrr << " P@1 " << report.p_at_1
            << " (" << report.evaluated << " evaluated, " << report.excluded_no_positive
            << " without a positive answer)\n";
  return 0;
}

int cmd_ablate(const Options& o) {
  const auto cfg = resolve_config(o);
  std::vector<std::string> names = o.presets;
  if (names.empty())
    for (const auto& p : dfgn::presets()) names.emplace_back(p.name);
  for (const auto& n : names) dfgn::find_preset(n);
  const auto corpus = dfgn::load_corpus(cfg);
  RunLog log(cfg.log_path);
  const auto rows = dfgn::run_ablation(cfg, corpus, names, &log.stream());
  write_text(o.out, dfgn::format_ablation_table(rows));
  return 0;
}

int cmd_inspect(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto q = dfgn::tokenize(o.question);
  const auto a = dfgn::tokenize(o.answer);
  if (q.empty()) throw dfgn::ConfigError("question text has no tokens");
  if (a.empty()) throw dfgn::ConfigError("answer text has no tokens");
  const auto ckpt = dfgn::load_checkpoint(cfg.checkpoint_path);
  const auto model = dfgn::model_from_checkpoint(cfg, ckpt);
  std::unordered_set<std::string> keep(q.begin(), q.end());
  keep.insert(a.begin(), a.end());
  const auto table =
      dfgn::load_embeddings(dfgn::resolve_data_path(cfg.embedding_path), cfg.embedding_dim, &keep);
  const auto dump = dfgn::dump_attention(model, table, cfg, q, a);
  write_text(o.out, dump.dump(2) + "\n");
  return 0;
}

int cmd_config(const Options& o) {
  write_text(o.out, dfgn::to_text(resolve_config(o)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Answer selection: train, evaluate, ablate and inspect ranking models"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the configured seed");
    sub->add_option("--checkpoint", o.checkpoint, "override checkpoint_path");
    sub->add_option("--out", o.out, "output file (stdout when omitted)");
  };
  auto* train = app.add_subcommand("train", "train and keep the best-dev checkpoint");
  common(train);
  auto* eval = app.add_subcommand("eval", "score a split with a checkpoint");
  common(eval);
  eval->add_option("--split", o.split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  auto* ablate = app.add_subcommand("ablate", "train and compare ablation presets");
  common(ablate);
  ablate->add_option("--preset", o.presets, "preset name (repeatable; default all)");
  auto* inspect = app.add_subcommand("inspect", "dump attention weights for one pair");
  common(inspect);
  inspect->add_option("--question", o.question, "question text")->required();
  inspect->add_option("--answer", o.answer, "answer text")->required();
  auto* config = app.add_subcommand("config", "print the effective config (defaults when no --config)");
  common(config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kInputError;
  }

  try {
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*ablate) return cmd_ablate(o);
    if (*inspect) return cmd_inspect(o);
    if (*config) return cmd_config(o);
  } catch (const dfgn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kInputError;
  } catch (const dfgn::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kInputError;
  } catch (const dfgn::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kRuntimeError;
}
