#pragma once

// End-to-end runs: loading a configured corpus, listwise training with
// best-dev checkpointing, evaluation, ablation sweeps and attention dumps.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "dfgn/checkpoint.hpp"
#include "dfgn/data_io.hpp"
#include "dfgn/eval_metrics.hpp"
#include "dfgn/model.hpp"
#include "dfgn/optimizer.hpp"

namespace dfgn {

inline constexpr const char* kDataRootEnv = "DFGN_DATA_ROOT";

// Relative paths resolve against $DFGN_DATA_ROOT when it is set.
inline std::string resolve_data_path(const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  if (const char* root = std::getenv(kDataRootEnv); root && *root)
    return (std::filesystem::path(root) / path).string();
  return p;
}

struct Corpus {
  EmbeddingTable table{1};
  std::vector<CandidateGroup> train;
  std::vector<CandidateGroup> dev;
  std::vector<CandidateGroup> test;
  std::vector<Tokens> pool;  // training answer pool for negative sampling
};

// Parses every configured split, then loads embeddings restricted to the
// corpus vocabulary.
inline Corpus load_corpus(const RunConfig& cfg) {
  validate(cfg);
  const auto emb = resolve_data_path(cfg.embedding_path);
  if (emb.empty()) throw ConfigError("embedding_path is not set");
  if (!std::filesystem::exists(emb)) throw IoError("embedding file not found: " + emb);
  const auto format = parse_format(cfg.format);
  Corpus c;
  auto load = [&](const std::string& p) {
    return p.empty() ? std::vector<CandidateGroup>{} : parse_dataset(resolve_data_path(p), format);
  };
  c.train = load(cfg.train_path);
  c.dev = load(cfg.dev_path);
  c.test = load(cfg.test_path);
  std::unordered_set<std::string> vocab = vocabulary(c.train);
  for (const auto* split : {&c.dev, &c.test}) {
    auto v = vocabulary(*split);
    vocab.insert(v.begin(), v.end());
  }
  c.table = load_embeddings(emb, cfg.embedding_dim, &vocab);
  c.pool = answer_pool(c.train);
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation

struct PreparedGroup {
  std::string id;
  Tokens question_tokens;
  Sentence question;
  std::vector<Sentence> candidates;
  std::vector<int> labels;
};

inline PreparedGroup prepare_group(const CandidateGroup& g, const EmbeddingTable& table,
                                   const RunConfig& cfg) {
  PreparedGroup p;
  p.id = g.question_id;
  p.question_tokens = g.question;
  p.question = embed(pad_sentence(g.question, table, cfg.question_max_len), table);
  for (const auto& c : g.candidates) {
    p.candidates.push_back(embed(pad_sentence(c.tokens, table, cfg.answer_max_len), table));
    p.labels.push_back(c.label);
  }
  return p;
}

inline std::vector<PreparedGroup> prepare_groups(std::span<const CandidateGroup> groups,
                                                 const EmbeddingTable& table, const RunConfig& cfg) {
  std::vector<PreparedGroup> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(prepare_group(g, table, cfg));
  return out;
}

inline std::vector<double> score_candidates(const DfgnModel& model, const PreparedGroup& g) {
  NoGradGuard no_grad;
  std::vector<double> s;
  s.reserve(g.candidates.size());
  for (const auto& c : g.candidates) s.push_back(model.score(g.question, c, false, 0).item());
  return s;
}

inline EvalReport evaluate(const DfgnModel& model, std::span<const PreparedGroup> groups) {
  std::vector<ScoredQuestion> scored;
  scored.reserve(groups.size());
  for (const auto& g : groups)
    scored.push_back({g.id, g.question_tokens, {score_candidates(model, g), g.labels}});
  return make_report(scored);
}

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> dev_map;
  std::optional<double> dev_mrr;
};

inline std::string format_epoch(const EpochLog& e) {
  std::ostringstream os;
  os << std::setprecision(10) << "epoch=" << e.epoch << " loss=" << e.train_loss;
  if (e.dev_map) os << " dev_map=" << *e.dev_map << " dev_mrr=" << *e.dev_mrr;
  return os.str();
}

class Trainer {
 public:
  Trainer(RunConfig cfg, const EmbeddingTable& table, std::span<const CandidateGroup> train,
          std::vector<Tokens> pool)
      : cfg_(std::move(cfg)),
        table_(table),
        model_(cfg_, cfg_.seed),
        state_(OptimizerState::for_params(model_.params(), AdamSettings::from(cfg_))),
        pool_(std::move(pool)) {
    if (table.dim() != cfg_.embedding_dim)
      throw ConfigError("embedding table has dimension " + std::to_string(table.dim()) +
                        " but embedding_dim is " + std::to_string(cfg_.embedding_dim));
    for (const auto& g : train) {
      if (g.positives() > 0)
        train_.push_back(g);
      else
        ++skipped_;
    }
    if (train_.empty()) throw ConfigError("training split has no question with a positive answer");
  }

  // One pass over the training questions; returns the mean group loss.
  double run_epoch() {
    ++epoch_;
    std::vector<std::size_t> order(train_.size());
    std::iota(order.begin(), order.end(), 0);
    Rng(mix_seed(cfg_.seed, 0x1000 + epoch_)).shuffle(order);
    double total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      std::vector<CandidateGroup> groups;
      for (std::size_t i = start; i < end; ++i) groups.push_back(train_[order[i]]);
      const auto batch_seed = mix_seed(mix_seed(cfg_.seed, epoch_), batch_no);
      auto batch = make_training_batch(groups, pool_, table_, cfg_, batch_seed);
      const double inv = 1.0 / static_cast<double>(batch.groups());
      const std::size_t n = batch.candidates;
      for (std::size_t b = 0; b < batch.groups(); ++b) {
        auto q = embed(batch.questions[b], table_);
        std::vector<Sentence> cands;
        for (std::size_t k = 0; k < n; ++k) cands.push_back(embed(batch.answers[b * n + k], table_));
        std::span<const int> labels(batch.labels.data() + b * n, n);
        auto loss = model_.group_loss(q, cands, labels, true, mix_seed(batch_seed, 0x5000 + b));
        total += loss.item();
        // Mean over the batch, accumulated one group at a time.
        backward(scale(loss, inv));
      }
      optimizer_step(state_, model_.params());
    }
    return total / static_cast<double>(train_.size());
  }

  const DfgnModel& model() const { return model_; }
  DfgnModel& model() { return model_; }
  const OptimizerState& state() const { return state_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t skipped_groups() const { return skipped_; }
  const std::vector<CandidateGroup>& train_groups() const { return train_; }
  const RunConfig& config() const { return cfg_; }

 private:
  RunConfig cfg_;
  const EmbeddingTable& table_;
  DfgnModel model_;
  OptimizerState state_;
  std::vector<Tokens> pool_;
  std::vector<CandidateGroup> train_;
  std::size_t skipped_ = 0;
  std::size_t epoch_ = 0;
};

struct TrainResult {
  DfgnModel model;  // best-dev parameters (last epoch without a dev split)
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// Runs cfg.epochs epochs, keeping the parameters with the best dev MAP (ties
// keep the earlier epoch). The checkpoint is written to cfg.checkpoint_path
// whenever it improves, unless the path is empty.
inline TrainResult train(const RunConfig& cfg, const Corpus& corpus, std::ostream* log = nullptr) {
  Trainer trainer(cfg, corpus.table, corpus.train, corpus.pool);
  if (log && trainer.skipped_groups())
    *log << "warning: skipped " << trainer.skipped_groups()
         << " training questions without a positive answer\n";
  const auto dev = prepare_groups(corpus.dev, corpus.table, cfg);
  std::optional<TrainResult> best;
  double best_map = -std::numeric_limits<double>::infinity();
  std::vector<EpochLog> history;
  auto save = [&](std::size_t epoch) {
    auto ckpt = make_checkpoint(cfg, trainer.model().params(), trainer.state(), epoch);
    if (!cfg.checkpoint_path.empty()) save_checkpoint(ckpt, cfg.checkpoint_path);
    best = TrainResult{trainer.model(), std::move(ckpt), {}, epoch};
  };
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    EpochLog entry;
    entry.train_loss = trainer.run_epoch();
    entry.epoch = trainer.epoch();
    if (!dev.empty()) {
      auto report = evaluate(trainer.model(), dev);
      entry.dev_map = report.map;
      entry.dev_mrr = report.mrr;
      if (report.map > best_map) {
        best_map = report.map;
        save(entry.epoch);
      }
    }
    if (log) *log << format_epoch(entry) << '\n' << std::flush;
    history.push_back(entry);
  }
  if (dev.empty() || !best) save(trainer.epoch());
  best->log = std::move(history);
  return std::move(*best);
}

// ---------------------------------------------------------------------------
// Checkpoint-backed evaluation

inline DfgnModel model_from_checkpoint(const RunConfig& cfg, const Checkpoint& ckpt) {
  if (ckpt.config_hash != config_hash(cfg))
    throw ConfigError("checkpoint was trained with a different model configuration (hash " +
                      std::to_string(ckpt.config_hash) + ", config gives " +
                      std::to_string(config_hash(cfg)) + ")");
  DfgnModel model(cfg, cfg.seed);
  restore(ckpt, model.params());
  return model;
}

inline const std::vector<CandidateGroup>& split_groups(const Corpus& c, const std::string& split) {
  if (split == "train") return c.train;
  if (split == "dev") return c.dev;
  if (split == "test") return c.test;
  throw ConfigError("unknown split '" + split + "' (expected train, dev or test)");
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string preset;
  std::string label;
  std::size_t parameters = 0;
  double map = 0.0;
  double mrr = 0.0;
};

inline RunConfig with_preset(RunConfig cfg, const Preset& p) {
  cfg.ablation = p.switches;
  if (!cfg.checkpoint_path.empty() && std::string(p.name) != "full")
    cfg.checkpoint_path += std::string(".") + p.name;
  return cfg;
}

// Trains each preset with the same seed and scores it on the test split
// (dev when there is no test split).
inline std::vector<AblationRow> run_ablation(const RunConfig& cfg, const Corpus& corpus,
                                             const std::vector<std::string>& names,
                                             std::ostream* log = nullptr) {
  std::vector<const Preset*> chosen;
  for (const auto& n : names) chosen.push_back(&find_preset(n));
  const auto& eval_split = corpus.test.empty() ? corpus.dev : corpus.test;
  std::vector<AblationRow> rows;
  for (const auto* p : chosen) {
    auto run_cfg = with_preset(cfg, *p);
    if (log) *log << "preset " << p->name << '\n';
    auto result = train(run_cfg, corpus, log);
    AblationRow row{p->name, p->label, result.model.params().element_count(), 0.0, 0.0};
    if (!eval_split.empty()) {
      auto report = evaluate(result.model, prepare_groups(eval_split, corpus.table, run_cfg));
      row.map = report.map;
      row.mrr = report.mrr;
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(36) << "Setting" << std::right << std::setw(8) << "MAP"
     << std::setw(8) << "MRR" << std::setw(12) << "Params" << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& r : rows)
    os << std::left << std::setw(36) << r.label << std::right << std::setw(8) << r.map
       << std::setw(8) << r.mrr << std::setw(12) << r.parameters << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Attention inspection

namespace detail {

inline std::vector<std::size_t> live_indices(const Mask& m) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) idx.push_back(i);
  return idx;
}

// Rows/cols of a [rows x cols] tensor restricted to live indices; `transposed`
// reads the tensor as its transpose.
inline nlohmann::json sub_matrix(const Tensor& t, const std::vector<std::size_t>& rows,
                                 const std::vector<std::size_t>& cols, bool transposed) {
  nlohmann::json out = nlohmann::json::array();
  for (auto r : rows) {
    nlohmann::json row = nlohmann::json::array();
    for (auto c : cols) row.push_back(transposed ? t.at(c, r) : t.at(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline std::vector<std::string> slot_labels(const Tokens& tokens, const Mask& word_mask,
                                            const FeatureToggles& on) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < word_mask.size(); ++i)
    if (word_mask[i]) labels.push_back(i < tokens.size() ? tokens[i] : "<oov>");
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    if (on.enabled(static_cast<FeatureSlot>(i))) labels.emplace_back(kFeatureNames[i]);
  return labels;
}

}  // namespace detail

// Second co-attention and extractive-pooling weights of one pair as JSON.
//
// second_coattention.question holds matrices over (answer slots x question
// slots): column j is the distribution over answer slots aligned to question
// slot j. second_coattention.answer is the mirror image. Padded positions are
// dropped; `common_*` blocks keep only word slots.
inline nlohmann::json dump_attention(const DfgnModel& model, const EmbeddingTable& table,
                                     const RunConfig& cfg, const Tokens& question,
                                     const Tokens& answer) {
  if (question.empty() || answer.empty())
    throw ContractError("question and answer must each contain at least one token");
  auto q = embed(pad_sentence(question, table, cfg.question_max_len), table);
  auto a = embed(pad_sentence(answer, table, cfg.answer_max_len), table);
  PairTrace trace;
  {
    NoGradGuard no_grad;
    model.score(q, a, false, 0, &trace);
  }
  const auto& on = model.wiring().features;
  const std::size_t q_words = std::min(question.size(), cfg.question_max_len);
  const std::size_t a_words = std::min(answer.size(), cfg.answer_max_len);
  const Tokens q_shown(question.begin(), question.begin() + static_cast<std::ptrdiff_t>(q_words));
  const Tokens a_shown(answer.begin(), answer.begin() + static_cast<std::ptrdiff_t>(a_words));

  nlohmann::json j;
  j["question_tokens"] = q_shown;
  j["answer_tokens"] = a_shown;
  j["question_slots"] = detail::slot_labels(q_shown, q.mask, on);
  j["answer_slots"] = detail::slot_labels(a_shown, a.mask, on);
  j["logit"] = trace.logit.item();

  const auto q_live = detail::live_indices(trace.question_augmented.mask);
  const auto a_live = detail::live_indices(trace.answer_augmented.mask);
  const auto q_common = detail::live_indices(q.mask);
  const auto a_common = detail::live_indices(a.mask);

  if (model.wiring().second_coattention) {
    auto side = [&](const ThresholdedAlignment& al, const Tensor& affinity,
                    const std::vector<std::size_t>& src, const std::vector<std::size_t>& tgt,
                    const std::vector<std::size_t>& src_c, const std::vector<std::size_t>& tgt_c) {
      nlohmann::json s;
      s["affinity"] = detail::sub_matrix(affinity, src, tgt, false);
      s["weights"] = detail::sub_matrix(al.weights, src, tgt, true);
      s["thresholds"] = detail::sub_matrix(al.thresholds, src, tgt, true);
      s["retained"] = detail::sub_matrix(al.retained, src, tgt, true);
      s["common_affinity"] = detail::sub_matrix(affinity, src_c, tgt_c, false);
      s["common_weights"] = detail::sub_matrix(al.weights, src_c, tgt_c, true);
      s["common_retained"] = detail::sub_matrix(al.retained, src_c, tgt_c, true);
      return s;
    };
    j["second_coattention"]["question"] =
        side(trace.question_alignment, trace.question_affinity, a_live, q_live, a_common, q_common);
    j["second_coattention"]["answer"] =
        side(trace.answer_alignment, trace.answer_affinity, q_live, a_live, q_common, a_common);
  } else {
    j["second_coattention"] = nullptr;
  }

  auto pools = [&](const AttentionFeatureSet& f, const std::vector<std::size_t>& live) {
    nlohmann::json p = nlohmann::json::object();
    for (std::size_t i = 0; i < f.pool_weights.size(); ++i) {
      if (!f.pool_weights[i].defined()) continue;
      nlohmann::json v = nlohmann::json::array();
      for (auto k : live) v.push_back(f.pool_weights[i].at(k));
      p[std::string(kFeatureNames[i])] = std::move(v);
    }
    return p;
  };
  j["extractive_pooling"]["question"] = pools(trace.question_features, q_common);
  j["extractive_pooling"]["answer"] = pools(trace.answer_features, a_common);
  return j;
}

// Structural problems of an inspection dump; empty when it is well formed.
inline std::vector<std::string> check_inspection(const nlohmann::json& j) {
  std::vector<std::string> problems;
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
    return ok;
  };
  for (const char* k : {"question_tokens", "answer_tokens", "question_slots", "answer_slots"})
    need(j.contains(k) && j[k].is_array(), std::string(k) + " must be an array");
  need(j.contains("logit") && j["logit"].is_number(), "logit must be a number");
  need(j.contains("second_coattention"), "second_coattention missing");
  need(j.contains("extractive_pooling") && j["extractive_pooling"].is_object(),
       "extractive_pooling must be an object");
  if (!problems.empty()) return problems;

  const auto nq = j["question_slots"].size(), na = j["answer_slots"].size();
  const auto cq = j["question_tokens"].size(), ca = j["answer_tokens"].size();
  auto matrix = [&](const nlohmann::json& m, std::size_t rows, std::size_t cols,
                    const std::string& name) {
    if (!need(m.is_array() && m.size() == rows, name + " must have " + std::to_string(rows) + " rows"))
      return;
    for (const auto& r : m) {
      if (!need(r.is_array() && r.size() == cols, name + " rows must have " + std::to_string(cols) + " entries"))
        return;
      for (const auto& v : r) need(v.is_number(), name + " entries must be numbers");
    }
  };
  const auto& sc = j["second_coattention"];
  if (!sc.is_null()) {
    for (const auto& [side, rows, cols, crow, ccol] :
         {std::tuple{"question", na, nq, ca, cq}, std::tuple{"answer", nq, na, cq, ca}}) {
      if (!need(sc.contains(side), std::string("second_coattention.") + side + " missing")) continue;
      const auto& s = sc[side];
      for (const char* k : {"affinity", "weights", "thresholds", "retained"})
        if (need(s.contains(k), std::string(side) + "." + k + " missing"))
          matrix(s[k], rows, cols, std::string(side) + "." + k);
      for (const char* k : {"common_affinity", "common_weights", "common_retained"})
        if (need(s.contains(k), std::string(side) + "." + k + " missing"))
          matrix(s[k], crow, ccol, std::string(side) + "." + k);
    }
  }
  for (const auto& [side, len] : {std::pair{"question", cq}, std::pair{"answer", ca}}) {
    if (!need(j["extractive_pooling"].contains(side), std::string("extractive_pooling.") + side + " missing"))
      continue;
    for (const auto& [name, v] : j["extractive_pooling"][side].items())
      need(v.is_array() && v.size() == len, "extractive_pooling." + std::string(side) + "." + name +
                                                " must have one weight per token");
  }
  return problems;
}

}  // namespace dfgn
