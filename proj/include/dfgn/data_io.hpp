#pragma once

// Embedding tables, dataset readers, padding, and listwise training batches.
//
// Dataset layouts
//   wikiqa_tsv      Tab-separated with a header row. Columns are located by
//                   name: QuestionID, Question, SentenceID, Sentence, Label
//                   (extra columns such as DocumentTitle are ignored).
//   trecqa          Either a directory holding a.toks, b.toks, sim.txt and
//                   id.txt (one question, answer, label, question id per line)
//                   or a headerless TSV file with rows
//                   `question<TAB>answer<TAB>label` or
//                   `qid<TAB>question<TAB>answer<TAB>label`. Without a qid
//                   column, rows are grouped by question text.
//   insuranceqa_v1  Path to one question file of the public V1 release; the
//                   same directory must hold `vocabulary` (idx_N<TAB>word) and
//                   `answers.label.token_idx` (answer id<TAB>idx_a idx_b ...).
//                   Train files have rows `question idx tokens<TAB>answer ids`,
//                   dev/test pool files `answer ids<TAB>question tokens<TAB>pool ids`.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dfgn/config.hpp"
#include "dfgn/errors.hpp"
#include "dfgn/feature_gen.hpp"
#include "dfgn/random.hpp"

namespace dfgn {

using Tokens = std::vector<std::string>;

// Lowercase, split on whitespace, strip punctuation around each token.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    std::size_t b = 0, e = cur.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(cur[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1]))) --e;
    if (e > b) out.push_back(cur.substr(b, e - b));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

inline std::string join(std::span<const std::string> tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Embeddings

inline constexpr std::size_t kPadId = 0;

class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim) : dim_(dim), vectors_(dim, 0.0) {
    tokens_.push_back("<pad>");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t skipped_lines() const { return skipped_lines_; }

  // Adds a row; returns false if the token is already present.
  bool add(const std::string& token, std::span<const double> v) {
    if (v.size() != dim_) throw DimensionError("embedding row has wrong dimension");
    if (index_.count(token)) return false;
    index_.emplace(token, tokens_.size());
    tokens_.push_back(token);
    vectors_.insert(vectors_.end(), v.begin(), v.end());
    return true;
  }

  std::optional<std::size_t> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // OOV tokens share the zero vector of the padding row.
  std::size_t id(const std::string& token) const { return find(token).value_or(kPadId); }

  std::span<const double> row(std::size_t id) const {
    return {vectors_.data() + id * dim_, dim_};
  }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }

  void note_skipped_line() { ++skipped_lines_; }

 private:
  std::size_t dim_;
  std::vector<double> vectors_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t skipped_lines_ = 0;
};

// Reads `token v1 ... v_dim` lines. With `keep`, tokens outside it are not
// stored. Blank lines and repeated tokens are skipped and counted.
inline EmbeddingTable load_embeddings(const std::string& path, std::size_t dim,
                                      const std::unordered_set<std::string>* keep = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embedding file " + path);
  EmbeddingTable table(dim);
  std::string line;
  std::vector<double> values(dim);
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find(' ');
    if (line.find_first_not_of(" \t") == std::string::npos) {
      table.note_skipped_line();
      continue;
    }
    if (first == std::string::npos) throw ParseError(path, n, "expected " + std::to_string(dim) + " values, got 0");
    std::string token = line.substr(0, first);
    if (keep && !keep->count(token)) continue;
    const char* p = line.data() + first;
    const char* end = line.data() + line.size();
    std::size_t count = 0;
    while (true) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p == end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) throw ParseError(path, n, "non-numeric embedding value");
      if (count < dim) values[count] = v;
      ++count;
      p = next;
    }
    if (count != dim)
      throw ParseError(path, n,
                       "expected " + std::to_string(dim) + " values, got " + std::to_string(count));
    if (!table.add(token, values)) table.note_skipped_line();
  }
  return table;
}

// ---------------------------------------------------------------------------
// Candidate groups

struct Candidate {
  Tokens tokens;
  int label = 0;
  std::string source_id;
};

struct CandidateGroup {
  std::string question_id;
  Tokens question;
  std::vector<Candidate> candidates;

  std::size_t positives() const {
    return static_cast<std::size_t>(std::count_if(
        candidates.begin(), candidates.end(), [](const Candidate& c) { return c.label == 1; }));
  }
  bool has_negative() const { return positives() < candidates.size(); }
};

enum class DatasetFormat { kWikiQaTsv, kTrecQa, kInsuranceQaV1 };

inline DatasetFormat parse_format(const std::string& s) {
  if (s == "wikiqa_tsv") return DatasetFormat::kWikiQaTsv;
  if (s == "trecqa") return DatasetFormat::kTrecQa;
  if (s == "insuranceqa_v1") return DatasetFormat::kInsuranceQaV1;
  throw ConfigError("unknown dataset format '" + s + "'");
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto t = line.find('\t', start);
    out.push_back(line.substr(start, t == std::string::npos ? std::string::npos : t - start));
    if (t == std::string::npos) break;
    start = t + 1;
  }
  return out;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

inline int parse_label(const std::string& path, std::size_t line, std::string s) {
  s = trim(s);
  if (s == "0") return 0;
  if (s == "1") return 1;
  // Some releases write labels as reals.
  if (s == "0.0") return 0;
  if (s == "1.0") return 1;
  throw ParseError(path, line, "label must be 0 or 1, got '" + s + "'");
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

// Appends to the group keyed by `key`, creating it in first-seen order.
class GroupBuilder {
 public:
  CandidateGroup& group(const std::string& key, const Tokens& question) {
    auto it = index_.find(key);
    if (it != index_.end()) return groups_[it->second];
    index_.emplace(key, groups_.size());
    groups_.push_back({key, question, {}});
    return groups_.back();
  }
  std::vector<CandidateGroup> take() { return std::move(groups_); }

 private:
  std::vector<CandidateGroup> groups_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline std::vector<CandidateGroup> parse_wikiqa(const std::string& path) {
  auto lines = read_lines(path);
  if (lines.empty()) return {};
  const auto header = split_tabs(lines[0]);
  auto col = [&](const char* name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(path, 1, std::string("missing column ") + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto qid = col("QuestionID"), qtext = col("Question"), sid = col("SentenceID"),
             stext = col("Sentence"), lab = col("Label");
  GroupBuilder groups;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split_tabs(lines[i]);
    if (cells.size() != header.size())
      throw ParseError(path, i + 1,
                       "expected " + std::to_string(header.size()) + " columns, got " +
                           std::to_string(cells.size()));
    auto& g = groups.group(cells[qid], tokenize(cells[qtext]));
    g.candidates.push_back({tokenize(cells[stext]), parse_label(path, i + 1, cells[lab]), cells[sid]});
  }
  return groups.take();
}

inline std::vector<CandidateGroup> parse_trecqa_dir(const std::filesystem::path& dir) {
  const auto a = read_lines((dir / "a.toks").string());
  const auto b = read_lines((dir / "b.toks").string());
  const auto sim = read_lines((dir / "sim.txt").string());
  const auto ids = read_lines((dir / "id.txt").string());
  if (a.size() != b.size() || a.size() != sim.size() || a.size() != ids.size())
    throw ParseError((dir / "sim.txt").string(), std::min({a.size(), b.size(), sim.size(), ids.size()}) + 1,
                     "a.toks, b.toks, sim.txt and id.txt differ in length");
  GroupBuilder groups;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto& g = groups.group(trim(ids[i]), tokenize(a[i]));
    g.candidates.push_back({tokenize(b[i]), parse_label((dir / "sim.txt").string(), i + 1, sim[i]),
                            std::to_string(i)});
  }
  return groups.take();
}

inline std::vector<CandidateGroup> parse_trecqa_tsv(const std::string& path) {
  const auto lines = read_lines(path);
  GroupBuilder groups;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split_tabs(lines[i]);
    if (cells.size() != 3 && cells.size() != 4)
      throw ParseError(path, i + 1, "expected 3 or 4 columns, got " + std::to_string(cells.size()));
    const bool has_id = cells.size() == 4;
    const auto& q = cells[has_id ? 1 : 0];
    auto& g = groups.group(has_id ? cells[0] : q, tokenize(q));
    g.candidates.push_back({tokenize(cells[has_id ? 2 : 1]),
                            parse_label(path, i + 1, cells[has_id ? 3 : 2]), std::to_string(i)});
  }
  return groups.take();
}

inline std::vector<CandidateGroup> parse_insuranceqa(const std::filesystem::path& question_file) {
  const auto dir = question_file.parent_path();
  std::unordered_map<std::string, std::string> vocab;
  {
    const auto path = (dir / "vocabulary").string();
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto cells = split_tabs(lines[i]);
      if (cells.size() != 2) throw ParseError(path, i + 1, "expected idx<TAB>word");
      vocab[cells[0]] = cells[1];
    }
  }
  auto words = [&](const std::string& path, std::size_t line, const std::string& idxs) {
    std::string text;
    for (const auto& w : split_ws(idxs)) {
      auto it = vocab.find(w);
      if (it == vocab.end()) throw ParseError(path, line, "unknown vocabulary index " + w);
      text += it->second;
      text.push_back(' ');
    }
    return tokenize(text);
  };
  std::unordered_map<std::string, Tokens> answers;
  {
    const auto path = (dir / "answers.label.token_idx").string();
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto cells = split_tabs(lines[i]);
      if (cells.size() != 2) throw ParseError(path, i + 1, "expected answer id<TAB>tokens");
      answers[trim(cells[0])] = words(path, i + 1, cells[1]);
    }
  }
  const auto path = question_file.string();
  const auto lines = read_lines(path);
  std::vector<CandidateGroup> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = split_tabs(lines[i]);
    CandidateGroup g;
    g.question_id = std::to_string(out.size());
    auto answer = [&](const std::string& id) -> const Tokens& {
      auto it = answers.find(id);
      if (it == answers.end()) throw ParseError(path, i + 1, "unknown answer id " + id);
      return it->second;
    };
    if (cells.size() == 2) {
      g.question = words(path, i + 1, cells[0]);
      for (const auto& id : split_ws(cells[1])) g.candidates.push_back({answer(id), 1, id});
    } else if (cells.size() == 3) {
      g.question = words(path, i + 1, cells[1]);
      const auto truth = split_ws(cells[0]);
      const std::set<std::string> gt(truth.begin(), truth.end());
      for (const auto& id : split_ws(cells[2]))
        g.candidates.push_back({answer(id), gt.count(id) ? 1 : 0, id});
    } else {
      throw ParseError(path, i + 1, "expected 2 or 3 tab-separated columns");
    }
    if (g.candidates.empty()) throw ParseError(path, i + 1, "question without candidates");
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace detail

inline std::vector<CandidateGroup> parse_dataset(const std::string& path, DatasetFormat format) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw IoError("dataset path does not exist: " + path);
  switch (format) {
    case DatasetFormat::kWikiQaTsv:
      return detail::parse_wikiqa(path);
    case DatasetFormat::kTrecQa:
      return fs::is_directory(path) ? detail::parse_trecqa_dir(path) : detail::parse_trecqa_tsv(path);
    case DatasetFormat::kInsuranceQaV1:
      return detail::parse_insuranceqa(path);
  }
  return {};
}

// Questions with at least one positive candidate.
inline std::size_t count_answerable(std::span<const CandidateGroup> groups) {
  return static_cast<std::size_t>(std::count_if(
      groups.begin(), groups.end(), [](const CandidateGroup& g) { return g.positives() > 0; }));
}

// Questions with at least one positive and one negative candidate.
inline std::size_t count_mixed(std::span<const CandidateGroup> groups) {
  return static_cast<std::size_t>(std::count_if(groups.begin(), groups.end(), [](const CandidateGroup& g) {
    return g.positives() > 0 && g.has_negative();
  }));
}

// Distinct candidate sentences of a split, in first-seen order.
inline std::vector<Tokens> answer_pool(std::span<const CandidateGroup> groups) {
  std::vector<Tokens> pool;
  std::unordered_set<std::string> seen;
  for (const auto& g : groups)
    for (const auto& c : g.candidates)
      if (seen.insert(join(c.tokens)).second) pool.push_back(c.tokens);
  return pool;
}

inline std::unordered_set<std::string> vocabulary(std::span<const CandidateGroup> groups) {
  std::unordered_set<std::string> v;
  for (const auto& g : groups) {
    v.insert(g.question.begin(), g.question.end());
    for (const auto& c : g.candidates) v.insert(c.tokens.begin(), c.tokens.end());
  }
  return v;
}

// ---------------------------------------------------------------------------
// Padding

struct PaddedSentence {
  std::vector<std::size_t> ids;
  Mask mask;
};

// Truncates to `max_len` and pads with the zero row. An empty token list
// becomes a single live OOV slot so that every sentence has a live position.
inline PaddedSentence pad_sentence(std::span<const std::string> tokens, const EmbeddingTable& table,
                                   std::size_t max_len) {
  PaddedSentence s{std::vector<std::size_t>(max_len, kPadId), Mask(max_len, false)};
  const std::size_t n = std::min(tokens.size(), max_len);
  for (std::size_t i = 0; i < n; ++i) {
    s.ids[i] = table.id(tokens[i]);
    s.mask[i] = true;
  }
  if (n == 0) s.mask[0] = true;
  return s;
}

inline Sentence embed(const PaddedSentence& s, const EmbeddingTable& table) {
  const std::size_t d = table.dim();
  std::vector<double> v(s.ids.size() * d);
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    auto row = table.row(s.ids[i]);
    std::copy(row.begin(), row.end(), v.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return {Tensor::from({s.ids.size(), d}, std::move(v)), s.mask};
}

// ---------------------------------------------------------------------------
// Training batches

struct PaddedBatch {
  std::size_t candidates = 0;  // N per group
  std::vector<PaddedSentence> questions;  // one per kept group
  std::vector<PaddedSentence> answers;    // groups x N, row-major
  std::vector<int> labels;                // groups x N
  std::vector<double> targets;            // groups x N, rows sum to 1
  std::vector<std::size_t> source;        // index of each kept group in the input
  std::size_t skipped_no_positive = 0;

  std::size_t groups() const { return questions.size(); }
};

// Per group: every positive (at most N) plus N - p negatives. Negatives come
// from the group's own negatives first, then from `pool` sentences that are
// not among the group's positives, all drawn with the seeded generator.
inline PaddedBatch make_training_batch(std::span<const CandidateGroup> groups,
                                       std::span<const Tokens> pool, const EmbeddingTable& table,
                                       const RunConfig& cfg, std::uint64_t seed) {
  const std::size_t n = cfg.candidates;
  Rng rng(seed);
  PaddedBatch b;
  b.candidates = n;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    std::vector<const Tokens*> pos, neg;
    for (const auto& c : g.candidates) (c.label == 1 ? pos : neg).push_back(&c.tokens);
    if (pos.empty()) {
      ++b.skipped_no_positive;
      continue;
    }
    if (pos.size() > n) pos.resize(n);
    const std::size_t want = n - pos.size();
    rng.shuffle(neg);
    std::vector<const Tokens*> chosen(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(std::min(want, neg.size())));
    if (chosen.size() < want) {
      std::unordered_set<std::string> positives;
      for (const auto* p : pos) positives.insert(join(*p));
      // Rejection sampling; a pool made only of this group's positives falls
      // back to repeating its own negatives.
      constexpr int kAttempts = 64;
      while (chosen.size() < want) {
        const Tokens* pick = nullptr;
        for (int a = 0; a < kAttempts && !pool.empty() && !pick; ++a) {
          const auto& t = pool[rng.below(pool.size())];
          if (!positives.count(join(t))) pick = &t;
        }
        if (!pick) {
          if (neg.empty())
            throw ContractError("no negative answers available for question " + g.question_id);
          pick = neg[rng.below(neg.size())];
        }
        chosen.push_back(pick);
      }
    }
    b.questions.push_back(pad_sentence(g.question, table, cfg.question_max_len));
    for (const auto* p : pos) {
      b.answers.push_back(pad_sentence(*p, table, cfg.answer_max_len));
      b.labels.push_back(1);
      b.targets.push_back(1.0 / static_cast<double>(pos.size()));
    }
    for (const auto* c : chosen) {
      b.answers.push_back(pad_sentence(*c, table, cfg.answer_max_len));
      b.labels.push_back(0);
      b.targets.push_back(0.0);
    }
    b.source.push_back(gi);
  }
  return b;
}

}  // namespace dfgn
