#pragma once

// Shared fixtures: random sentences, a small model config, temporary
// directories and a synthetic TrecQA-style corpus written to disk.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "dfgn/pipeline.hpp"

namespace dfgn::testing {

inline Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0,
                            bool requires_grad = false) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return Tensor::from({rows, cols}, std::move(v), requires_grad);
}

// `live` leading rows are unmasked; the rest are padding filled with noise so
// that leaks show up.
inline Sentence random_sentence(Rng& rng, std::size_t len, std::size_t live, std::size_t d) {
  Mask m(len, false);
  for (std::size_t i = 0; i < live; ++i) m[i] = true;
  return {random_matrix(rng, len, d), std::move(m)};
}

// A model small enough for gradient checks and quick training.
inline RunConfig small_config(std::size_t d = 6) {
  RunConfig c;
  c.embedding_dim = d;
  c.question_max_len = 5;
  c.answer_max_len = 7;
  c.candidates = 4;
  c.batch_size = 4;
  c.conv_windows = {1, 2, 3};
  c.conv_filters = 4;
  c.mlp_hidden = 5;
  c.dropout = 0.0;
  c.epochs = 1;
  c.checkpoint_path = "";
  return c;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dfgn-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Topic-matching corpus: each question names a topic word; positives repeat
// it with question words, negatives draw from other topics.
struct SyntheticSpec {
  std::size_t questions = 20;
  std::size_t candidates = 4;
  std::size_t topics = 40;
  std::size_t filler = 30;
  std::uint64_t seed = 7;
  bool random_labels = false;  // labels independent of content
};

inline std::vector<CandidateGroup> synthetic_groups(const SyntheticSpec& spec) {
  Rng rng(spec.seed);
  auto topic = [](std::size_t k) { return "topic" + std::to_string(k); };
  auto filler = [&] { return "w" + std::to_string(rng.below(spec.filler)); };
  std::vector<CandidateGroup> out;
  for (std::size_t qi = 0; qi < spec.questions; ++qi) {
    const auto t = qi % spec.topics;
    CandidateGroup g;
    g.question_id = "q" + std::to_string(qi);
    g.question = {"what", topic(t), filler(), filler()};
    const std::size_t pos_at = rng.below(spec.candidates);
    for (std::size_t c = 0; c < spec.candidates; ++c) {
      Candidate cand;
      cand.source_id = g.question_id + "-" + std::to_string(c);
      const bool positive = spec.random_labels ? rng.uniform() < 0.3 || c == pos_at : c == pos_at;
      std::size_t other = (t + 1 + rng.below(spec.topics - 1)) % spec.topics;
      cand.tokens = {positive && !spec.random_labels ? topic(t) : topic(other), filler(), filler(),
                     filler(), filler()};
      cand.label = positive ? 1 : 0;
      g.candidates.push_back(std::move(cand));
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline std::string to_trecqa_tsv(const std::vector<CandidateGroup>& groups) {
  std::string text;
  for (const auto& g : groups)
    for (const auto& c : g.candidates)
      text += g.question_id + "\t" + join(g.question) + "\t" + join(c.tokens) + "\t" +
              std::to_string(c.label) + "\n";
  return text;
}

inline std::string random_embeddings(const std::unordered_set<std::string>& vocab, std::size_t d,
                                     std::uint64_t seed) {
  std::vector<std::string> words(vocab.begin(), vocab.end());
  std::sort(words.begin(), words.end());
  Rng rng(seed);
  std::string text;
  for (const auto& w : words) {
    text += w;
    for (std::size_t k = 0; k < d; ++k) {
      char buf[32];
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, rng.uniform(-1.0, 1.0));
      text.push_back(' ');
      text.append(buf, end);
    }
    text.push_back('\n');
  }
  return text;
}

// Writes train/dev/test TSVs plus embeddings under `dir` and returns a config
// pointing at them.
inline RunConfig write_synthetic_corpus(const TempDir& dir, const RunConfig& base,
                                        SyntheticSpec train_spec, std::size_t dev_questions,
                                        std::size_t test_questions) {
  auto train = synthetic_groups(train_spec);
  auto spec = train_spec;
  spec.seed = mix_seed(train_spec.seed, 1);
  spec.questions = dev_questions;
  auto dev = synthetic_groups(spec);
  spec.seed = mix_seed(train_spec.seed, 2);
  spec.questions = test_questions;
  auto test = synthetic_groups(spec);
  auto vocab = vocabulary(train);
  for (const auto* s : {&dev, &test}) {
    auto v = vocabulary(*s);
    vocab.insert(v.begin(), v.end());
  }
  write_file(dir.file("train.tsv"), to_trecqa_tsv(train));
  write_file(dir.file("dev.tsv"), to_trecqa_tsv(dev));
  write_file(dir.file("test.tsv"), to_trecqa_tsv(test));
  write_file(dir.file("emb.txt"), random_embeddings(vocab, base.embedding_dim, train_spec.seed + 99));
  RunConfig c = base;
  c.format = "trecqa";
  c.train_path = dir.file("train.tsv");
  c.dev_path = dev_questions ? dir.file("dev.tsv") : "";
  c.test_path = test_questions ? dir.file("test.tsv") : "";
  c.embedding_path = dir.file("emb.txt");
  return c;
}

}  // namespace dfgn::testing
