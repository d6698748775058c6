#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

namespace dfgn {
namespace {

using testing::TempDir;
using testing::write_file;

TEST(DataIo, TokenizeLowercasesAndStripsEdgePunctuation) {
  EXPECT_EQ(tokenize("What hormones, produce  \"thyroid\"?"),
            (Tokens{"what", "hormones", "produce", "thyroid"}));
  EXPECT_EQ(tokenize("U.S. don't -- ok"), (Tokens{"u.s", "don't", "ok"}));
  EXPECT_TRUE(tokenize("  ?! ").empty());
}

TEST(DataIo, EmbeddingLoaderKeepsSubsetAndCountsSkips) {
  TempDir dir;
  write_file(dir.file("e.txt"), "cat 1 2 3\n\ndog 4 5 6\ncat 7 8 9\nbird 1e-2 -2 3.5\n");
  std::unordered_set<std::string> keep{"cat", "bird"};
  auto t = load_embeddings(dir.file("e.txt"), 3, &keep);
  EXPECT_EQ(t.size(), 3u);  // pad + cat + bird
  EXPECT_EQ(t.skipped_lines(), 2u);
  EXPECT_EQ(t.row(t.id("cat"))[2], 3.0);
  EXPECT_EQ(t.row(t.id("bird"))[0], 0.01);
  EXPECT_EQ(t.id("dog"), kPadId);
  for (double v : t.row(kPadId)) EXPECT_EQ(v, 0.0);
}

TEST(DataIo, EmbeddingLoaderReportsBadLines) {
  TempDir dir;
  write_file(dir.file("e.txt"), "cat 1 2 3\ndog 4 5\n");
  try {
    load_embeddings(dir.file("e.txt"), 3);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  write_file(dir.file("f.txt"), "cat 1 x 3\n");
  EXPECT_THROW(load_embeddings(dir.file("f.txt"), 3), ParseError);
  EXPECT_THROW(load_embeddings(dir.file("missing.txt"), 3), IoError);
}

TEST(DataIo, WikiQaGroupsByQuestionId) {
  TempDir dir;
  write_file(dir.file("w.tsv"),
             "QuestionID\tQuestion\tDocumentID\tDocumentTitle\tSentenceID\tSentence\tLabel\n"
             "Q1\twhat is x\tD1\tX\tD1-0\tx is a thing .\t0\n"
             "Q1\twhat is x\tD1\tX\tD1-1\tx is y .\t1\n"
             "Q2\twho is z\tD2\tZ\tD2-0\tz was born .\t0\n");
  auto groups = parse_dataset(dir.file("w.tsv"), DatasetFormat::kWikiQaTsv);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].question_id, "Q1");
  EXPECT_EQ(groups[0].candidates.size(), 2u);
  EXPECT_EQ(groups[0].candidates[1].label, 1);
  EXPECT_EQ(groups[0].candidates[1].source_id, "D1-1");
  EXPECT_EQ(count_answerable(groups), 1u);
  EXPECT_EQ(count_mixed(groups), 1u);
}

TEST(DataIo, WikiQaErrorsNameTheLine) {
  TempDir dir;
  write_file(dir.file("w.tsv"),
             "QuestionID\tQuestion\tSentenceID\tSentence\tLabel\nQ1\twhat\tS\tanswer\t2\n");
  try {
    parse_dataset(dir.file("w.tsv"), DatasetFormat::kWikiQaTsv);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  write_file(dir.file("x.tsv"), "Question\tSentence\tLabel\n");
  EXPECT_THROW(parse_dataset(dir.file("x.tsv"), DatasetFormat::kWikiQaTsv), ParseError);
  write_file(dir.file("empty.tsv"), "");
  EXPECT_TRUE(parse_dataset(dir.file("empty.tsv"), DatasetFormat::kWikiQaTsv).empty());
  EXPECT_THROW(parse_dataset(dir.file("nope.tsv"), DatasetFormat::kWikiQaTsv), IoError);
}

TEST(DataIo, TrecQaDirectoryAndTsvAgree) {
  TempDir dir;
  write_file(dir.file("a.toks"), "who wrote it ?\nwho wrote it ?\nwhen was it\n");
  write_file(dir.file("b.toks"), "bob wrote it\nalice read it\nin 1990\n");
  write_file(dir.file("sim.txt"), "1\n0\n1\n");
  write_file(dir.file("id.txt"), "1\n1\n2\n");
  auto from_dir = parse_dataset(dir.path().string(), DatasetFormat::kTrecQa);
  write_file(dir.file("t.tsv"),
             "1\twho wrote it ?\tbob wrote it\t1\n1\twho wrote it ?\talice read it\t0\n"
             "2\twhen was it\tin 1990\t1\n");
  auto from_tsv = parse_dataset(dir.file("t.tsv"), DatasetFormat::kTrecQa);
  ASSERT_EQ(from_dir.size(), 2u);
  ASSERT_EQ(from_tsv.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(from_dir[i].question, from_tsv[i].question);
    ASSERT_EQ(from_dir[i].candidates.size(), from_tsv[i].candidates.size());
    for (std::size_t k = 0; k < from_dir[i].candidates.size(); ++k) {
      EXPECT_EQ(from_dir[i].candidates[k].tokens, from_tsv[i].candidates[k].tokens);
      EXPECT_EQ(from_dir[i].candidates[k].label, from_tsv[i].candidates[k].label);
    }
  }
  // "Clean" counting keeps only questions with both labels.
  EXPECT_EQ(count_mixed(from_dir), 1u);
  write_file(dir.file("bad.tsv"), "only\ttwo\n");
  EXPECT_THROW(parse_dataset(dir.file("bad.tsv"), DatasetFormat::kTrecQa), ParseError);
}

TEST(DataIo, InsuranceQaTrainAndPoolFiles) {
  TempDir dir;
  write_file(dir.file("vocabulary"), "idx_1\thow\nidx_2\tmuch\nidx_3\tcost\nidx_4\tit\nidx_5\tdepends\n");
  write_file(dir.file("answers.label.token_idx"), "10\tidx_4 idx_5\n11\tidx_3\n12\tidx_2\n");
  write_file(dir.file("question.train.token_idx.label"), "idx_1 idx_2\t10 11\n");
  write_file(dir.file("question.dev.label.token_idx.pool"), "10\tidx_1 idx_3\t12 10 11\n");
  auto train = parse_dataset(dir.file("question.train.token_idx.label"), DatasetFormat::kInsuranceQaV1);
  ASSERT_EQ(train.size(), 1u);
  EXPECT_EQ(train[0].question, (Tokens{"how", "much"}));
  EXPECT_EQ(train[0].candidates.size(), 2u);
  EXPECT_EQ(train[0].positives(), 2u);
  auto dev = parse_dataset(dir.file("question.dev.label.token_idx.pool"), DatasetFormat::kInsuranceQaV1);
  ASSERT_EQ(dev.size(), 1u);
  EXPECT_EQ(dev[0].candidates.size(), 3u);
  EXPECT_EQ(dev[0].candidates[1].label, 1);
  EXPECT_EQ(dev[0].candidates[1].tokens, (Tokens{"it", "depends"}));
  write_file(dir.file("q.bad"), "idx_9\t10\n");
  EXPECT_THROW(parse_dataset(dir.file("q.bad"), DatasetFormat::kInsuranceQaV1), ParseError);
}

TEST(DataIo, PaddingTruncatesAndMasks) {
  EmbeddingTable t(2);
  t.add("a", std::vector<double>{1, 2});
  auto p = pad_sentence(Tokens{"a", "zzz", "a"}, t, 2);
  EXPECT_EQ(p.ids, (std::vector<std::size_t>{1, kPadId}));
  EXPECT_EQ(p.mask, (Mask{true, true}));
  auto q = pad_sentence(Tokens{"a"}, t, 4);
  EXPECT_EQ(q.mask, (Mask{true, false, false, false}));
  auto empty = pad_sentence(Tokens{}, t, 3);
  EXPECT_EQ(empty.mask, (Mask{true, false, false}));
  auto s = embed(q, t);
  EXPECT_EQ(s.words.shape(), (Shape{4, 2}));
  EXPECT_EQ(s.words.at(0, 1), 2.0);
  EXPECT_EQ(s.words.at(3, 1), 0.0);
}

TEST(DataIo, TrainingBatchComposition) {
  testing::SyntheticSpec spec{.questions = 6, .candidates = 3};
  auto groups = testing::synthetic_groups(spec);
  groups[1].candidates[0].label = 1;
  groups[1].candidates[1].label = 1;
  groups[1].candidates[2].label = 1;
  for (auto& c : groups[2].candidates) c.label = 0;
  auto pool = answer_pool(groups);
  EmbeddingTable table(2);
  RunConfig cfg = testing::small_config(2);
  cfg.candidates = 5;
  auto b = make_training_batch(groups, pool, table, cfg, 99);
  EXPECT_EQ(b.groups(), 5u);
  EXPECT_EQ(b.skipped_no_positive, 1u);
  EXPECT_EQ(b.source, (std::vector<std::size_t>{0, 1, 3, 4, 5}));
  ASSERT_EQ(b.answers.size(), 25u);
  for (std::size_t g = 0; g < b.groups(); ++g) {
    double mass = 0;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 5; ++k) {
      mass += b.targets[g * 5 + k];
      pos += static_cast<std::size_t>(b.labels[g * 5 + k]);
      if (k > 0 && b.labels[g * 5 + k] == 1) {
        EXPECT_EQ(b.labels[g * 5 + k - 1], 1);
      }
    }
    EXPECT_NEAR(mass, 1.0, 1e-15);
    EXPECT_EQ(pos, g == 1 ? 3u : 1u);
  }
  auto again = make_training_batch(groups, pool, table, cfg, 99);
  for (std::size_t i = 0; i < b.answers.size(); ++i) EXPECT_EQ(b.answers[i].ids, again.answers[i].ids);
}

TEST(DataIo, SampledNegativesAreNeverOwnPositives) {
  testing::SyntheticSpec spec{.questions = 10, .candidates = 2};
  auto groups = testing::synthetic_groups(spec);
  auto pool = answer_pool(groups);
  EmbeddingTable table(1);
  // Give every token its own id so padded ids identify sentences.
  std::set<std::string> words;
  for (const auto& t : pool) words.insert(t.begin(), t.end());
  for (const auto& g : groups) words.insert(g.question.begin(), g.question.end());
  for (const auto& w : words) table.add(w, std::vector<double>{0.0});
  RunConfig cfg = testing::small_config(1);
  cfg.candidates = 8;
  cfg.answer_max_len = 5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto b = make_training_batch(groups, pool, table, cfg, seed);
    for (std::size_t g = 0; g < b.groups(); ++g) {
      const auto positive = pad_sentence(groups[b.source[g]].candidates[0].label == 1
                                             ? groups[b.source[g]].candidates[0].tokens
                                             : groups[b.source[g]].candidates[1].tokens,
                                         table, 5);
      for (std::size_t k = 1; k < 8; ++k) EXPECT_NE(b.answers[g * 8 + k].ids, positive.ids);
    }
  }
}

}  // namespace
}  // namespace dfgn
