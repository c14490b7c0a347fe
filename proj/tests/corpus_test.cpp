#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "test_util.hpp"
#include "topiclens/corpus.hpp"

using namespace topiclens;
using topiclens::testing::TempDir;

namespace {

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

FeatureMatrix make_matrix(std::vector<std::vector<float>> rows) {
  FeatureMatrix m;
  m.n_docs = rows.size();
  m.n_dims = rows.front().size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.values.insert(m.values.end(), rows[i].begin(), rows[i].end());
    m.doc_ids.push_back("r" + std::to_string(i));
  }
  return m;
}

}  // namespace

TEST(FeatureMatrixText, ParsesHeaderAndRows) {
  TempDir dir;
  write_file(dir / "m.txt", "2 3\nimg_a,0.5,-1.0,2.0\nimg_b,9.9,0.0,-9.9\n");
  const auto m = load_feature_matrix(dir / "m.txt", MatrixFormat::text);
  EXPECT_EQ(m.n_docs, 2u);
  EXPECT_EQ(m.n_dims, 3u);
  EXPECT_EQ(m.doc_ids, (std::vector<std::string>{"img_a", "img_b"}));
  EXPECT_FALSE(m.has_categories());
  EXPECT_FLOAT_EQ(m.row(0)[2], 2.0f);
  EXPECT_FLOAT_EQ(m.row(1)[0], 9.9f);
  EXPECT_FLOAT_EQ(m.row(1)[2], -9.9f);
}

TEST(FeatureMatrixText, DetectsOptionalCategoryColumn) {
  TempDir dir;
  write_file(dir / "m.txt", "2 2\na,1,2,broccoli\nb,3,4,cow\n");
  const auto m = load_feature_matrix(dir / "m.txt", MatrixFormat::text);
  ASSERT_TRUE(m.has_categories());
  EXPECT_EQ(m.categories, (std::vector<std::string>{"broccoli", "cow"}));
}

TEST(FeatureMatrixText, DimensionMismatchNamesTheRow) {
  TempDir dir;
  write_file(dir / "m.txt", "2 3\nimg_a,0.5,-1.0,2.0\nimg_b,1,2,3,4,5\n");
  try {
    load_feature_matrix(dir / "m.txt", MatrixFormat::text);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.row(), 2u);
    EXPECT_NE(std::string(e.what()).find("dimension mismatch"), std::string::npos);
  }
}

TEST(FeatureMatrixText, RejectsBadInput) {
  TempDir dir;
  write_file(dir / "header.txt", "2\na,1\n");
  EXPECT_THROW(load_feature_matrix(dir / "header.txt", MatrixFormat::text), FormatError);

  write_file(dir / "nan.txt", "1 2\na,1,nan\n");
  try {
    load_feature_matrix(dir / "nan.txt", MatrixFormat::text);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.row(), 1u);
  }

  write_file(dir / "dup.txt", "2 1\na,1\na,2\n");
  try {
    load_feature_matrix(dir / "dup.txt", MatrixFormat::text);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.row(), 2u);
    EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos);
  }

  write_file(dir / "short.txt", "3 1\na,1\nb,2\n");
  EXPECT_THROW(load_feature_matrix(dir / "short.txt", MatrixFormat::text), FormatError);
}

TEST(FeatureMatrixBinary, RoundTripIsBitExact) {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> value(0.0f, 5.0f);
  TempDir dir;
  for (int trial = 0; trial < 25; ++trial) {
    FeatureMatrix m;
    m.n_docs = 1 + rng() % 20;
    m.n_dims = 1 + rng() % 30;
    for (std::size_t i = 0; i < m.n_docs * m.n_dims; ++i) m.values.push_back(value(rng));
    for (std::size_t i = 0; i < m.n_docs; ++i) m.doc_ids.push_back("img_" + std::to_string(rng() % 100000) + "_" + std::to_string(i));
    if (trial % 2) {
      for (std::size_t i = 0; i < m.n_docs; ++i) m.categories.push_back("cat" + std::to_string(rng() % 4));
    }
    m.values[0] = -0.0f;
    m.values.back() = std::numeric_limits<float>::denorm_min();

    save_feature_matrix(m, dir / "m.fmx", MatrixFormat::binary);
    const auto back = load_feature_matrix(dir / "m.fmx", MatrixFormat::binary);
    ASSERT_EQ(back.n_docs, m.n_docs);
    ASSERT_EQ(back.n_dims, m.n_dims);
    EXPECT_EQ(back.doc_ids, m.doc_ids);
    EXPECT_EQ(back.categories, m.categories);
    ASSERT_EQ(back.values.size(), m.values.size());
    EXPECT_EQ(std::memcmp(back.values.data(), m.values.data(), m.values.size() * sizeof(float)), 0);

    save_feature_matrix(m, dir / "m.txt", MatrixFormat::text);
    const auto text = load_feature_matrix(dir / "m.txt", MatrixFormat::text);
    EXPECT_EQ(text, m);
  }
}

TEST(FeatureMatrixBinary, HeaderLayout) {
  TempDir dir;
  auto m = make_matrix({{1.0f, -2.0f}});
  save_feature_matrix(m, dir / "m.fmx", MatrixFormat::binary);
  std::ifstream in(dir / "m.fmx", std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  // magic + N + V + flag + (u16 len + "r0") + 2 floats
  ASSERT_EQ(bytes.size(), 4u + 8 + 8 + 1 + 2 + 2 + 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FMX1");
  EXPECT_EQ(bytes[4], 1);  // N little-endian
  EXPECT_EQ(bytes[12], 2);  // V
  EXPECT_EQ(bytes[20], 0);  // no categories
  EXPECT_EQ(bytes[21], 2);  // id length
  // 1.0f = 0x3F800000, little-endian
  EXPECT_EQ(bytes[25], 0x00);
  EXPECT_EQ(bytes[28], 0x3F);
}

TEST(FeatureMatrixBinary, TruncatedFileIsAnError) {
  TempDir dir;
  save_feature_matrix(make_matrix({{1.0f, 2.0f}, {3.0f, 4.0f}}), dir / "m.fmx", MatrixFormat::binary);
  std::filesystem::resize_file(dir / "m.fmx", std::filesystem::file_size(dir / "m.fmx") - 3);
  try {
    load_feature_matrix(dir / "m.fmx", MatrixFormat::binary);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(Tokenize, BinaryKeepsDimensionsAboveThreshold) {
  const auto r = threshold_tokenize(make_matrix({{0.5f, -1.0f, 2.0f}}));
  ASSERT_EQ(r.corpus.docs.size(), 1u);
  EXPECT_EQ(r.corpus.docs[0], (std::vector<word_id>{0, 2}));
  EXPECT_EQ(r.corpus.vocab_size, 3u);
}

TEST(Tokenize, AllBelowThresholdRowIsDropped) {
  const auto r = threshold_tokenize(make_matrix({{-1.0f, -2.0f}, {1.0f, 0.0f}}));
  ASSERT_EQ(r.corpus.docs.size(), 1u);
  EXPECT_EQ(r.corpus.doc_ids, (std::vector<std::string>{"r1"}));
  EXPECT_EQ(r.dropped.doc_ids, (std::vector<std::string>{"r0"}));
  EXPECT_EQ(r.dropped.rows, (std::vector<std::size_t>{0}));
}

TEST(Tokenize, ProportionalRepeats) {
  // ceil(4 * v / 5) for v = 1, 3, 5 -> 1, 3, 4
  TokenizeOptions opt;
  opt.weighting = Weighting::proportional;
  opt.max_repeats = 4;
  const auto r = threshold_tokenize(make_matrix({{1.0f, 3.0f, 5.0f}}), opt);
  EXPECT_EQ(r.corpus.docs[0], (std::vector<word_id>{0, 1, 1, 1, 2, 2, 2, 2}));
}

TEST(Tokenize, ProportionalEqualValuesGetOneCopy) {
  TokenizeOptions opt;
  opt.weighting = Weighting::proportional;
  opt.max_repeats = 5;
  const auto r = threshold_tokenize(make_matrix({{2.0f, -1.0f, 2.0f}}), opt);
  EXPECT_EQ(r.corpus.docs[0], (std::vector<word_id>{0, 2}));
}

TEST(Tokenize, EmptyOutputIsAnError) {
  TokenizeOptions opt;
  opt.threshold = 99.0;
  EXPECT_THROW(threshold_tokenize(make_matrix({{1.0f, 2.0f}}), opt), EmptyCorpusError);
}

TEST(Tokenize, ZeroMaxRepeatsRejected) {
  TokenizeOptions opt;
  opt.max_repeats = 0;
  EXPECT_THROW(threshold_tokenize(make_matrix({{1.0f}}), opt), ConfigError);
}

TEST(Tokenize, KeepAllEmitsEveryDimensionOnce) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> v(-10.0f, 10.0f);
  FeatureMatrix m;
  m.n_docs = 6;
  m.n_dims = 9;
  for (std::size_t i = 0; i < 54; ++i) m.values.push_back(v(rng));
  for (std::size_t i = 0; i < 6; ++i) m.doc_ids.push_back("x" + std::to_string(i));
  TokenizeOptions opt;
  opt.keep_all = true;
  const auto r = threshold_tokenize(m, opt);
  ASSERT_EQ(r.corpus.docs.size(), 6u);
  for (const auto& d : r.corpus.docs) {
    std::vector<word_id> all(9);
    std::iota(all.begin(), all.end(), 0u);
    EXPECT_EQ(d, all);
  }
}

TEST(Tokenize, RaisingThresholdNeverAddsTokens) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> v(-10.0f, 10.0f);
  for (int trial = 0; trial < 50; ++trial) {
    FeatureMatrix m;
    m.n_docs = 1 + rng() % 10;
    m.n_dims = 1 + rng() % 20;
    for (std::size_t i = 0; i < m.n_docs * m.n_dims; ++i) m.values.push_back(v(rng));
    for (std::size_t i = 0; i < m.n_docs; ++i) m.doc_ids.push_back("x" + std::to_string(i));
    // keep one guaranteed-positive value per row so both corpora are non-empty
    for (std::size_t i = 0; i < m.n_docs; ++i) m.row(i)[0] = 20.0f;

    TokenizeOptions lo, hi;
    lo.threshold = -3.0 + (rng() % 100) / 20.0;
    hi.threshold = lo.threshold + (rng() % 100) / 10.0;
    const auto a = threshold_tokenize(m, lo).corpus;
    const auto b = threshold_tokenize(m, hi).corpus;
    ASSERT_EQ(a.docs.size(), b.docs.size());
    EXPECT_EQ(a.vocab_size, m.n_dims);
    EXPECT_EQ(b.vocab_size, m.n_dims);
    for (std::size_t d = 0; d < a.docs.size(); ++d) {
      EXPECT_TRUE(std::includes(a.docs[d].begin(), a.docs[d].end(), b.docs[d].begin(), b.docs[d].end()));
    }
  }
}

TEST(CorpusFile, RoundTrip) {
  TempDir dir;
  TokenizedCorpus c;
  c.vocab_size = 3;
  c.docs = {{0, 2}, {1}};
  c.doc_ids = {"a", "b"};
  save_corpus(c, dir / "c.txt");
  std::ifstream in(dir / "c.txt");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(content, "#vocab 3\na\t0 2\nb\t1\n");
  EXPECT_EQ(load_corpus(dir / "c.txt"), c);
}

TEST(CorpusFile, RandomizedRoundTrip) {
  std::mt19937_64 rng(5);
  TempDir dir;
  for (int trial = 0; trial < 40; ++trial) {
    auto c = topiclens::testing::random_corpus(rng, 30, 25, 200);
    if (trial % 3 == 0) {
      for (std::size_t m = 0; m < c.n_docs(); ++m) c.categories.push_back("cat " + std::to_string(rng() % 5));
    }
    save_corpus(c, dir / "c.txt");
    EXPECT_EQ(load_corpus(dir / "c.txt"), c);
  }
}

TEST(CorpusFile, OutOfRangeTokenReportsLine) {
  TempDir dir;
  write_file(dir / "c.txt", "#vocab 3\na\t0 1\nb\t2 7\n");
  try {
    load_corpus(dir / "c.txt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.row(), 3u);
    EXPECT_NE(std::string(e.what()).find("out of range"), std::string::npos);
  }
}

TEST(CorpusFile, MalformedHeader) {
  TempDir dir;
  write_file(dir / "c.txt", "vocab 3\na\t0\n");
  EXPECT_THROW(load_corpus(dir / "c.txt"), FormatError);
}

TEST(CorpusStats, SmallExample) {
  TokenizedCorpus c;
  c.vocab_size = 5;
  c.docs = {{0, 2}, {1}};
  c.doc_ids = {"a", "b"};
  const auto s = corpus_stats(c);
  EXPECT_EQ(s.n_docs, 2u);
  EXPECT_EQ(s.total_tokens, 3u);
  EXPECT_EQ(s.distinct_words_used, 3u);
  EXPECT_EQ(s.vocab_size, 5u);
  EXPECT_EQ(s.tokens_per_doc_histogram.at(1), 1u);
  EXPECT_EQ(s.tokens_per_doc_histogram.at(2), 1u);
}

TEST(CorpusStats, HistogramSumsToDocCount) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = topiclens::testing::random_corpus(rng, 40, 30, 50);
    const auto s = corpus_stats(c);
    std::size_t docs = 0, tokens = 0;
    for (const auto& [len, n] : s.tokens_per_doc_histogram) {
      docs += n;
      tokens += len * n;
    }
    EXPECT_EQ(docs, s.n_docs);
    EXPECT_EQ(tokens, s.total_tokens);
    EXPECT_EQ(s.total_tokens, c.total_tokens());
    EXPECT_LE(s.distinct_words_used, s.vocab_size);
  }
}
