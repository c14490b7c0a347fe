#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "test_util.hpp"
#include "topiclens/evaluation.hpp"

using namespace topiclens;
namespace tt = topiclens::testing;

namespace {

DenseMatrix matrix_of(std::vector<std::vector<double>> rows) {
  DenseMatrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  return m;
}

DenseMatrix random_scores(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  DenseMatrix m(rows, cols);
  for (auto& v : m.data()) v = u(rng);
  return m;
}

CategoryPartition random_partition(std::mt19937_64& rng, std::size_t docs, std::size_t labels) {
  std::vector<std::string> cats(docs);
  for (std::size_t m = 0; m < docs; ++m) cats[m] = "c" + std::to_string(m < labels ? m : rng() % labels);
  return make_partition(cats);
}

std::vector<std::string> ids_for(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("doc" + std::to_string(i));
  return ids;
}

}  // namespace

TEST(ConsistentRate, FourDocumentExample) {
  const auto scores = matrix_of({{0.9, 0.1}, {0.8, 0.2}, {0.3, 0.7}, {0.6, 0.4}});
  const std::vector<std::string> cats(4, "all");
  const auto report = consistent_rate(scores, make_partition(cats), {1, 2});
  ASSERT_EQ(report.categories.size(), 1u);
  const auto& c = report.at("all");
  EXPECT_EQ(c.modal_index, 0u);
  EXPECT_EQ(c.size, 4u);
  EXPECT_DOUBLE_EQ(c.rate(1), 0.75);
  EXPECT_DOUBLE_EQ(c.rate(2), 1.0);
  EXPECT_EQ(report.method, Method::lda);
}

TEST(ConsistentRate, IdenticalRowsAreFullyConsistent) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t D = 1 + rng() % 10;
    auto row = random_scores(rng, 1, D);
    DenseMatrix m(12, D);
    for (std::size_t r = 0; r < 12; ++r) std::copy(row.row(0).begin(), row.row(0).end(), m.row(r).begin());
    const auto report = consistent_rate(m, random_partition(rng, 12, 3), {1});
    for (const auto& c : report.categories) EXPECT_DOUBLE_EQ(c.rate(1), 1.0);
  }
}

TEST(ConsistentRate, ModalIndexTieGoesToLowerIndex) {
  const auto scores = matrix_of({{0.5, 0.5}, {0.5, 0.5}});
  const std::vector<std::string> cats(2, "x");
  const auto report = consistent_rate(scores, make_partition(cats), {1});
  EXPECT_EQ(report.at("x").modal_index, 0u);
  EXPECT_DOUBLE_EQ(report.at("x").rate(1), 1.0);
}

TEST(ConsistentRate, MonotoneInKAndFullAtD) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t D = 1 + rng() % 12;
    const std::size_t M = 1 + rng() % 40;
    const auto m = random_scores(rng, M, D);
    std::vector<std::size_t> ks(D);
    std::iota(ks.begin(), ks.end(), std::size_t{1});
    std::shuffle(ks.begin(), ks.end(), rng);
    const auto report = consistent_rate(m, random_partition(rng, M, 1 + rng() % 4), ks);
    for (const auto& c : report.categories) {
      ASSERT_EQ(c.rate_at_k.size(), D);
      for (std::size_t i = 0; i < D; ++i) {
        EXPECT_EQ(c.rate_at_k[i].first, i + 1);
        EXPECT_GE(c.rate_at_k[i].second, 0.0);
        EXPECT_LE(c.rate_at_k[i].second, 1.0);
        if (i) {
          EXPECT_GE(c.rate_at_k[i].second, c.rate_at_k[i - 1].second);
        }
      }
      EXPECT_DOUBLE_EQ(c.rate(D), 1.0);
    }
  }
}

TEST(ConsistentRate, TopKMembershipUnchangedByMonotoneTransform) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t D = 2 + rng() % 8;
    const auto m = random_scores(rng, 20, D);
    auto transformed = m;
    for (auto& v : transformed.data()) v = std::exp(2.0 * v) + 7.0;
    const auto part = random_partition(rng, 20, 3);
    // fix the modal index and compare per-document top-k membership directly
    for (std::size_t r = 0; r < 20; ++r) {
      for (std::size_t j = 0; j < D; ++j) {
        EXPECT_EQ(rank_in_row(m.row(r), j), rank_in_row(transformed.row(r), j));
      }
    }
    const auto a = consistent_rate(m, part, {1, 2});
    const auto b = consistent_rate(transformed, part, {1, 2});
    for (std::size_t i = 0; i < a.categories.size(); ++i) {
      if (a.categories[i].modal_index == b.categories[i].modal_index) {
        EXPECT_EQ(a.categories[i].rate_at_k, b.categories[i].rate_at_k);
      }
    }
  }
}

TEST(ConsistentRate, RejectsBadInput) {
  const auto scores = matrix_of({{1, 0}, {0, 1}});
  CategoryPartition empty{{"a", {0, 1}}, {"b", {}}};
  EXPECT_THROW(consistent_rate(scores, empty, {1}), std::invalid_argument);
  CategoryPartition out_of_range{{"a", {0, 5}}};
  EXPECT_THROW(consistent_rate(scores, out_of_range, {1}), std::invalid_argument);
  CategoryPartition ok{{"a", {0, 1}}};
  EXPECT_THROW(consistent_rate(scores, ok, {3}), std::invalid_argument);
  EXPECT_THROW(consistent_rate(scores, ok, {0}), std::invalid_argument);
}

TEST(RankInRow, TiesFavourLowerIndex) {
  const std::vector<double> row{0.2, 0.5, 0.5, 0.1};
  EXPECT_EQ(rank_in_row(row, 1), 0u);
  EXPECT_EQ(rank_in_row(row, 2), 1u);
  EXPECT_EQ(rank_in_row(row, 0), 2u);
  EXPECT_EQ(rank_in_row(row, 3), 3u);
}

TEST(RawBaseline, PassThroughWithoutSoftmax) {
  FeatureMatrix fm;
  fm.n_docs = 2;
  fm.n_dims = 3;
  fm.values = {1.5f, -2.0f, 0.0f, 3.25f, 7.0f, -0.5f};
  fm.doc_ids = {"a", "b"};
  const auto out = raw_baseline_probs(fm);
  ASSERT_EQ(out.rows(), 2u);
  ASSERT_EQ(out.cols(), 3u);
  for (std::size_t i = 0; i < fm.values.size(); ++i) EXPECT_EQ(out.data()[i], static_cast<double>(fm.values[i]));
}

TEST(RawBaseline, SoftmaxRowsAreDistributions) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-50.0f, 50.0f);
  for (int trial = 0; trial < 100; ++trial) {
    FeatureMatrix fm;
    fm.n_docs = 1 + rng() % 10;
    fm.n_dims = 1 + rng() % 20;
    fm.values.resize(fm.n_docs * fm.n_dims);
    for (auto& v : fm.values) v = u(rng);
    for (std::size_t i = 0; i < fm.n_docs; ++i) fm.doc_ids.push_back(std::to_string(i));
    const auto out = raw_baseline_probs(fm, true);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      double sum = 0.0;
      for (const double v : out.row(r)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
      EXPECT_EQ(argmax(out.row(r)), argmax(raw_baseline_probs(fm).row(r)));
    }
  }
}

TEST(RawBaseline, SoftmaxOfEqualValuesIsUniform) {
  FeatureMatrix fm;
  fm.n_docs = 1;
  fm.n_dims = 2;
  fm.values = {0.0f, 0.0f};
  fm.doc_ids = {"a"};
  const auto out = raw_baseline_probs(fm, true);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(out(0, 1), 0.5);
}

TEST(TopDocuments, HandRankedExample) {
  const auto theta = matrix_of({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}});
  const auto top = top_documents_per_topic(theta, 1);
  EXPECT_EQ(top[0], (std::vector<std::size_t>{0}));
  EXPECT_EQ(top[1], (std::vector<std::size_t>{1}));
  const auto all = top_documents_per_topic(theta, 3);
  EXPECT_EQ(all[0], (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_EQ(all[1], (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(top_documents_per_topic(theta, 10), all);
  EXPECT_THROW(top_documents_per_topic(theta, 0), std::invalid_argument);
}

TEST(TopDocuments, TiesGoToLowerDocument) {
  const auto theta = matrix_of({{0.5}, {0.7}, {0.5}, {0.7}});
  EXPECT_EQ(top_documents_per_topic(theta, 4)[0], (std::vector<std::size_t>{1, 3, 0, 2}));
}

TEST(TopDocuments, ListsAreSortedByDescendingValue) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t M = 1 + rng() % 30;
    const std::size_t K = 1 + rng() % 6;
    const auto theta = random_scores(rng, M, K);
    const std::size_t n = 1 + rng() % (M + 3);
    const auto top = top_documents_per_topic(theta, n);
    ASSERT_EQ(top.size(), K);
    for (std::size_t k = 0; k < K; ++k) {
      ASSERT_EQ(top[k].size(), std::min(n, M));
      for (std::size_t i = 1; i < top[k].size(); ++i) EXPECT_GE(theta(top[k][i - 1], k), theta(top[k][i], k));
      // nothing left out beats the last listed document
      const std::set<std::size_t> listed(top[k].begin(), top[k].end());
      for (std::size_t m = 0; m < M; ++m) {
        if (!listed.count(m)) {
          EXPECT_LE(theta(m, k), theta(top[k].back(), k));
        }
      }
    }
  }
}

TEST(FlagOutliers, MinorityDocumentIsFlagged) {
  const auto theta = matrix_of({{0.8, 0.2}, {0.7, 0.3}, {0.1, 0.9}});
  const std::vector<std::string> cats(3, "cow");
  const auto ids = ids_for(3);
  const auto flagged = flag_outliers(theta, make_partition(cats), ids);
  ASSERT_EQ(flagged.size(), 1u);
  EXPECT_EQ(flagged[0].doc_index, 2u);
  EXPECT_EQ(flagged[0].doc_id, "doc2");
  EXPECT_EQ(flagged[0].category, "cow");
  EXPECT_EQ(flagged[0].assigned_topic, 1u);
  EXPECT_EQ(flagged[0].category_modal_topic, 0u);
}

TEST(FlagOutliers, PureCategoryHasNoFlags) {
  const auto theta = matrix_of({{0.1, 0.9}, {0.3, 0.7}, {0.0, 1.0}});
  const std::vector<std::string> cats(3, "x");
  EXPECT_TRUE(flag_outliers(theta, make_partition(cats), ids_for(3)).empty());
}

TEST(FlagOutliers, FlaggedSetIsComplementOfModalMatches) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t M = 1 + rng() % 40;
    const std::size_t K = 1 + rng() % 5;
    const auto theta = random_scores(rng, M, K);
    const auto part = random_partition(rng, M, 1 + rng() % 4);
    const auto flagged = flag_outliers(theta, part, ids_for(M));
    EXPECT_LE(flagged.size(), M);
    std::set<std::size_t> flagged_docs;
    for (const auto& f : flagged) flagged_docs.insert(f.doc_index);
    for (const auto& [label, docs] : part) {
      // independent majority vote
      std::map<std::size_t, std::size_t> votes;
      for (const auto m : docs) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k) {
          if (theta(m, k) > theta(m, best)) best = k;
        }
        ++votes[best];
      }
      std::size_t modal = votes.begin()->first;
      for (const auto& [k, n] : votes) {
        if (n > votes[modal]) modal = k;
      }
      for (const auto m : docs) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k) {
          if (theta(m, k) > theta(m, best)) best = k;
        }
        EXPECT_EQ(flagged_docs.count(m) == 1, best != modal);
      }
    }
    for (std::size_t i = 1; i < flagged.size(); ++i) EXPECT_LT(flagged[i - 1].doc_index, flagged[i].doc_index);
  }
}

TEST(FlagOutliers, EmptyCategoryIsAnError) {
  const auto theta = matrix_of({{1.0}});
  CategoryPartition part{{"a", {0}}, {"b", {}}};
  EXPECT_THROW(flag_outliers(theta, part, ids_for(1)), std::invalid_argument);
}

TEST(Spectrogram, IdentityGivesDiagonalBlocks) {
  tt::TempDir dir;
  const auto theta = matrix_of({{1, 0}, {0, 1}});
  const std::vector<std::size_t> order{0, 1};
  spectrogram_export(theta, ids_for(2), order, dir / "s.csv", dir / "s.pgm");
  const auto img = load_pgm(dir / "s.pgm");
  ASSERT_EQ(img.width, 2u);
  ASSERT_EQ(img.height, 2u);
  EXPECT_EQ(img.at(0, 0), 255);
  EXPECT_EQ(img.at(1, 1), 255);
  EXPECT_EQ(img.at(1, 0), 0);
  EXPECT_EQ(img.at(0, 1), 0);

  std::ifstream in(dir / "s.pgm", std::ios::binary);
  std::string header((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(header.substr(0, 11), "P5\n2 2\n255\n");
  EXPECT_EQ(header.size(), 11u + 4u);
}

TEST(Spectrogram, CsvRoundTripsAtSixDigits) {
  tt::TempDir dir;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DenseMatrix m(30, 5);
  for (auto& v : m.data()) v = u(rng) * std::pow(10.0, static_cast<double>(rng() % 7) - 4.0);
  std::vector<std::size_t> order(30);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto ids = ids_for(30);
  spectrogram_export(m, ids, order, dir / "s.csv", dir / "s.pgm");
  const auto back = read_labeled_csv(dir / "s.csv");
  ASSERT_EQ(back.row_ids.size(), 30u);
  EXPECT_EQ(back.col_names, (std::vector<std::string>{"topic_0", "topic_1", "topic_2", "topic_3", "topic_4"}));
  for (std::size_t r = 0; r < 30; ++r) {
    EXPECT_EQ(back.row_ids[r], ids[order[r]]);
    for (std::size_t k = 0; k < 5; ++k) {
      const double expected = m(order[r], k);
      EXPECT_NEAR(back.values(r, k), expected, 5e-6 * std::abs(expected));
    }
  }
}

TEST(Spectrogram, PixelsScaleWithMaximum) {
  tt::TempDir dir;
  const auto m = matrix_of({{0.5, 0.25}, {0.0, 1.0}, {-1.0, 0.75}});
  const std::vector<std::size_t> order{2, 0, 1};
  const auto img = render_heatmap(m, order);
  EXPECT_EQ(img.width, 3u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.at(0, 0), 0);    // negative clamps to black
  EXPECT_EQ(img.at(0, 1), 191);  // 0.75 * 255 = 191.25
  EXPECT_EQ(img.at(1, 0), 128);  // 127.5 rounds away from zero
  EXPECT_EQ(img.at(2, 1), 255);
}

TEST(Spectrogram, RejectsNonPermutation) {
  tt::TempDir dir;
  const auto m = matrix_of({{1}, {2}});
  const std::vector<std::size_t> dup{0, 0};
  EXPECT_THROW(spectrogram_export(m, ids_for(2), dup, dir / "a.csv", dir / "a.pgm"), std::invalid_argument);
  const std::vector<std::size_t> short_order{1};
  EXPECT_THROW(spectrogram_export(m, ids_for(2), short_order, dir / "a.csv", dir / "a.pgm"), std::invalid_argument);
}

TEST(OrderByCategory, GroupsStably) {
  const std::vector<std::string> cats{"b", "a", "b", "a", "c"};
  EXPECT_EQ(order_by_category(cats), (std::vector<std::size_t>{1, 3, 0, 2, 4}));
}

TEST(Reports, CsvLayouts) {
  tt::TempDir dir;
  const auto scores = matrix_of({{0.9, 0.1}, {0.8, 0.2}, {0.3, 0.7}, {0.6, 0.4}});
  const std::vector<std::string> cats(4, "all");
  std::vector<ConsistencyReport> reports{consistent_rate(scores, make_partition(cats), {1, 2}, Method::raw)};
  save_consistency_csv(reports, dir / "c.csv");
  std::ifstream c(dir / "c.csv");
  std::string text((std::istreambuf_iterator<char>(c)), {});
  EXPECT_EQ(text, "method,category,modal_index,k,rate\nraw,all,0,1,0.75\nraw,all,0,2,1\n");

  const std::vector<OutlierRecord> outliers{{2, "doc2", "cow", 1, 0}};
  save_outliers_csv(outliers, dir / "o.csv");
  std::ifstream o(dir / "o.csv");
  std::string otext((std::istreambuf_iterator<char>(o)), {});
  EXPECT_EQ(otext, "doc_id,category,assigned_topic,category_modal_topic\ndoc2,cow,1,0\n");
}

TEST(Reports, LoadCategories) {
  tt::TempDir dir;
  std::ofstream(dir / "cats.csv") << "doc_id,category\r\na, cow\nb,fridge\n\n";
  const auto labels = load_categories_csv(dir / "cats.csv");
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0].doc_id, "a");
  EXPECT_EQ(labels[0].category, "cow");
  EXPECT_EQ(labels[1].category, "fridge");
  std::ofstream(dir / "bad.csv") << "a,b,c\n";
  try {
    load_categories_csv(dir / "bad.csv");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.row(), 1u);
  }
}
