#pragma once

// Synthetic corpora with known topic structure.
//
// Topic k owns the vocabulary block [k*W/Z, (k+1)*W/Z). Document m belongs to
// category m*Z/M (so categories are contiguous, equal-sized groups) and every
// token is drawn from its category's topic: with probability `separation`
// uniformly from the topic's own block, otherwise uniformly from the whole
// vocabulary. A `mislabel_rate` fraction of documents (rounded to the nearest
// count) has its recorded category replaced by a different one.
//
// The optional raw score matrix mimics noisy network activations: entry
// (m, w) is the count of word w in document m plus Gaussian noise with
// standard deviation `noise_scale` (one count is one unit of signal).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "topiclens/corpus.hpp"
#include "topiclens/error.hpp"

namespace topiclens {

struct SynthConfig {
  std::size_t docs = 400;
  std::size_t topics = 4;
  std::size_t vocab = 100;
  std::size_t tokens_per_doc = 20;
  double separation = 1.0;
  double mislabel_rate = 0.0;
  double noise_scale = 2.0;
  bool with_scores = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (docs < 1 || topics < 1 || tokens_per_doc < 1) throw ConfigError("docs, topics and tokens-per-doc must be positive");
    if (vocab < topics) throw ConfigError("vocab must be at least the number of topics");
    if (separation < 0.0 || separation > 1.0) throw ConfigError("separation must lie in [0, 1]");
    if (mislabel_rate < 0.0 || mislabel_rate > 1.0) throw ConfigError("mislabel-rate must lie in [0, 1]");
    if (mislabel_rate > 0.0 && topics < 2) throw ConfigError("mislabeling needs at least two categories");
    if (noise_scale < 0.0) throw ConfigError("noise scale must be non-negative");
  }
};

struct SynthData {
  TokenizedCorpus corpus;                  // categories hold the recorded (possibly wrong) labels
  std::vector<std::string> true_categories;
  std::vector<std::size_t> mislabeled;     // document indices, ascending
  FeatureMatrix scores;                    // empty unless with_scores
};

inline std::string synth_category_name(std::size_t k) { return "cat_" + std::to_string(k); }

inline SynthData generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t Z = cfg.topics;
  const std::size_t W = cfg.vocab;
  const std::size_t M = cfg.docs;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any_word(0, W - 1);

  SynthData data;
  auto& c = data.corpus;
  c.vocab_size = W;
  const int width = static_cast<int>(std::to_string(M - 1).size());
  for (std::size_t m = 0; m < M; ++m) {
    const std::size_t k = m * Z / M;
    const std::size_t lo = k * W / Z;
    const std::size_t hi = (k + 1) * W / Z;
    std::uniform_int_distribution<std::size_t> own_word(lo, hi - 1);
    std::vector<word_id> tokens(cfg.tokens_per_doc);
    for (auto& t : tokens) t = static_cast<word_id>(unit(rng) < cfg.separation ? own_word(rng) : any_word(rng));
    c.docs.push_back(std::move(tokens));
    char id[32];
    std::snprintf(id, sizeof(id), "doc_%0*zu", width, m);
    c.doc_ids.emplace_back(id);
    data.true_categories.push_back(synth_category_name(k));
  }
  c.categories = data.true_categories;

  const auto n_mislabel = static_cast<std::size_t>(std::llround(cfg.mislabel_rate * static_cast<double>(M)));
  if (n_mislabel > 0) {
    std::vector<std::size_t> idx(M);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < n_mislabel; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, M - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n_mislabel);
    std::sort(idx.begin(), idx.end());
    std::uniform_int_distribution<std::size_t> shift(1, Z - 1);
    for (const auto m : idx) {
      const std::size_t k = m * Z / M;
      c.categories[m] = synth_category_name((k + shift(rng)) % Z);
    }
    data.mislabeled = std::move(idx);
  }

  if (cfg.with_scores) {
    auto& f = data.scores;
    f.n_docs = M;
    f.n_dims = W;
    f.doc_ids = c.doc_ids;
    f.categories = c.categories;
    f.values.assign(M * W, 0.0f);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t m = 0; m < M; ++m) {
      auto row = f.row(m);
      for (const auto w : c.docs[m]) row[w] += 1.0f;
      for (auto& v : row) v = static_cast<float>(v + cfg.noise_scale * noise(rng));
    }
  }
  return data;
}

/// `doc_id,category` for every document (the recorded labels).
inline void save_categories_csv(const TokenizedCorpus& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "doc_id,category\n";
  for (std::size_t m = 0; m < c.n_docs(); ++m) out << c.doc_ids[m] << ',' << (c.has_categories() ? c.categories[m] : "") << '\n';
}

/// `doc_id,recorded_category,true_category,mislabeled`
inline void save_truth_csv(const SynthData& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "doc_id,recorded_category,true_category,mislabeled\n";
  std::size_t next = 0;
  for (std::size_t m = 0; m < d.corpus.n_docs(); ++m) {
    const bool planted = next < d.mislabeled.size() && d.mislabeled[next] == m;
    if (planted) ++next;
    out << d.corpus.doc_ids[m] << ',' << d.corpus.categories[m] << ',' << d.true_categories[m] << ','
        << (planted ? 1 : 0) << '\n';
  }
}

}  // namespace topiclens
