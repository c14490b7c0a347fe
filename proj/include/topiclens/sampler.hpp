#pragma once

// Collapsed Gibbs sampling for LDA.
//
// For token n of document m with word w, after removing its own assignment
// from the counts, topic k is drawn with weight
//
//     (alpha + C[k,m,*]) * (beta + C[k,*,w]) / (W*beta + C[k,*,*])
//
// The per-document factor 1 / (Z*alpha + C[*,m,*]) is the same for every k
// and cancels when the weights are normalized, so it is never computed.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "topiclens/corpus.hpp"
#include "topiclens/detail/binary_io.hpp"
#include "topiclens/error.hpp"
#include "topiclens/matrix.hpp"

namespace topiclens {

using topic_id = std::uint16_t;
using count_t = std::int32_t;
using Rng = std::mt19937_64;

inline constexpr std::size_t kMaxTopics = std::size_t{1} << 16;

struct LdaConfig {
  std::size_t n_topics = 10;
  double alpha = 5.0;
  double beta = 0.01;
  std::size_t n_iterations = 1000;
  std::size_t burn_in = 200;
  std::uint64_t seed = 42;

  /// alpha = 50 / Z, beta = 0.01, 1000 iterations, 200 burn-in.
  static LdaConfig defaults_for(std::size_t n_topics) {
    LdaConfig cfg;
    cfg.n_topics = n_topics;
    cfg.alpha = 50.0 / static_cast<double>(n_topics ? n_topics : 1);
    return cfg;
  }

  void validate() const {
    if (n_topics < 1) throw ConfigError("n_topics must be at least 1");
    if (n_topics > kMaxTopics) throw ConfigError("n_topics must not exceed 65536");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
    if (n_iterations > 0 && burn_in >= n_iterations) throw ConfigError("burn_in must be smaller than n_iterations");
  }
};

/// Topic assignments plus the count tables that summarize them.
///
/// Tokens are stored flat in corpus order; `doc_offsets[m]` is the first
/// token of document m. The topic-word table is kept word-major so that the
/// Z counts of one word are contiguous, which is what the sampler reads.
struct SamplerState {
  std::size_t n_topics = 0;
  std::size_t vocab_size = 0;
  std::vector<std::size_t> doc_offsets;  // M + 1 entries
  std::vector<word_id> words;            // w for every token
  std::vector<topic_id> assignments;     // z for every token
  std::vector<count_t> doc_topic;        // M x Z
  std::vector<count_t> word_topic;       // W x Z
  std::vector<count_t> topic_total;      // Z
  std::vector<count_t> doc_total;        // M
  Rng rng;

  std::size_t n_docs() const noexcept { return doc_offsets.empty() ? 0 : doc_offsets.size() - 1; }
  std::size_t n_tokens() const noexcept { return words.size(); }
  std::size_t token_index(std::size_t m, std::size_t n) const noexcept { return doc_offsets[m] + n; }
  std::size_t doc_length(std::size_t m) const noexcept { return doc_offsets[m + 1] - doc_offsets[m]; }

  std::span<count_t> doc_row(std::size_t m) { return {doc_topic.data() + m * n_topics, n_topics}; }
  std::span<const count_t> doc_row(std::size_t m) const { return {doc_topic.data() + m * n_topics, n_topics}; }
  std::span<count_t> word_row(std::size_t w) { return {word_topic.data() + w * n_topics, n_topics}; }
  std::span<const count_t> word_row(std::size_t w) const { return {word_topic.data() + w * n_topics, n_topics}; }

  /// C[k,*,w]
  count_t topic_word(std::size_t k, std::size_t w) const { return word_topic[w * n_topics + k]; }

  std::span<const topic_id> doc_assignments(std::size_t m) const {
    return {assignments.data() + doc_offsets[m], doc_length(m)};
  }
};

struct TraceEntry {
  std::size_t iteration = 0;  // 1-based
  double duration_ms = 0.0;
  double log_likelihood = 0.0;
};

using TraceLog = std::vector<TraceEntry>;

/// Called after every iteration with the 1-based iteration number.
using IterationHook = std::function<void(std::size_t, const SamplerState&)>;

struct RunResult {
  SamplerState state;
  TraceLog trace;
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n).
inline std::size_t uniform_below(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

inline double topic_weight(double alpha, double beta, double w_beta, count_t doc_count, count_t word_count,
                           count_t total) {
  return (alpha + doc_count) * (beta + word_count) / (w_beta + total);
}

/// Inverse-CDF draw over the unnormalized weights; `cdf` is scratch of size Z.
inline topic_id draw_topic(std::span<const count_t> doc_row, std::span<const count_t> word_row,
                           std::span<const count_t> totals, double alpha, double beta, double w_beta,
                           std::span<double> cdf, double u) {
  const std::size_t Z = cdf.size();
  double sum = 0.0;
  for (std::size_t k = 0; k < Z; ++k) {
    sum += topic_weight(alpha, beta, w_beta, doc_row[k], word_row[k], totals[k]);
    cdf[k] = sum;
  }
  const double target = u * sum;
  for (std::size_t k = 0; k < Z; ++k) {
    if (target < cdf[k]) return static_cast<topic_id>(k);
  }
  return static_cast<topic_id>(Z - 1);
}

inline void decrement(count_t& c, const char* table) {
  if (c <= 0) throw StateCorruptionError(std::string("count underflow in ") + table);
  --c;
}

/// Moves one token out of topic `old` and into a freshly drawn topic. All
/// samplers go through here so that equal inputs give bit-equal draws.
inline topic_id resample_token(std::span<count_t> doc_row, std::span<count_t> word_row, std::span<count_t> totals,
                               topic_id old, const LdaConfig& cfg, double w_beta, std::span<double> cdf, Rng& rng) {
  decrement(doc_row[old], "doc_topic");
  decrement(word_row[old], "topic_word");
  decrement(totals[old], "topic_total");
  const auto k = draw_topic(doc_row, word_row, totals, cfg.alpha, cfg.beta, w_beta, cdf, uniform01(rng));
  ++doc_row[k];
  ++word_row[k];
  ++totals[k];
  return k;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Rebuilds a state from explicit assignments, tallying all count tables.
inline SamplerState restore_state(const TokenizedCorpus& c, const LdaConfig& cfg, std::vector<topic_id> z) {
  cfg.validate();
  c.validate();
  SamplerState s;
  s.n_topics = cfg.n_topics;
  s.vocab_size = c.vocab_size;
  s.doc_offsets.reserve(c.n_docs() + 1);
  s.doc_offsets.push_back(0);
  s.words.reserve(c.total_tokens());
  for (const auto& d : c.docs) {
    s.words.insert(s.words.end(), d.begin(), d.end());
    s.doc_offsets.push_back(s.words.size());
  }
  if (z.size() != s.words.size()) {
    throw ConfigError("assignment count " + std::to_string(z.size()) + " does not match corpus token count " +
                      std::to_string(s.words.size()));
  }
  s.assignments = std::move(z);
  const std::size_t Z = cfg.n_topics;
  s.doc_topic.assign(c.n_docs() * Z, 0);
  s.word_topic.assign(c.vocab_size * Z, 0);
  s.topic_total.assign(Z, 0);
  s.doc_total.assign(c.n_docs(), 0);
  for (std::size_t m = 0; m < c.n_docs(); ++m) {
    for (std::size_t i = s.doc_offsets[m]; i < s.doc_offsets[m + 1]; ++i) {
      const auto k = s.assignments[i];
      if (k >= Z) throw ConfigError("assignment " + std::to_string(k) + " out of range for " + std::to_string(Z) + " topics");
      ++s.doc_topic[m * Z + k];
      ++s.word_topic[s.words[i] * Z + k];
      ++s.topic_total[k];
    }
    s.doc_total[m] = static_cast<count_t>(s.doc_length(m));
  }
  s.rng.seed(cfg.seed);
  return s;
}

/// Uniform random topic per token, drawn in corpus order from `cfg.seed`.
inline SamplerState init_state(const TokenizedCorpus& c, const LdaConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<topic_id> z(c.total_tokens());
  for (auto& k : z) k = static_cast<topic_id>(detail::uniform_below(rng, cfg.n_topics));
  auto s = restore_state(c, cfg, std::move(z));
  s.rng = rng;
  return s;
}

/// Removes token (m, n) from all count tables.
inline void exclude_token(SamplerState& s, std::size_t m, std::size_t n) {
  const auto i = s.token_index(m, n);
  const auto k = s.assignments[i];
  detail::decrement(s.doc_topic[m * s.n_topics + k], "doc_topic");
  detail::decrement(s.word_topic[s.words[i] * s.n_topics + k], "topic_word");
  detail::decrement(s.topic_total[k], "topic_total");
}

/// Assigns token (m, n) to topic k and adds it back to the count tables.
inline void include_token(SamplerState& s, std::size_t m, std::size_t n, topic_id k) {
  const auto i = s.token_index(m, n);
  s.assignments[i] = k;
  ++s.doc_topic[m * s.n_topics + k];
  ++s.word_topic[s.words[i] * s.n_topics + k];
  ++s.topic_total[k];
}

/// Unnormalized conditional weights for token (m, n). The token must already
/// be excluded from the counts.
inline std::vector<double> conditional_weights(const SamplerState& s, const LdaConfig& cfg, std::size_t m,
                                               std::size_t n) {
  const auto w = s.words[s.token_index(m, n)];
  const auto doc = s.doc_row(m);
  const auto word = s.word_row(w);
  const double w_beta = static_cast<double>(s.vocab_size) * cfg.beta;
  std::vector<double> weights(s.n_topics);
  for (std::size_t k = 0; k < s.n_topics; ++k) {
    weights[k] = detail::topic_weight(cfg.alpha, cfg.beta, w_beta, doc[k], word[k], s.topic_total[k]);
  }
  return weights;
}

/// One sweep over all tokens in document order.
inline void gibbs_iteration(SamplerState& s, const LdaConfig& cfg) {
  const std::size_t Z = s.n_topics;
  const double w_beta = static_cast<double>(s.vocab_size) * cfg.beta;
  std::vector<double> cdf(Z);
  for (std::size_t m = 0; m < s.n_docs(); ++m) {
    auto doc = s.doc_row(m);
    for (std::size_t i = s.doc_offsets[m]; i < s.doc_offsets[m + 1]; ++i) {
      s.assignments[i] = detail::resample_token(doc, s.word_row(s.words[i]), s.topic_total, s.assignments[i], cfg,
                                                w_beta, cdf, s.rng);
    }
  }
}

/// Collapsed joint log p(w, z | alpha, beta), a product of Dirichlet-multinomial
/// terms over topics (words given topics) and documents (topics given docs).
inline double estimate_log_likelihood(const SamplerState& s, const LdaConfig& cfg) {
  const std::size_t Z = s.n_topics;
  const double W = static_cast<double>(s.vocab_size);
  const double lg_alpha = std::lgamma(cfg.alpha);
  const double lg_beta = std::lgamma(cfg.beta);
  const double lg_w_beta = std::lgamma(W * cfg.beta);
  const double lg_z_alpha = std::lgamma(static_cast<double>(Z) * cfg.alpha);

  double ll = 0.0;
  for (std::size_t k = 0; k < Z; ++k) ll += lg_w_beta - std::lgamma(s.topic_total[k] + W * cfg.beta);
  for (const auto count : s.word_topic) {
    if (count > 0) ll += std::lgamma(count + cfg.beta) - lg_beta;
  }
  for (std::size_t m = 0; m < s.n_docs(); ++m) {
    ll += lg_z_alpha - std::lgamma(s.doc_total[m] + static_cast<double>(Z) * cfg.alpha);
    for (const auto count : s.doc_row(m)) {
      if (count > 0) ll += std::lgamma(count + cfg.alpha) - lg_alpha;
    }
  }
  return ll;
}

/// Re-tallies the count tables from the assignments. Returns a description of
/// the first disagreement, or nullopt when every table matches exactly.
inline std::optional<std::string> find_count_mismatch(const SamplerState& s) {
  const std::size_t Z = s.n_topics;
  std::vector<count_t> dt(s.n_docs() * Z, 0), wt(s.vocab_size * Z, 0), tt(Z, 0);
  for (std::size_t m = 0; m < s.n_docs(); ++m) {
    for (std::size_t i = s.doc_offsets[m]; i < s.doc_offsets[m + 1]; ++i) {
      const auto k = s.assignments[i];
      if (k >= Z) return "assignment out of range at token " + std::to_string(i);
      ++dt[m * Z + k];
      ++wt[s.words[i] * Z + k];
      ++tt[k];
    }
    if (s.doc_total[m] != static_cast<count_t>(s.doc_length(m))) {
      return "doc_total mismatch for document " + std::to_string(m);
    }
  }
  if (dt != s.doc_topic) return "doc_topic does not match re-tally";
  if (wt != s.word_topic) return "topic_word does not match re-tally";
  if (tt != s.topic_total) return "topic_total does not match re-tally";
  return std::nullopt;
}

/// Initializes from `cfg.seed` (or from `initial` assignments, e.g. a loaded
/// checkpoint) and performs `cfg.n_iterations` sweeps. The trace records the
/// sweep time and the log-likelihood after each sweep; the likelihood
/// evaluation is not included in the duration.
inline RunResult run(const TokenizedCorpus& c, const LdaConfig& cfg, const IterationHook& hook = {},
                     std::optional<std::vector<topic_id>> initial = std::nullopt) {
  RunResult r{initial ? restore_state(c, cfg, std::move(*initial)) : init_state(c, cfg), {}};
  r.trace.reserve(cfg.n_iterations);
  for (std::size_t it = 1; it <= cfg.n_iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    gibbs_iteration(r.state, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    r.trace.push_back({it, std::chrono::duration<double, std::milli>(t1 - t0).count(),
                       estimate_log_likelihood(r.state, cfg)});
    if (hook) hook(it, r.state);
  }
  return r;
}

/// theta[m][k] = (C[k,m,*] + alpha) / (C[*,m,*] + Z*alpha)
inline ThetaMatrix recover_theta(const SamplerState& s, const LdaConfig& cfg) {
  const std::size_t Z = s.n_topics;
  ThetaMatrix theta(s.n_docs(), Z);
  for (std::size_t m = 0; m < s.n_docs(); ++m) {
    const double denom = s.doc_total[m] + static_cast<double>(Z) * cfg.alpha;
    const auto counts = s.doc_row(m);
    for (std::size_t k = 0; k < Z; ++k) theta(m, k) = (counts[k] + cfg.alpha) / denom;
  }
  return theta;
}

/// phi[k][w] = (C[k,*,w] + beta) / (C[k,*,*] + W*beta)
inline PhiMatrix recover_phi(const SamplerState& s, const LdaConfig& cfg) {
  const std::size_t Z = s.n_topics;
  const std::size_t W = s.vocab_size;
  PhiMatrix phi(Z, W);
  for (std::size_t k = 0; k < Z; ++k) {
    const double denom = s.topic_total[k] + static_cast<double>(W) * cfg.beta;
    for (std::size_t w = 0; w < W; ++w) phi(k, w) = (s.topic_word(k, w) + cfg.beta) / denom;
  }
  return phi;
}

// ---------------------------------------------------------------------------
// Checkpoints and trace export

/// "LDZ1", u64 token count, then one little-endian u16 topic per token.
inline void save_checkpoint(const SamplerState& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("LDZ1", 4);
  detail::write_le<std::uint64_t>(out, s.assignments.size());
  for (const auto k : s.assignments) detail::write_le<std::uint16_t>(out, k);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<topic_id> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  detail::expect_magic(in, "LDZ1");
  const auto n = detail::read_le<std::uint64_t>(in, "token count");
  std::vector<topic_id> z;
  z.reserve(std::min<std::uint64_t>(n, std::uint64_t{1} << 28));
  for (std::uint64_t i = 0; i < n; ++i) z.push_back(detail::read_le<std::uint16_t>(in, "topic id"));
  return z;
}

inline void save_trace_csv(const TraceLog& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iteration,duration_ms,log_likelihood\n";
  for (const auto& e : trace) {
    out << e.iteration << ',' << detail::format_sig(e.duration_ms, 6) << ',' << detail::format_exact(e.log_likelihood)
        << '\n';
  }
}

}  // namespace topiclens
