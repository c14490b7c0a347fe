#pragma once

// Multi-threaded collapsed Gibbs sampling.
//
// Documents are split into P contiguous blocks of roughly equal token count;
// worker i owns the doc_topic rows and assignments of block i for the whole
// run. Two synchronization schemes are available:
//
// rotation     The vocabulary is cut into S word slices, grouped round-robin
//              into P groups. An iteration has P steps; in step r worker i
//              holds group (i + r) mod P and samples only the tokens of its
//              documents whose word lies in that group. A group's topic_word
//              rows are written only by its current holder. Each worker
//              samples against a private copy of topic_total taken at the
//              start of the step; the copies are merged at every step
//              barrier, so the totals are stale by at most one step.
//
// epoch_merge  Each worker copies topic_word and topic_total at the start of
//              the iteration and samples its documents against that copy
//              (plus its own updates). The per-worker deltas are merged at
//              the iteration barrier.
//
// Worker 0 continues the generator that initialized the state; worker i > 0
// uses a stream seeded from (seed, i). With P = 1 both schemes reproduce the
// sequential sampler exactly.

#include <atomic>
#include <barrier>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <thread>
#include <vector>

#include "topiclens/error.hpp"
#include "topiclens/sampler.hpp"
#include "topiclens/stats.hpp"

namespace topiclens {

enum class SyncMode { rotation, epoch_merge };

struct ParallelConfig {
  LdaConfig base;
  std::size_t n_threads = 1;
  SyncMode sync_mode = SyncMode::rotation;
  std::size_t n_word_slices = 0;  // 0 means n_threads
  bool track_ownership = false;   // record row-ownership violations (debugging aid)

  std::size_t word_slices() const noexcept { return n_word_slices ? n_word_slices : n_threads; }

  void validate() const {
    base.validate();
    if (n_threads < 1) throw ConfigError("n_threads must be at least 1");
    if (sync_mode == SyncMode::rotation && word_slices() < n_threads) {
      throw ConfigError("rotation mode needs at least as many word slices as threads");
    }
  }
};

struct ParallelRunResult : RunResult {
  std::size_t ownership_violations = 0;
};

/// Contiguous document blocks balanced by token count. Returns P + 1
/// boundaries into the document list.
inline std::vector<std::size_t> partition_documents(std::span<const std::size_t> doc_offsets, std::size_t parts) {
  const std::size_t n_docs = doc_offsets.size() - 1;
  const std::size_t n_tokens = doc_offsets.back();
  std::vector<std::size_t> bounds(parts + 1, n_docs);
  bounds[0] = 0;
  for (std::size_t i = 1; i < parts; ++i) {
    const std::size_t target = n_tokens * i / parts;
    const auto it = std::lower_bound(doc_offsets.begin(), doc_offsets.end() - 1, target);
    bounds[i] = std::max(bounds[i - 1], static_cast<std::size_t>(it - doc_offsets.begin()));
  }
  return bounds;
}

/// Contiguous word ranges balanced by token frequency; returns the slice of
/// every word.
inline std::vector<std::size_t> partition_vocabulary(std::span<const std::size_t> word_frequency, std::size_t slices) {
  std::size_t total = 0;
  for (const auto f : word_frequency) total += f;
  std::vector<std::size_t> slice_of(word_frequency.size(), 0);
  std::size_t before = 0;
  for (std::size_t w = 0; w < word_frequency.size(); ++w) {
    const std::size_t s = total ? before * slices / total : w * slices / word_frequency.size();
    slice_of[w] = std::min(slices - 1, s);
    before += word_frequency[w];
  }
  return slice_of;
}

namespace detail {

/// Records which worker holds write access to each topic_word and doc_topic
/// row; any attempt to take a row that is already held is counted.
class OwnershipTracker {
 public:
  OwnershipTracker(std::size_t words, std::size_t docs, bool enabled)
      : enabled_(enabled), words_(enabled ? words : 0), docs_(enabled ? docs : 0) {
    for (auto& o : words_) o.store(-1);
    for (auto& o : docs_) o.store(-1);
  }

  bool enabled() const noexcept { return enabled_; }
  void acquire_word(std::size_t w, int worker) { acquire(words_[w], worker); }
  void release_word(std::size_t w, int worker) { release(words_[w], worker); }
  void acquire_doc(std::size_t m, int worker) { acquire(docs_[m], worker); }
  void release_doc(std::size_t m, int worker) { release(docs_[m], worker); }
  std::size_t violations() const noexcept { return violations_.load(); }

 private:
  void acquire(std::atomic<int>& owner, int worker) {
    int expected = -1;
    if (!owner.compare_exchange_strong(expected, worker)) violations_.fetch_add(1);
  }
  void release(std::atomic<int>& owner, int worker) {
    int expected = worker;
    if (!owner.compare_exchange_strong(expected, -1)) violations_.fetch_add(1);
  }

  bool enabled_;
  std::vector<std::atomic<int>> words_;
  std::vector<std::atomic<int>> docs_;
  std::atomic<std::size_t> violations_{0};
};

/// Runs body(i) for i in [0, n) on n threads (the caller runs i = 0) and
/// rethrows the first failure after all have joined.
template <typename Body>
void run_workers(std::size_t n, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> threads;
    threads.reserve(n - 1);
    for (std::size_t i = 1; i < n; ++i) {
      threads.emplace_back([&, i] {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    try {
      body(0);
    } catch (...) {
      errors[0] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct TokenRef {
  std::size_t pos;
  std::size_t doc;
};

class RotationScheduler {
 public:
  RotationScheduler(const SamplerState& s, std::span<const std::size_t> doc_bounds, std::size_t n_slices)
      : workers_(doc_bounds.size() - 1), doc_bounds_(doc_bounds.begin(), doc_bounds.end()) {
    std::vector<std::size_t> freq(s.vocab_size, 0);
    for (const auto w : s.words) ++freq[w];
    const auto slice_of = partition_vocabulary(freq, n_slices);
    group_of_word_.resize(s.vocab_size);
    words_in_group_.resize(workers_);
    for (std::size_t w = 0; w < s.vocab_size; ++w) {
      group_of_word_[w] = slice_of[w] % workers_;
      words_in_group_[group_of_word_[w]].push_back(w);
    }
    schedule_.assign(workers_, std::vector<std::vector<TokenRef>>(workers_));
    for (std::size_t i = 0; i < workers_; ++i) {
      for (std::size_t m = doc_bounds_[i]; m < doc_bounds_[i + 1]; ++m) {
        for (std::size_t pos = s.doc_offsets[m]; pos < s.doc_offsets[m + 1]; ++pos) {
          schedule_[i][group_of_word_[s.words[pos]]].push_back({pos, m});
        }
      }
    }
    local_totals_.assign(workers_, std::vector<count_t>(s.n_topics, 0));
    active_.assign(workers_, 1);
  }

  void iterate(SamplerState& s, const LdaConfig& cfg, std::span<Rng> rngs, OwnershipTracker& tracker) {
    const std::size_t P = workers_;
    const std::size_t Z = s.n_topics;
    const double w_beta = static_cast<double>(s.vocab_size) * cfg.beta;
    std::fill(active_.begin(), active_.end(), 1);
    bool underflow = false;

    auto reconcile = [&]() noexcept {
      for (std::size_t k = 0; k < Z; ++k) {
        count_t merged = s.topic_total[k];
        for (std::size_t i = 0; i < P; ++i) {
          if (active_[i]) merged += local_totals_[i][k] - s.topic_total[k];
        }
        if (merged < 0) underflow = true;
        s.topic_total[k] = merged;
      }
    };
    std::barrier sync(static_cast<std::ptrdiff_t>(P), reconcile);

    run_workers(P, [&](std::size_t i) {
      const int id = static_cast<int>(i);
      std::vector<double> cdf(Z);
      try {
        if (tracker.enabled()) {
          for (std::size_t m = doc_bounds_[i]; m < doc_bounds_[i + 1]; ++m) tracker.acquire_doc(m, id);
        }
        for (std::size_t step = 0; step < P; ++step) {
          const std::size_t g = (i + step) % P;
          auto& totals = local_totals_[i];
          std::copy(s.topic_total.begin(), s.topic_total.end(), totals.begin());
          if (tracker.enabled()) {
            for (const auto w : words_in_group_[g]) tracker.acquire_word(w, id);
          }
          for (const auto& t : schedule_[i][g]) {
            s.assignments[t.pos] = resample_token(s.doc_row(t.doc), s.word_row(s.words[t.pos]), totals,
                                                  s.assignments[t.pos], cfg, w_beta, cdf, rngs[i]);
          }
          if (tracker.enabled()) {
            for (const auto w : words_in_group_[g]) tracker.release_word(w, id);
          }
          sync.arrive_and_wait();
        }
        if (tracker.enabled()) {
          for (std::size_t m = doc_bounds_[i]; m < doc_bounds_[i + 1]; ++m) tracker.release_doc(m, id);
        }
      } catch (...) {
        active_[i] = 0;
        sync.arrive_and_drop();
        throw;
      }
    });
    if (underflow) throw StateCorruptionError("topic_total went negative while merging rotation steps");
  }

 private:
  std::size_t workers_;
  std::vector<std::size_t> doc_bounds_;
  std::vector<std::size_t> group_of_word_;
  std::vector<std::vector<std::size_t>> words_in_group_;
  std::vector<std::vector<std::vector<TokenRef>>> schedule_;  // [worker][group]
  std::vector<std::vector<count_t>> local_totals_;
  std::vector<char> active_;
};

class EpochMergeScheduler {
 public:
  EpochMergeScheduler(const SamplerState& s, std::span<const std::size_t> doc_bounds)
      : workers_(doc_bounds.size() - 1),
        doc_bounds_(doc_bounds.begin(), doc_bounds.end()),
        local_words_(workers_, std::vector<count_t>(s.word_topic.size())),
        local_totals_(workers_, std::vector<count_t>(s.n_topics)) {}

  void iterate(SamplerState& s, const LdaConfig& cfg, std::span<Rng> rngs, OwnershipTracker& tracker) {
    const std::size_t Z = s.n_topics;
    const double w_beta = static_cast<double>(s.vocab_size) * cfg.beta;
    run_workers(workers_, [&](std::size_t i) {
      const int id = static_cast<int>(i);
      auto& words = local_words_[i];
      auto& totals = local_totals_[i];
      std::copy(s.word_topic.begin(), s.word_topic.end(), words.begin());
      std::copy(s.topic_total.begin(), s.topic_total.end(), totals.begin());
      std::vector<double> cdf(Z);
      for (std::size_t m = doc_bounds_[i]; m < doc_bounds_[i + 1]; ++m) {
        if (tracker.enabled()) tracker.acquire_doc(m, id);
        auto doc = s.doc_row(m);
        for (std::size_t pos = s.doc_offsets[m]; pos < s.doc_offsets[m + 1]; ++pos) {
          std::span<count_t> word_row(words.data() + s.words[pos] * Z, Z);
          s.assignments[pos] = resample_token(doc, word_row, totals, s.assignments[pos], cfg, w_beta, cdf, rngs[i]);
        }
        if (tracker.enabled()) tracker.release_doc(m, id);
      }
    });
    merge(s.word_topic, local_words_, "topic_word");
    merge(s.topic_total, local_totals_, "topic_total");
  }

 private:
  void merge(std::vector<count_t>& global, const std::vector<std::vector<count_t>>& locals, const char* table) {
    for (std::size_t j = 0; j < global.size(); ++j) {
      count_t merged = global[j];
      for (const auto& local : locals) merged += local[j] - global[j];
      if (merged < 0) throw StateCorruptionError(std::string("negative count after merging ") + table);
      global[j] = merged;
    }
  }

  std::size_t workers_;
  std::vector<std::size_t> doc_bounds_;
  std::vector<std::vector<count_t>> local_words_;
  std::vector<std::vector<count_t>> local_totals_;
};

}  // namespace detail

/// Multi-threaded equivalent of `run`. Blocks until every worker has joined.
/// Throws StateCorruptionError if the final tables disagree with a re-tally
/// of the assignments.
inline ParallelRunResult run_parallel(const TokenizedCorpus& c, const ParallelConfig& pcfg,
                                      const IterationHook& hook = {},
                                      std::optional<std::vector<topic_id>> initial = std::nullopt) {
  pcfg.validate();
  const LdaConfig& cfg = pcfg.base;
  const std::size_t P = pcfg.n_threads;

  ParallelRunResult r;
  r.state = initial ? restore_state(c, cfg, std::move(*initial)) : init_state(c, cfg);
  SamplerState& s = r.state;
  const auto doc_bounds = partition_documents(s.doc_offsets, P);

  std::vector<Rng> rngs;
  rngs.reserve(P);
  rngs.push_back(s.rng);
  for (std::size_t i = 1; i < P; ++i) rngs.emplace_back(detail::splitmix64(cfg.seed ^ detail::splitmix64(i)));

  detail::OwnershipTracker tracker(s.vocab_size, s.n_docs(), pcfg.track_ownership);
  std::optional<detail::RotationScheduler> rotation;
  std::optional<detail::EpochMergeScheduler> epoch;
  if (pcfg.sync_mode == SyncMode::rotation) {
    rotation.emplace(s, doc_bounds, pcfg.word_slices());
  } else {
    epoch.emplace(s, doc_bounds);
  }

  r.trace.reserve(cfg.n_iterations);
  for (std::size_t it = 1; it <= cfg.n_iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    if (rotation) {
      rotation->iterate(s, cfg, rngs, tracker);
    } else {
      epoch->iterate(s, cfg, rngs, tracker);
    }
    const auto t1 = std::chrono::steady_clock::now();
    r.trace.push_back({it, std::chrono::duration<double, std::milli>(t1 - t0).count(),
                       estimate_log_likelihood(s, cfg)});
    if (hook) hook(it, s);
  }
  s.rng = rngs[0];
  if (const auto mismatch = find_count_mismatch(s)) {
    throw StateCorruptionError("reconciliation failed: " + *mismatch);
  }
  r.ownership_violations = tracker.violations();
  return r;
}

// ---------------------------------------------------------------------------
// Thread-count scaling

struct ScalingRecord {
  std::size_t n_threads = 0;
  std::vector<double> per_iteration_ms;
  double median_ms = 0.0;  // over iterations 3 and later
  double estimated_total_ms = 0.0;
  double final_log_likelihood = 0.0;
};

struct ScalingReport {
  std::size_t estimated_iterations = 0;
  std::vector<ScalingRecord> records;
};

/// Times `measure_iterations` sweeps per thread count and extrapolates the
/// cost of `base.n_iterations` sweeps from the median of iterations 3+.
inline ScalingReport scaling_benchmark(const TokenizedCorpus& c, const LdaConfig& base,
                                       std::span<const std::size_t> thread_counts, std::size_t measure_iterations,
                                       SyncMode mode = SyncMode::rotation) {
  if (measure_iterations < 2) throw ConfigError("measure_iterations must be at least 2");
  ScalingReport report;
  report.estimated_iterations = base.n_iterations;
  for (const auto threads : thread_counts) {
    ParallelConfig pcfg;
    pcfg.base = base;
    pcfg.base.n_iterations = measure_iterations;
    pcfg.base.burn_in = 0;
    pcfg.n_threads = threads;
    pcfg.sync_mode = mode;
    const auto result = run_parallel(c, pcfg);

    ScalingRecord rec;
    rec.n_threads = threads;
    for (const auto& e : result.trace) rec.per_iteration_ms.push_back(e.duration_ms);
    const auto warm = std::span<const double>(rec.per_iteration_ms)
                          .subspan(rec.per_iteration_ms.size() > 2 ? 2 : 0);
    rec.median_ms = median(warm);
    rec.estimated_total_ms = rec.median_ms * static_cast<double>(base.n_iterations);
    rec.final_log_likelihood = result.trace.back().log_likelihood;
    report.records.push_back(std::move(rec));
  }
  return report;
}

/// `n_threads,iteration,duration_ms`
inline void save_scaling_iterations_csv(const ScalingReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "n_threads,iteration,duration_ms\n";
  for (const auto& rec : report.records) {
    for (std::size_t i = 0; i < rec.per_iteration_ms.size(); ++i) {
      out << rec.n_threads << ',' << i + 1 << ',' << detail::format_sig(rec.per_iteration_ms[i], 6) << '\n';
    }
  }
}

/// `n_threads,median_ms,estimated_total_ms,final_ll`
inline void save_scaling_summary_csv(const ScalingReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "n_threads,median_ms,estimated_total_ms,final_ll\n";
  for (const auto& rec : report.records) {
    out << rec.n_threads << ',' << detail::format_sig(rec.median_ms, 6) << ','
        << detail::format_sig(rec.estimated_total_ms, 8) << ',' << detail::format_exact(rec.final_log_likelihood)
        << '\n';
  }
}

}  // namespace topiclens
