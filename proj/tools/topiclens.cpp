// topiclens command-line tool.
//
// Exit codes:
//   0  success
//   1  I/O or internal failure
//   2  bad flags or malformed input file
//   3  tokenization produced an empty corpus
//   4  corpus does not match the training configuration or checkpoint
//   5  categories file references a document missing from the scores

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "manifest.hpp"
#include "topiclens/topiclens.hpp"

namespace fs = std::filesystem;
using namespace topiclens;
using topiclens::cli::RunManifest;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kBadInput = 2,
  kEmptyCorpus = 3,
  kMismatch = 4,
  kUnknownDocument = 5,
};

struct ExitError : std::runtime_error {
  ExitError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

SyncMode parse_sync(const std::string& s) {
  if (s == "rotation") return SyncMode::rotation;
  if (s == "epoch-merge" || s == "epoch_merge") return SyncMode::epoch_merge;
  throw ExitError(kBadInput, "unknown sync mode '" + s + "'");
}

std::string sync_name(SyncMode m) { return m == SyncMode::rotation ? "rotation" : "epoch-merge"; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

// Scores for eval: a labeled CSV (theta), or a feature matrix in text
// (`N V` header) or binary (`FMX1`) form.
LabeledMatrix load_scores(const fs::path& path, bool softmax) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string first;
  std::getline(in, first);
  in.close();
  std::optional<FeatureMatrix> features;
  if (first.starts_with("FMX1")) {
    features = load_feature_matrix(path, MatrixFormat::binary);
  } else {
    const auto header = detail::split(detail::trim(first), ' ');
    if (header.size() == 2 && detail::parse_number<std::size_t>(header[0]) &&
        detail::parse_number<std::size_t>(header[1])) {
      features = load_feature_matrix(path, MatrixFormat::text);
    }
  }
  if (!features) return read_labeled_csv(path);
  LabeledMatrix m;
  m.row_ids = features->doc_ids;
  for (std::size_t j = 0; j < features->n_dims; ++j) m.col_names.push_back("dim_" + std::to_string(j));
  m.values = raw_baseline_probs(*features, softmax);
  return m;
}

void print_stats(const CorpusStats& s, std::size_t dropped) {
  std::cout << "n_docs,vocab_size,total_tokens,distinct_words_used,dropped\n"
            << s.n_docs << ',' << s.vocab_size << ',' << s.total_tokens << ',' << s.distinct_words_used << ','
            << dropped << '\n';
}

// ---------------------------------------------------------------------------

struct TokenizeArgs {
  std::string input, output, format = "text", weighting = "binary";
  double threshold = 0.0;
  std::size_t max_repeats = 8;
  bool keep_all = false;
};

int cmd_tokenize(const TokenizeArgs& a) {
  const auto format = a.format == "binary" ? MatrixFormat::binary : MatrixFormat::text;
  const auto matrix = load_feature_matrix(a.input, format);
  TokenizeOptions opt;
  opt.threshold = a.threshold;
  opt.weighting = a.weighting == "proportional" ? Weighting::proportional : Weighting::binary;
  opt.max_repeats = a.max_repeats;
  opt.keep_all = a.keep_all;
  const auto result = threshold_tokenize(matrix, opt);
  save_corpus(result.corpus, a.output);
  save_dropped_report(result.dropped, a.output + ".dropped.csv");
  print_stats(corpus_stats(result.corpus), result.dropped.rows.size());
  return kOk;
}

struct TrainArgs {
  std::string corpus, out_dir, sync = "rotation", resume;
  std::size_t topics = 0, iterations = 1000, burn_in = 200, threads = 1, word_slices = 0;
  std::optional<double> alpha;
  double beta = 0.01;
  std::uint64_t seed = 42;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  const auto corpus = load_corpus(a.corpus);
  LdaConfig cfg = LdaConfig::defaults_for(a.topics);
  if (a.alpha) cfg.alpha = *a.alpha;
  cfg.beta = a.beta;
  cfg.n_iterations = a.iterations;
  cfg.burn_in = a.burn_in;
  cfg.seed = a.seed;
  cfg.validate();

  std::optional<std::vector<topic_id>> initial;
  if (!a.resume.empty()) {
    initial = load_checkpoint(a.resume);
    if (initial->size() != corpus.total_tokens()) {
      throw ExitError(kMismatch, "checkpoint has " + std::to_string(initial->size()) + " assignments but the corpus has " +
                                     std::to_string(corpus.total_tokens()) + " tokens");
    }
    for (const auto k : *initial) {
      if (k >= cfg.n_topics) throw ExitError(kMismatch, "checkpoint topic " + std::to_string(k) + " >= --topics");
    }
  }

  RunManifest manifest("train", kVersion);
  auto& jc = manifest.config();
  jc["n_topics"] = cfg.n_topics;
  jc["alpha"] = cfg.alpha;
  jc["beta"] = cfg.beta;
  jc["n_iterations"] = cfg.n_iterations;
  jc["burn_in"] = cfg.burn_in;
  jc["seed"] = cfg.seed;
  jc["n_threads"] = a.threads;
  jc["sync_mode"] = sync_name(parse_sync(a.sync));
  jc["n_word_slices"] = a.word_slices ? a.word_slices : a.threads;
  manifest.add_input(a.corpus);
  if (!a.resume.empty()) manifest.add_input(a.resume);

  IterationHook progress;
  if (!a.quiet) {
    progress = [&](std::size_t it, const SamplerState&) {
      if (it % 10 == 0 || it == cfg.n_iterations) std::cerr << "iteration " << it << '/' << cfg.n_iterations << '\n';
    };
  }

  RunResult result;
  if (a.threads <= 1) {
    result = run(corpus, cfg, progress, std::move(initial));
  } else {
    ParallelConfig pcfg;
    pcfg.base = cfg;
    pcfg.n_threads = a.threads;
    pcfg.sync_mode = parse_sync(a.sync);
    pcfg.n_word_slices = a.word_slices;
    result = run_parallel(corpus, pcfg, progress, std::move(initial));
  }
  if (const auto mismatch = find_count_mismatch(result.state)) {
    throw StateCorruptionError("final counts do not re-tally: " + *mismatch);
  }

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  save_checkpoint(result.state, dir / "z.ldz");
  write_labeled_csv(dir / "theta.csv", corpus.doc_ids, recover_theta(result.state, cfg), "topic_");
  {
    std::vector<std::string> topic_ids;
    for (std::size_t k = 0; k < cfg.n_topics; ++k) topic_ids.push_back("topic_" + std::to_string(k));
    write_labeled_csv(dir / "phi.csv", topic_ids, recover_phi(result.state, cfg), "word_", 0, "topic");
  }
  save_trace_csv(result.trace, dir / "trace.csv");
  for (const char* name : {"z.ldz", "theta.csv", "phi.csv", "trace.csv"}) manifest.add_output(dir / name);
  manifest.write(dir / "manifest.json");

  const double ll = result.trace.empty() ? estimate_log_likelihood(result.state, cfg) : result.trace.back().log_likelihood;
  std::cout << "n_docs,n_tokens,n_topics,iterations,final_log_likelihood\n"
            << corpus.n_docs() << ',' << corpus.total_tokens() << ',' << cfg.n_topics << ',' << cfg.n_iterations << ','
            << detail::format_exact(ll) << '\n';
  return kOk;
}

struct TopicsArgs {
  std::string theta;
  std::size_t top = 5;
  bool json = false;
};

int cmd_topics(const TopicsArgs& a) {
  const auto theta = read_labeled_csv(a.theta);
  const auto top = top_documents_per_topic(theta.values, a.top);
  if (a.json) {
    nlohmann::json out;
    out["top"] = a.top;
    out["topics"] = nlohmann::json::array();
    for (std::size_t k = 0; k < top.size(); ++k) {
      nlohmann::json docs = nlohmann::json::array();
      for (const auto m : top[k]) docs.push_back({{"doc_id", theta.row_ids[m]}, {"theta", theta.values(m, k)}});
      out["topics"].push_back({{"topic", k}, {"documents", docs}});
    }
    std::cout << out.dump(2) << '\n';
  } else {
    for (std::size_t k = 0; k < top.size(); ++k) {
      std::cout << "topic_" << k << ':';
      for (const auto m : top[k]) std::cout << ' ' << theta.row_ids[m];
      std::cout << '\n';
    }
  }
  return kOk;
}

struct EvalArgs {
  std::string scores, categories, method_tag = "lda", out_dir;
  std::vector<std::size_t> ks{1, 2, 3};
  bool softmax = false;
};

int cmd_eval(const EvalArgs& a) {
  if (a.method_tag != "raw" && a.method_tag != "lda") throw ExitError(kBadInput, "--method-tag must be raw or lda");
  const Method method = a.method_tag == "raw" ? Method::raw : Method::lda;
  const auto scores = load_scores(a.scores, a.softmax);
  const auto labels = load_categories_csv(a.categories);

  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < scores.row_ids.size(); ++i) row_of.emplace(scores.row_ids[i], i);
  CategoryPartition part;
  for (const auto& l : labels) {
    const auto it = row_of.find(l.doc_id);
    if (it == row_of.end()) throw ExitError(kUnknownDocument, "document '" + l.doc_id + "' is not in " + a.scores);
    part[l.category].push_back(it->second);
  }
  for (auto& [label, docs] : part) std::sort(docs.begin(), docs.end());

  const auto report = consistent_rate(scores.values, part, a.ks, method);
  const auto outliers = flag_outliers(scores.values, part, scores.row_ids);

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  save_consistency_csv(std::span(&report, 1), dir / "consistency.csv");
  save_outliers_csv(outliers, dir / "outliers.csv");

  RunManifest manifest("eval", kVersion);
  manifest.config()["method"] = a.method_tag;
  manifest.config()["ks"] = a.ks;
  manifest.config()["softmax"] = a.softmax;
  manifest.add_input(a.scores);
  manifest.add_input(a.categories);
  manifest.add_output(dir / "consistency.csv");
  manifest.add_output(dir / "outliers.csv");
  manifest.write(dir / "manifest.json");

  // Table-style grid: one row per method[k], one column per category.
  std::cout << std::left << std::setw(12) << "method";
  for (const auto& c : report.categories) std::cout << ' ' << std::setw(10) << c.category;
  std::cout << '\n';
  std::vector<std::size_t> ks = a.ks;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  for (const auto k : ks) {
    std::cout << std::setw(12) << (a.method_tag + "[" + std::to_string(k) + "]");
    for (const auto& c : report.categories) {
      std::cout << ' ' << std::setw(10) << std::fixed << std::setprecision(4) << c.rate(k);
    }
    std::cout << '\n';
  }
  std::cout << "outliers " << outliers.size() << '\n';
  return kOk;
}

struct SpectrogramArgs {
  std::string theta, group_by, output;
};

int cmd_spectrogram(const SpectrogramArgs& a) {
  const auto theta = read_labeled_csv(a.theta);
  std::vector<std::size_t> order(theta.row_ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!a.group_by.empty()) {
    std::unordered_map<std::string, std::string> cat;
    for (const auto& l : load_categories_csv(a.group_by)) cat[l.doc_id] = l.category;
    auto key = [&](std::size_t i) {
      const auto it = cat.find(theta.row_ids[i]);
      return it == cat.end() ? std::pair<bool, std::string>{true, ""} : std::pair<bool, std::string>{false, it->second};
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return key(x) < key(y); });
  }
  spectrogram_export(theta.values, theta.row_ids, order, a.output + ".csv", a.output + ".pgm");
  std::cout << "wrote " << a.output << ".csv and " << a.output << ".pgm (" << theta.row_ids.size() << " documents x "
            << theta.values.cols() << " topics)\n";
  return kOk;
}

struct BenchArgs {
  std::string corpus, out_dir, sync = "rotation";
  std::size_t topics = 0, measure_iterations = 20, iterations = 1000;
  std::vector<std::size_t> threads{1, 2, 4, 8};
  std::optional<double> alpha;
  double beta = 0.01;
  std::uint64_t seed = 42;
};

int cmd_bench(const BenchArgs& a) {
  const auto corpus = load_corpus(a.corpus);
  LdaConfig cfg = LdaConfig::defaults_for(a.topics);
  if (a.alpha) cfg.alpha = *a.alpha;
  cfg.beta = a.beta;
  cfg.n_iterations = a.iterations;
  cfg.burn_in = 0;
  cfg.seed = a.seed;
  cfg.validate();
  for (const auto t : a.threads) {
    if (t < 1) throw ExitError(kBadInput, "--threads entries must be at least 1");
  }
  const auto report = scaling_benchmark(corpus, cfg, a.threads, a.measure_iterations, parse_sync(a.sync));

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  save_scaling_iterations_csv(report, dir / "bench_iterations.csv");
  save_scaling_summary_csv(report, dir / "bench_summary.csv");

  RunManifest manifest("bench", kVersion);
  auto& jc = manifest.config();
  jc["n_topics"] = cfg.n_topics;
  jc["alpha"] = cfg.alpha;
  jc["beta"] = cfg.beta;
  jc["estimated_iterations"] = cfg.n_iterations;
  jc["measure_iterations"] = a.measure_iterations;
  jc["threads"] = a.threads;
  jc["sync_mode"] = a.sync;
  jc["seed"] = cfg.seed;
  manifest.add_input(a.corpus);
  manifest.add_output(dir / "bench_iterations.csv");
  manifest.add_output(dir / "bench_summary.csv");
  manifest.write(dir / "manifest.json");

  double base_ms = report.records.front().median_ms;
  for (const auto& r : report.records) {
    if (r.n_threads == 1) {
      base_ms = r.median_ms;
      break;
    }
  }
  std::cout << "n_threads,median_ms,estimated_total_ms,speedup\n";
  for (const auto& r : report.records) {
    std::cout << r.n_threads << ',' << detail::format_sig(r.median_ms, 6) << ','
              << detail::format_sig(r.estimated_total_ms, 8) << ',' << detail::format_sig(base_ms / r.median_ms, 4)
              << '\n';
  }
  return kOk;
}

struct SynthArgs {
  SynthConfig cfg;
  std::string output;
  bool no_scores = false;
};

int cmd_synth(SynthArgs a) {
  a.cfg.with_scores = !a.no_scores;
  const auto data = generate_synthetic(a.cfg);
  save_corpus(data.corpus, a.output + ".corpus");
  save_categories_csv(data.corpus, a.output + ".categories.csv");
  save_truth_csv(data, a.output + ".truth.csv");
  if (a.cfg.with_scores) save_feature_matrix(data.scores, a.output + ".scores.txt", MatrixFormat::text);
  print_stats(corpus_stats(data.corpus), 0);
  std::cout << "mislabeled " << data.mislabeled.size() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"topiclens: topic extraction from per-image feature vectors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  TokenizeArgs tok;
  auto* tokenize = app.add_subcommand("tokenize", "threshold a feature matrix into a bag-of-words corpus");
  tokenize->add_option("--input", tok.input, "feature matrix file")->required();
  tokenize->add_option("--format", tok.format, "text|binary")->check(CLI::IsMember({"text", "binary"}));
  tokenize->add_option("--threshold", tok.threshold, "keep dimensions scoring above this");
  tokenize->add_option("--weighting", tok.weighting, "binary|proportional")
      ->check(CLI::IsMember({"binary", "proportional"}));
  tokenize->add_option("--max-repeats", tok.max_repeats, "proportional mode repeat cap")->check(CLI::PositiveNumber);
  tokenize->add_flag("--keep-all", tok.keep_all, "keep every dimension (threshold = -inf)");
  tokenize->add_option("--output", tok.output, "corpus file to write")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "fit LDA by collapsed Gibbs sampling");
  train->add_option("--corpus", tr.corpus)->required();
  train->add_option("--topics", tr.topics)->required()->check(CLI::PositiveNumber);
  train->add_option("--alpha", tr.alpha, "default 50/topics");
  train->add_option("--beta", tr.beta);
  train->add_option("--iterations", tr.iterations);
  train->add_option("--burn-in", tr.burn_in);
  train->add_option("--seed", tr.seed);
  train->add_option("--threads", tr.threads)->envname("TOPICLENS_THREADS")->check(CLI::PositiveNumber);
  train->add_option("--sync", tr.sync, "rotation|epoch-merge")
      ->check(CLI::IsMember({"rotation", "epoch-merge", "epoch_merge"}));
  train->add_option("--word-slices", tr.word_slices, "rotation mode slices (default: threads)");
  train->add_option("--resume", tr.resume, "start from a z checkpoint");
  train->add_option("--out-dir", tr.out_dir)->required();
  train->add_flag("--quiet", tr.quiet, "no per-iteration progress on stderr");

  TopicsArgs tp;
  auto* topics = app.add_subcommand("topics", "list the top documents of every topic");
  topics->add_option("--theta", tp.theta)->required();
  topics->add_option("--top", tp.top)->check(CLI::PositiveNumber);
  topics->add_flag("--json", tp.json);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "consistent rate and outlier report against categories");
  eval->add_option("--scores", ev.scores, "theta CSV or raw feature matrix")->required();
  eval->add_option("--categories", ev.categories, "CSV of doc_id,category")->required();
  eval->add_option("--k", ev.ks)->delimiter(',')->check(CLI::PositiveNumber);
  eval->add_option("--method-tag", ev.method_tag, "raw|lda");
  eval->add_flag("--softmax", ev.softmax, "softmax-normalize raw feature rows first");
  eval->add_option("--out-dir", ev.out_dir)->required();

  SpectrogramArgs sp;
  auto* spectrogram = app.add_subcommand("spectrogram", "CSV + PGM heatmap of a theta matrix");
  spectrogram->add_option("--theta", sp.theta)->required();
  spectrogram->add_option("--group-by", sp.group_by, "CSV of doc_id,category");
  spectrogram->add_option("--output", sp.output, "output prefix")->required();

  BenchArgs be;
  auto* bench = app.add_subcommand("bench", "per-iteration timing across thread counts");
  bench->add_option("--corpus", be.corpus)->required();
  bench->add_option("--topics", be.topics)->required()->check(CLI::PositiveNumber);
  bench->add_option("--threads", be.threads)->delimiter(',')->envname("TOPICLENS_THREADS");
  bench->add_option("--measure-iterations", be.measure_iterations)->check(CLI::Range(2, 1 << 30));
  bench->add_option("--iterations", be.iterations, "iterations to extrapolate to");
  bench->add_option("--alpha", be.alpha, "default 50/topics");
  bench->add_option("--beta", be.beta);
  bench->add_option("--seed", be.seed);
  bench->add_option("--sync", be.sync, "rotation|epoch-merge")
      ->check(CLI::IsMember({"rotation", "epoch-merge", "epoch_merge"}));
  bench->add_option("--out-dir", be.out_dir)->required();

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with known topics");
  synth->add_option("--docs", sy.cfg.docs);
  synth->add_option("--topics", sy.cfg.topics);
  synth->add_option("--vocab", sy.cfg.vocab);
  synth->add_option("--tokens-per-doc", sy.cfg.tokens_per_doc);
  synth->add_option("--separation", sy.cfg.separation);
  synth->add_option("--mislabel-rate", sy.cfg.mislabel_rate);
  synth->add_option("--noise-scale", sy.cfg.noise_scale, "std-dev of noise in the raw score matrix");
  synth->add_option("--seed", sy.cfg.seed);
  synth->add_flag("--no-scores", sy.no_scores, "skip the raw score matrix");
  synth->add_option("--output", sy.output, "output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  }

  try {
    if (*tokenize) return cmd_tokenize(tok);
    if (*train) return cmd_train(tr);
    if (*topics) return cmd_topics(tp);
    if (*eval) return cmd_eval(ev);
    if (*spectrogram) return cmd_spectrogram(sp);
    if (*bench) return cmd_bench(be);
    if (*synth) return cmd_synth(sy);
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const EmptyCorpusError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEmptyCorpus;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
