#pragma once

// Topic-quality evaluation against ground-truth categories.
//
// The consistent rate of a category at k is the fraction of its documents
// whose k highest-scoring dimensions contain the category's modal index, the
// dimension with the largest mean score over the category. Scores need not be
// normalized, so raw network activations and LDA theta rows go through the
// same code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "topiclens/corpus.hpp"
#include "topiclens/detail/text.hpp"
#include "topiclens/error.hpp"
#include "topiclens/matrix.hpp"

namespace topiclens {

/// Category label -> document indices. One category per document.
using CategoryPartition = std::map<std::string, std::vector<std::size_t>>;

enum class Method { raw, lda };

inline std::string to_string(Method m) { return m == Method::raw ? "raw" : "lda"; }

struct CategoryConsistency {
  std::string category;
  std::size_t modal_index = 0;
  std::size_t size = 0;
  std::vector<std::pair<std::size_t, double>> rate_at_k;  // ascending k

  double rate(std::size_t k) const {
    for (const auto& [kk, r] : rate_at_k) {
      if (kk == k) return r;
    }
    throw std::out_of_range("k = " + std::to_string(k) + " was not evaluated");
  }
};

struct ConsistencyReport {
  Method method = Method::lda;
  std::vector<CategoryConsistency> categories;  // in partition (label) order

  const CategoryConsistency& at(const std::string& category) const {
    for (const auto& c : categories) {
      if (c.category == category) return c;
    }
    throw std::out_of_range("unknown category " + category);
  }
};

struct OutlierRecord {
  std::size_t doc_index = 0;
  std::string doc_id;
  std::string category;
  std::size_t assigned_topic = 0;
  std::size_t category_modal_topic = 0;
};

inline CategoryPartition make_partition(std::span<const std::string> categories) {
  CategoryPartition part;
  for (std::size_t i = 0; i < categories.size(); ++i) part[categories[i]].push_back(i);
  return part;
}

inline void validate_partition(const CategoryPartition& part, std::size_t n_docs) {
  std::vector<bool> seen(n_docs, false);
  for (const auto& [label, docs] : part) {
    if (docs.empty()) throw std::invalid_argument("category '" + label + "' is empty");
    for (const auto m : docs) {
      if (m >= n_docs) throw std::invalid_argument("category '" + label + "' lists unknown document " + std::to_string(m));
      if (seen[m]) throw std::invalid_argument("document " + std::to_string(m) + " belongs to more than one category");
      seen[m] = true;
    }
  }
}

/// Index of the largest value; the lowest index wins ties.
inline std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

/// Zero-based rank of dimension j within a row when sorted by descending
/// score with ties broken toward the lower index.
inline std::size_t rank_in_row(std::span<const double> row, std::size_t j) {
  std::size_t rank = 0;
  for (std::size_t d = 0; d < row.size(); ++d) {
    if (row[d] > row[j] || (row[d] == row[j] && d < j)) ++rank;
  }
  return rank;
}

inline ConsistencyReport consistent_rate(const DenseMatrix& scores, const CategoryPartition& part,
                                         std::vector<std::size_t> ks, Method method = Method::lda) {
  validate_partition(part, scores.rows());
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  for (const auto k : ks) {
    if (k < 1 || k > scores.cols()) {
      throw std::invalid_argument("k = " + std::to_string(k) + " outside [1, " + std::to_string(scores.cols()) + "]");
    }
  }
  ConsistencyReport report;
  report.method = method;
  for (const auto& [label, docs] : part) {
    std::vector<double> mean(scores.cols(), 0.0);
    for (const auto m : docs) {
      const auto row = scores.row(m);
      for (std::size_t d = 0; d < row.size(); ++d) mean[d] += row[d];
    }
    for (auto& v : mean) v /= static_cast<double>(docs.size());

    CategoryConsistency cc;
    cc.category = label;
    cc.size = docs.size();
    cc.modal_index = argmax(mean);
    std::vector<std::size_t> ranks;
    ranks.reserve(docs.size());
    for (const auto m : docs) ranks.push_back(rank_in_row(scores.row(m), cc.modal_index));
    for (const auto k : ks) {
      const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r < k; });
      cc.rate_at_k.emplace_back(k, static_cast<double>(hits) / static_cast<double>(docs.size()));
    }
    report.categories.push_back(std::move(cc));
  }
  return report;
}

/// Raw activations as a score matrix, optionally softmax-normalized per row.
inline DenseMatrix raw_baseline_probs(const FeatureMatrix& m, bool softmax = false) {
  DenseMatrix out(m.n_docs, m.n_dims);
  for (std::size_t i = 0; i < m.n_docs; ++i) {
    const auto in = m.row(i);
    auto row = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) row[j] = in[j];
    if (softmax && !row.empty()) {
      const double mx = *std::max_element(row.begin(), row.end());
      double sum = 0.0;
      for (auto& v : row) {
        v = std::exp(v - mx);
        sum += v;
      }
      for (auto& v : row) v /= sum;
    }
  }
  return out;
}

/// For every column (topic), the indices of the `n` rows with the largest
/// value, descending, ties toward the lower row index. `n` larger than the
/// row count returns every row.
inline std::vector<std::vector<std::size_t>> top_documents_per_topic(const DenseMatrix& theta, std::size_t n) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  const std::size_t take = std::min(n, theta.rows());
  std::vector<std::vector<std::size_t>> result(theta.cols());
  std::vector<std::size_t> order(theta.rows());
  for (std::size_t k = 0; k < theta.cols(); ++k) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto before = [&](std::size_t a, std::size_t b) {
      return theta(a, k) > theta(b, k) || (theta(a, k) == theta(b, k) && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), before);
    result[k].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return result;
}

/// Documents whose argmax topic differs from the most frequent argmax topic
/// of their category (ties toward the lower topic), in document order.
inline std::vector<OutlierRecord> flag_outliers(const DenseMatrix& theta, const CategoryPartition& part,
                                                std::span<const std::string> doc_ids) {
  validate_partition(part, theta.rows());
  if (doc_ids.size() != theta.rows()) throw std::invalid_argument("doc_id count does not match theta rows");
  std::vector<OutlierRecord> flagged;
  for (const auto& [label, docs] : part) {
    std::vector<std::size_t> votes(theta.cols(), 0);
    std::vector<std::size_t> assigned;
    assigned.reserve(docs.size());
    for (const auto m : docs) {
      assigned.push_back(argmax(theta.row(m)));
      ++votes[assigned.back()];
    }
    const auto modal = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (assigned[i] != modal) flagged.push_back({docs[i], doc_ids[docs[i]], label, assigned[i], modal});
    }
  }
  std::sort(flagged.begin(), flagged.end(),
            [](const OutlierRecord& a, const OutlierRecord& b) { return a.doc_index < b.doc_index; });
  return flagged;
}

// ---------------------------------------------------------------------------
// Spectrogram

/// Document order grouping equal categories together (labels sorted, stable
/// within a label).
inline std::vector<std::size_t> order_by_category(std::span<const std::string> categories) {
  std::vector<std::size_t> order(categories.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return categories[a] < categories[b]; });
  return order;
}

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

/// One pixel per cell: documents along x (in `order`), topics along y.
/// Intensity is value / max * 255; non-positive values are black.
inline GrayImage render_heatmap(const DenseMatrix& m, std::span<const std::size_t> order) {
  GrayImage img;
  img.width = order.size();
  img.height = m.cols();
  img.pixels.assign(img.width * img.height, 0);
  double mx = 0.0;
  for (const double v : m.data()) mx = std::max(mx, v);
  if (mx <= 0.0) return img;
  for (std::size_t x = 0; x < order.size(); ++x) {
    for (std::size_t y = 0; y < m.cols(); ++y) {
      const double v = std::max(0.0, m(order[x], y));
      img.pixels[y * img.width + x] = static_cast<std::uint8_t>(std::lround(255.0 * v / mx));
    }
  }
  return img;
}

/// Binary PGM (P5, maxval 255).
inline void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  GrayImage img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || !in) throw FormatError("not an 8-bit P5 graymap: " + path.string());
  in.get();
  img.pixels.resize(img.width * img.height);
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
    throw FormatError("truncated graymap: " + path.string());
  }
  return img;
}

/// Writes `<csv_path>` (reordered rows, 6 significant digits, doc_id labels)
/// and `<pgm_path>` (heatmap of the same rows).
inline void spectrogram_export(const DenseMatrix& m, std::span<const std::string> doc_ids,
                               std::span<const std::size_t> order, const std::filesystem::path& csv_path,
                               const std::filesystem::path& pgm_path) {
  if (doc_ids.size() != m.rows()) throw std::invalid_argument("doc_id count does not match matrix rows");
  std::vector<bool> seen(m.rows(), false);
  if (order.size() != m.rows()) throw std::invalid_argument("ordering is not a permutation of the documents");
  for (const auto i : order) {
    if (i >= m.rows() || seen[i]) throw std::invalid_argument("ordering is not a permutation of the documents");
    seen[i] = true;
  }
  DenseMatrix reordered(m.rows(), m.cols());
  std::vector<std::string> ids;
  ids.reserve(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    std::copy(m.row(order[r]).begin(), m.row(order[r]).end(), reordered.row(r).begin());
    ids.push_back(doc_ids[order[r]]);
  }
  write_labeled_csv(csv_path, ids, reordered, "topic_", 6);
  save_pgm(render_heatmap(m, order), pgm_path);
}

// ---------------------------------------------------------------------------
// CSV reports

struct CategoryLabel {
  std::string doc_id;
  std::string category;
};

/// Reads `doc_id,category` rows (a header line starting with `doc_id` is skipped).
inline std::vector<CategoryLabel> load_categories_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<CategoryLabel> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (detail::trim(line).empty()) continue;
    if (line_no == 1 && line.starts_with("doc_id")) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 2) throw FormatError("expected 'doc_id,category'", line_no);
    labels.push_back({std::string(detail::trim(fields[0])), std::string(detail::trim(fields[1]))});
  }
  return labels;
}

/// Long format: `method,category,modal_index,k,rate`.
inline void save_consistency_csv(std::span<const ConsistencyReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "method,category,modal_index,k,rate\n";
  for (const auto& report : reports) {
    for (const auto& c : report.categories) {
      for (const auto& [k, rate] : c.rate_at_k) {
        out << to_string(report.method) << ',' << c.category << ',' << c.modal_index << ',' << k << ','
            << detail::format_sig(rate, 6) << '\n';
      }
    }
  }
}

/// `doc_id,category,assigned_topic,category_modal_topic`
inline void save_outliers_csv(std::span<const OutlierRecord> outliers, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "doc_id,category,assigned_topic,category_modal_topic\n";
  for (const auto& o : outliers) {
    out << o.doc_id << ',' << o.category << ',' << o.assigned_topic << ',' << o.category_modal_topic << '\n';
  }
}

}  // namespace topiclens
