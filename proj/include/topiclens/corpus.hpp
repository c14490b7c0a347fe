#pragma once

// Feature matrices, threshold tokenization into bag-of-words corpora, and the
// on-disk formats for both.
//
// Feature matrix text format:
//   N V
//   doc_id,v1,...,vV[,category]          (N rows)
//
// Feature matrix binary format (little-endian):
//   "FMX1" u64 N, u64 V, u8 has_category,
//   then N records of: u16 len + id bytes, [u16 len + category bytes], V x f32
//
// Corpus format:
//   #vocab V
//   doc_id<TAB>[category<TAB>]t1 t2 t3 ...

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "topiclens/detail/binary_io.hpp"
#include "topiclens/detail/text.hpp"
#include "topiclens/error.hpp"

namespace topiclens {

using word_id = std::uint32_t;

enum class MatrixFormat { text, binary };

/// Dense per-document activation scores, one row per document.
struct FeatureMatrix {
  std::size_t n_docs = 0;
  std::size_t n_dims = 0;
  std::vector<float> values;  // row-major, n_docs x n_dims
  std::vector<std::string> doc_ids;
  std::vector<std::string> categories;  // empty, or one label per row

  bool has_categories() const noexcept { return !categories.empty(); }

  std::span<const float> row(std::size_t i) const { return {values.data() + i * n_dims, n_dims}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * n_dims, n_dims}; }

  /// Throws FormatError naming the first offending row.
  void validate() const {
    if (values.size() != n_docs * n_dims) {
      throw FormatError("value count " + std::to_string(values.size()) + " does not match " +
                        std::to_string(n_docs) + " x " + std::to_string(n_dims));
    }
    if (doc_ids.size() != n_docs) throw FormatError("doc_id count does not match row count");
    if (!categories.empty() && categories.size() != n_docs) {
      throw FormatError("category count does not match row count");
    }
    std::unordered_set<std::string_view> seen;
    seen.reserve(n_docs);
    for (std::size_t i = 0; i < n_docs; ++i) {
      for (std::size_t j = 0; j < n_dims; ++j) {
        if (!std::isfinite(values[i * n_dims + j])) {
          throw FormatError("non-finite value in column " + std::to_string(j + 1), i + 1);
        }
      }
      if (!seen.insert(doc_ids[i]).second) throw FormatError("duplicate doc_id '" + doc_ids[i] + "'", i + 1);
    }
  }

  bool operator==(const FeatureMatrix&) const = default;
};

/// Bag-of-words documents. Token IDs index the source layer's dimensions.
struct TokenizedCorpus {
  std::size_t vocab_size = 0;
  std::vector<std::vector<word_id>> docs;
  std::vector<std::string> doc_ids;
  std::vector<std::string> categories;  // empty, or one label per document

  std::size_t n_docs() const noexcept { return docs.size(); }
  bool has_categories() const noexcept { return !categories.empty(); }

  std::size_t total_tokens() const noexcept {
    std::size_t n = 0;
    for (const auto& d : docs) n += d.size();
    return n;
  }

  void validate() const {
    if (doc_ids.size() != docs.size()) throw FormatError("doc_id count does not match document count");
    if (!categories.empty() && categories.size() != docs.size()) {
      throw FormatError("category count does not match document count");
    }
    for (std::size_t m = 0; m < docs.size(); ++m) {
      if (docs[m].empty()) throw FormatError("empty document '" + doc_ids[m] + "'", m + 1);
      for (const auto w : docs[m]) {
        if (w >= vocab_size) {
          throw FormatError("token " + std::to_string(w) + " out of range for vocab " + std::to_string(vocab_size),
                            m + 1);
        }
      }
    }
  }

  bool operator==(const TokenizedCorpus&) const = default;
};

// ---------------------------------------------------------------------------
// Feature matrix I/O

namespace detail {

inline void check_field(const std::string& s, std::string_view forbidden, std::string_view what) {
  if (s.find_first_of(forbidden) != std::string::npos) {
    throw FormatError(std::string(what) + " '" + s + "' contains a reserved separator character");
  }
}

inline FeatureMatrix load_feature_matrix_text(std::istream& in) {
  FeatureMatrix m;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("malformed header: file is empty", 1);
  strip_cr(line);
  {
    auto fields = split(trim(line), ' ');
    std::erase_if(fields, [](std::string_view f) { return f.empty(); });
    const auto n = fields.size() == 2 ? parse_number<std::size_t>(fields[0]) : std::nullopt;
    const auto v = fields.size() == 2 ? parse_number<std::size_t>(fields[1]) : std::nullopt;
    if (!n || !v || *v == 0) throw FormatError("malformed header, expected 'N V', got '" + line + "'", 1);
    m.n_docs = *n;
    m.n_dims = *v;
  }
  const std::size_t V = m.n_dims;
  m.values.reserve(std::min<std::size_t>(m.n_docs * V, std::size_t{1} << 26));
  m.doc_ids.reserve(std::min<std::size_t>(m.n_docs, std::size_t{1} << 20));
  std::vector<std::string> cats;
  bool any_category = false;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (trim(line).empty()) continue;
    ++row;
    if (row > m.n_docs) throw FormatError("more rows than the header's " + std::to_string(m.n_docs), row);
    const auto fields = split(line, ',');
    if (fields.size() != V + 1 && fields.size() != V + 2) {
      const std::size_t got = fields.empty() ? 0 : fields.size() - 1;
      throw FormatError("dimension mismatch: expected " + std::to_string(V) + " values (plus optional category), got " +
                            std::to_string(got) + " fields after doc_id",
                        row);
    }
    m.doc_ids.emplace_back(trim(fields[0]));
    for (std::size_t j = 0; j < V; ++j) {
      const auto value = parse_number<float>(fields[j + 1]);
      if (!value) {
        throw FormatError("cannot parse value '" + std::string(fields[j + 1]) + "' in column " + std::to_string(j + 1),
                          row);
      }
      if (!std::isfinite(*value)) throw FormatError("non-finite value in column " + std::to_string(j + 1), row);
      m.values.push_back(*value);
    }
    if (fields.size() == V + 2) {
      cats.emplace_back(trim(fields[V + 1]));
      any_category = true;
    } else {
      cats.emplace_back();
    }
  }
  if (row != m.n_docs) {
    throw FormatError("header declares " + std::to_string(m.n_docs) + " rows, found " + std::to_string(row));
  }
  if (any_category) m.categories = std::move(cats);
  m.validate();
  return m;
}

inline FeatureMatrix load_feature_matrix_binary(std::istream& in) {
  expect_magic(in, "FMX1");
  FeatureMatrix m;
  m.n_docs = read_le<std::uint64_t>(in, "row count");
  m.n_dims = read_le<std::uint64_t>(in, "dimension count");
  const auto flag = read_le<std::uint8_t>(in, "category flag");
  if (flag > 1) throw FormatError("malformed header: category flag must be 0 or 1");
  if (m.n_dims == 0) throw FormatError("malformed header: zero dimensions");
  const bool has_cat = flag == 1;
  m.values.reserve(std::min<std::size_t>(m.n_docs * m.n_dims, std::size_t{1} << 26));
  for (std::size_t i = 0; i < m.n_docs; ++i) {
    try {
      m.doc_ids.push_back(read_short_string(in, "doc_id"));
      if (has_cat) m.categories.push_back(read_short_string(in, "category"));
      for (std::size_t j = 0; j < m.n_dims; ++j) {
        const float v = read_f32(in, "value");
        if (!std::isfinite(v)) throw FormatError("non-finite value in column " + std::to_string(j + 1), i + 1);
        m.values.push_back(v);
      }
    } catch (const FormatError& e) {
      if (e.row() != 0) throw;
      throw FormatError(e.what(), i + 1);
    }
  }
  m.validate();
  return m;
}

}  // namespace detail

inline FeatureMatrix load_feature_matrix(const std::filesystem::path& path, MatrixFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return format == MatrixFormat::text ? detail::load_feature_matrix_text(in) : detail::load_feature_matrix_binary(in);
}

inline void save_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path, MatrixFormat format) {
  m.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (format == MatrixFormat::text) {
    for (const auto& id : m.doc_ids) detail::check_field(id, ",\n\r", "doc_id");
    for (const auto& c : m.categories) detail::check_field(c, ",\n\r", "category");
    out << m.n_docs << ' ' << m.n_dims << '\n';
    for (std::size_t i = 0; i < m.n_docs; ++i) {
      out << m.doc_ids[i];
      for (const float v : m.row(i)) out << ',' << detail::format_exact(v);
      if (m.has_categories()) out << ',' << m.categories[i];
      out << '\n';
    }
  } else {
    out.write("FMX1", 4);
    detail::write_le<std::uint64_t>(out, m.n_docs);
    detail::write_le<std::uint64_t>(out, m.n_dims);
    detail::write_le<std::uint8_t>(out, m.has_categories() ? 1 : 0);
    for (std::size_t i = 0; i < m.n_docs; ++i) {
      detail::write_short_string(out, m.doc_ids[i]);
      if (m.has_categories()) detail::write_short_string(out, m.categories[i]);
      for (const float v : m.row(i)) detail::write_f32(out, v);
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Tokenization

enum class Weighting { binary, proportional };

struct TokenizeOptions {
  double threshold = 0.0;
  Weighting weighting = Weighting::binary;
  std::size_t max_repeats = 8;
  bool keep_all = false;  // treat the threshold as -infinity
};

/// Rows that produced no tokens.
struct DroppedReport {
  std::vector<std::size_t> rows;  // 0-based row indices in the source matrix
  std::vector<std::string> doc_ids;
};

struct TokenizeResult {
  TokenizedCorpus corpus;
  DroppedReport dropped;
};

/// Emits dimension j of a row whenever its score exceeds the threshold.
///
/// Proportional weighting repeats a passing dimension
/// ceil(max_repeats * (v - t) / (row_max - t)) times, clamped to
/// [1, max_repeats]; a row whose passing values are all equal gets one copy
/// of each. Rows with no passing dimension are dropped and reported.
inline TokenizeResult threshold_tokenize(const FeatureMatrix& m, const TokenizeOptions& opt = {}) {
  if (opt.max_repeats < 1) throw ConfigError("max_repeats must be at least 1");
  const double t = opt.keep_all ? -std::numeric_limits<double>::infinity() : opt.threshold;

  TokenizeResult result;
  auto& c = result.corpus;
  c.vocab_size = m.n_dims;
  std::vector<std::size_t> passing;
  for (std::size_t i = 0; i < m.n_docs; ++i) {
    const auto row = m.row(i);
    passing.clear();
    double row_max = -std::numeric_limits<double>::infinity();
    double row_min = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double v = row[j];
      if (v > t) {
        passing.push_back(j);
        row_max = std::max(row_max, v);
        row_min = std::min(row_min, v);
      }
    }
    if (passing.empty()) {
      result.dropped.rows.push_back(i);
      result.dropped.doc_ids.push_back(m.doc_ids[i]);
      continue;
    }
    std::vector<word_id> tokens;
    tokens.reserve(passing.size());
    const bool degenerate = row_min == row_max || !std::isfinite(row_max - t);
    for (const auto j : passing) {
      std::size_t repeats = 1;
      if (opt.weighting == Weighting::proportional && !degenerate) {
        const double r = std::ceil(static_cast<double>(opt.max_repeats) * (row[j] - t) / (row_max - t));
        repeats = static_cast<std::size_t>(std::clamp(r, 1.0, static_cast<double>(opt.max_repeats)));
      }
      tokens.insert(tokens.end(), repeats, static_cast<word_id>(j));
    }
    c.docs.push_back(std::move(tokens));
    c.doc_ids.push_back(m.doc_ids[i]);
    if (m.has_categories()) c.categories.push_back(m.categories[i]);
  }
  if (c.docs.empty()) throw EmptyCorpusError("empty corpus: no row has a value above the threshold");
  return result;
}

// ---------------------------------------------------------------------------
// Corpus I/O

inline void save_corpus(const TokenizedCorpus& c, const std::filesystem::path& path) {
  c.validate();
  for (const auto& id : c.doc_ids) detail::check_field(id, "\t\n\r", "doc_id");
  for (const auto& cat : c.categories) detail::check_field(cat, "\t\n\r", "category");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "#vocab " << c.vocab_size << '\n';
  for (std::size_t m = 0; m < c.docs.size(); ++m) {
    out << c.doc_ids[m] << '\t';
    if (c.has_categories()) out << c.categories[m] << '\t';
    for (std::size_t n = 0; n < c.docs[m].size(); ++n) {
      if (n) out << ' ';
      out << c.docs[m][n];
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline TokenizedCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  TokenizedCorpus c;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError("malformed header: file is empty", 1);
  detail::strip_cr(line);
  {
    constexpr std::string_view prefix = "#vocab ";
    const auto v = line.starts_with(prefix) ? detail::parse_number<std::size_t>(line.substr(prefix.size()))
                                            : std::nullopt;
    if (!v || *v == 0) throw FormatError("malformed header, expected '#vocab V', got '" + line + "'", 1);
    c.vocab_size = *v;
  }
  std::vector<std::string> cats;
  bool any_category = false;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, '\t');
    if (fields.size() != 2 && fields.size() != 3) {
      throw FormatError("expected 'doc_id<TAB>[category<TAB>]tokens'", line_no);
    }
    std::vector<word_id> tokens;
    for (const auto tok : detail::split(fields.back(), ' ')) {
      if (tok.empty()) continue;
      const auto w = detail::parse_number<std::uint64_t>(tok);
      if (!w) throw FormatError("cannot parse token '" + std::string(tok) + "'", line_no);
      if (*w >= c.vocab_size) {
        throw FormatError("token " + std::to_string(*w) + " out of range for vocab " + std::to_string(c.vocab_size),
                          line_no);
      }
      tokens.push_back(static_cast<word_id>(*w));
    }
    if (tokens.empty()) throw FormatError("document has no tokens", line_no);
    c.doc_ids.emplace_back(fields[0]);
    c.docs.push_back(std::move(tokens));
    if (fields.size() == 3) {
      cats.emplace_back(fields[1]);
      any_category = true;
    } else {
      cats.emplace_back();
    }
  }
  if (any_category) c.categories = std::move(cats);
  return c;
}

/// Writes the dropped rows as `row,doc_id` CSV.
inline void save_dropped_report(const DroppedReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "row,doc_id\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) out << r.rows[i] << ',' << r.doc_ids[i] << '\n';
}

// ---------------------------------------------------------------------------
// Statistics

struct CorpusStats {
  std::size_t n_docs = 0;
  std::size_t vocab_size = 0;
  std::size_t total_tokens = 0;
  std::map<std::size_t, std::size_t> tokens_per_doc_histogram;  // length -> number of documents
  std::size_t distinct_words_used = 0;
};

inline CorpusStats corpus_stats(const TokenizedCorpus& c) {
  CorpusStats s;
  s.n_docs = c.docs.size();
  s.vocab_size = c.vocab_size;
  std::vector<bool> used(c.vocab_size, false);
  for (const auto& d : c.docs) {
    s.total_tokens += d.size();
    ++s.tokens_per_doc_histogram[d.size()];
    for (const auto w : d) used[w] = true;
  }
  s.distinct_words_used = static_cast<std::size_t>(std::count(used.begin(), used.end(), true));
  return s;
}

}  // namespace topiclens
