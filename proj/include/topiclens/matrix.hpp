#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "topiclens/detail/text.hpp"
#include "topiclens/error.hpp"

namespace topiclens {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Document-topic probabilities, one row per document.
struct ThetaMatrix : DenseMatrix {
  using DenseMatrix::DenseMatrix;
};

/// Topic-word probabilities, one row per topic.
struct PhiMatrix : DenseMatrix {
  using DenseMatrix::DenseMatrix;
};

/// A matrix with a label per row and a name per column, as stored in CSV.
struct LabeledMatrix {
  std::vector<std::string> row_ids;
  std::vector<std::string> col_names;
  DenseMatrix values;
};

/// Header `<corner>,<prefix>0,<prefix>1,...`, then `row_id,v0,v1,...`.
/// `sig_digits` of 0 writes the shortest exact representation.
inline void write_labeled_csv(const std::filesystem::path& path, std::span<const std::string> row_ids,
                              const DenseMatrix& m, const std::string& col_prefix, int sig_digits = 0,
                              const std::string& corner = "doc_id") {
  if (row_ids.size() != m.rows()) throw std::invalid_argument("row label count does not match matrix rows");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << corner;
  for (std::size_t c = 0; c < m.cols(); ++c) out << ',' << col_prefix << c;
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << row_ids[r];
    for (const double v : m.row(r)) {
      out << ',' << (sig_digits > 0 ? detail::format_sig(v, sig_digits) : detail::format_exact(v));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline LabeledMatrix read_labeled_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  LabeledMatrix result;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV file " + path.string(), 1);
  detail::strip_cr(line);
  const auto header = detail::split(line, ',');
  if (header.size() < 2) throw FormatError("CSV header needs a label column and at least one value column", 1);
  for (std::size_t i = 1; i < header.size(); ++i) result.col_names.emplace_back(detail::trim(header[i]));
  const std::size_t cols = result.col_names.size();
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != cols + 1) {
      throw FormatError("expected " + std::to_string(cols + 1) + " fields, got " + std::to_string(fields.size()),
                        line_no);
    }
    result.row_ids.emplace_back(detail::trim(fields[0]));
    for (std::size_t c = 0; c < cols; ++c) {
      const auto v = detail::parse_number<double>(fields[c + 1]);
      if (!v || !std::isfinite(*v)) {
        throw FormatError("cannot parse value '" + std::string(fields[c + 1]) + "'", line_no);
      }
      values.push_back(*v);
    }
  }
  result.values = DenseMatrix(result.row_ids.size(), cols);
  for (std::size_t r = 0; r < result.row_ids.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) result.values(r, c) = values[r * cols + c];
  }
  return result;
}

}  // namespace topiclens
