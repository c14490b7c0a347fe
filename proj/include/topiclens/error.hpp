#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace topiclens {

/// Malformed or inconsistent input file. `row()` is the 1-based data row
/// (or line) the problem was found on, 0 when it is not tied to one.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what, std::size_t row = 0)
      : std::runtime_error(row ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Tokenization produced no documents at all.
class EmptyCorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values (hyperparameters, thread counts, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Count tables no longer describe the assignments: a decrement would go
/// negative, or merged counts disagree with a re-tally.
class StateCorruptionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace topiclens
