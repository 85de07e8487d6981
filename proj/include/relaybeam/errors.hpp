// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace relaybeam {

// Invalid arguments use std::invalid_argument, failed id lookups std::out_of_range.

struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateChain : std::domain_error {
  using std::domain_error::domain_error;
};

struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StatisticsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace relaybeam
