#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace exerclass {

/// Raw input with the wrong shape (e.g. a landmark payload that is not 33x4).
class MalformedInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shape mismatch, bad mode).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid or contradictory configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Landmark-file parse failure. Carries the 1-based line number of the record.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Model-file load failure. Carries the name of the offending field.
class ModelFormatError : public std::runtime_error {
 public:
  ModelFormatError(std::string field, const std::string& what);
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace exerclass
