#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace protoattend {

// Violated precondition (bad argument, empty input, out-of-range value).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Parameters and derived artifacts (database, checkpoint, data) disagree.
class IncompatibleError : public ContractError {
 public:
  using ContractError::ContractError;
};

// NaN/Inf encountered in a loss or gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed bytes in a dataset or checkpoint. Carries the byte offset (or
// line for text formats) where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::optional<std::uint64_t> offset = std::nullopt)
      : std::runtime_error(offset ? what + " (at offset " + std::to_string(*offset) + ")" : what),
        offset_(offset) {}

  std::optional<std::uint64_t> offset() const { return offset_; }

 private:
  std::optional<std::uint64_t> offset_;
};

// Checkpoint bytes decode but disagree with themselves: tensors that do not
// match the stored model config, or a fingerprint mismatch.
class IntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace protoattend
