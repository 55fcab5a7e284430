#pragma once

#include <stdexcept>
#include <string>

namespace gram {

// Shape/axis violations in the tensor layer.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller broke a documented precondition.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Encoded sequence does not fit the context window.
struct TruncationError : std::runtime_error {
  explicit TruncationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unknown token / byte outside the vocabulary.
struct VocabError : std::runtime_error {
  explicit VocabError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or inconsistent data files (duplicate ids, bad JSONL, ...).
struct IntegrityError : std::runtime_error {
  explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training loss blew up or produced non-finite values.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Sampling could not produce a response within the context window.
struct GenerationError : std::runtime_error {
  explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gram
