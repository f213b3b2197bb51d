#pragma once

#include <stdexcept>
#include <string>

namespace provtrace {

// Violated precondition, invariant, or malformed input that the caller
// could have prevented. CLI maps this to exit code 2.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem / stream failure. CLI maps this to exit code 1.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace provtrace
