#pragma once

#include <stdexcept>
#include <string>

namespace arac {

// Violated precondition or shape contract on a public API.
struct ContractViolation : std::invalid_argument {
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// Math domain violation (log/sqrt of non-positive input, non-finite operand).
struct DomainError : std::domain_error {
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

}  // namespace arac
