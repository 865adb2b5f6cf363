#pragma once

#include <stdexcept>
#include <string>

namespace pbc {

// Malformed textual input (circuit files, Pauli strings, dump files).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string &msg) : std::runtime_error(msg) {}
};

// A caller violated a documented precondition, or an internal invariant that
// the API promises to check did not hold.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string &msg) : std::runtime_error(msg) {}
};

// A postselected branch has probability exactly zero.
struct ProbabilityZeroError : std::runtime_error {
    explicit ProbabilityZeroError(const std::string &msg) : std::runtime_error(msg) {}
};

// An exact computation would exceed the configured size budget.
struct BudgetError : std::runtime_error {
    explicit BudgetError(const std::string &msg) : std::runtime_error(msg) {}
};

// A run produced an outcome that violates a postselection requirement.  The
// branch is merely conditioned away (probability may be nonzero); callers that
// sample may retry the run.
struct PostselectionMissError : std::runtime_error {
    explicit PostselectionMissError(const std::string &msg) : std::runtime_error(msg) {}
};

}  // namespace pbc
