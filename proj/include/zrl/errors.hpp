#pragma once

#include <stdexcept>
#include <string>

namespace zrl {

// Invalid experiment or generator settings. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (mismatched sizes, empty groups, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class EncodingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// External rollout backend unreachable after the retry budget.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Enumeration oracle asked to exceed its budget.
class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training cannot continue (repeated non-finite gradients, ...). Exit code 3.
class FatalTrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace zrl
