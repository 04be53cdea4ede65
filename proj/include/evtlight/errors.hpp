#pragma once

#include <stdexcept>

namespace evtlight {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (out-of-order events, bad parameters).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace evtlight
