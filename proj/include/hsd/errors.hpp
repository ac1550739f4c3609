#pragma once

#include <stdexcept>
#include <string>

namespace hsd {

// Base for every library error. The CLI exits with 2 for invalid input
// (specs, parameters, unsupported kinds, undefined regimes) and 3 otherwise.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidSpec : Error { using Error::Error; };
struct SameSignGammas : Error { using Error::Error; };
struct UnsupportedOrder : Error { using Error::Error; };
struct UnsupportedKind : Error { using Error::Error; };
struct RegimeUndefined : Error { using Error::Error; };
struct NonConvergent : Error { using Error::Error; };
struct InvalidParams : Error { using Error::Error; };
struct TraceTooShort : Error { using Error::Error; };
struct FitFailed : Error { using Error::Error; };
struct UnsupportedProtocol : Error { using Error::Error; };
struct NoSolution : Error { using Error::Error; };

}  // namespace hsd
