// SPDX-License-Identifier: Apache-2.0
#include "ctxrep/error.hpp"

namespace ctxrep {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NonConvergence: return "NonConvergence";
        case ErrorKind::DegenerateVector: return "DegenerateVector";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::NumericOverflow: return "NumericOverflow";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::Config: return "ConfigError";
    }
    return "Unknown";
}

}  // namespace ctxrep
