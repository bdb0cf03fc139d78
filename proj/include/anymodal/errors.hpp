#pragma once

#include <stdexcept>
#include <string>

namespace anymodal {

// Invalid or inconsistent configuration. CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string & msg) : std::runtime_error(msg) {}
};

// Missing, corrupt or mismatched artifact on disk. CLI exit code 3.
struct ArtifactError : std::runtime_error {
    explicit ArtifactError(const std::string & msg) : std::runtime_error(msg) {}
};

// Numerical failure (divergence, NaN loss). CLI exit code 4.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string & msg) : std::runtime_error(msg) {}
};

// Bad input to an operation (out-of-range coordinate, non-unit normal, ...).
struct InvalidInput : std::runtime_error {
    explicit InvalidInput(const std::string & msg) : std::runtime_error(msg) {}
};

// Token sequence that violates a codec grammar.
struct CodecError : std::runtime_error {
    enum class Kind {
        malformed,       // structural violation (v0 without v1, truncated group, ...)
        out_of_range,    // value outside the documented range
        unknown_field,   // unregistered metadata field / class id
        bad_token,       // token id outside the expected block
    };

    Kind kind;

    CodecError(Kind kind, const std::string & msg) : std::runtime_error(msg), kind(kind) {}
};

} // namespace anymodal
