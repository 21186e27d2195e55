#pragma once

#include <stdexcept>
#include <string>

namespace alignkit {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Incompatible tensor shapes (names both shapes in the message).
struct DimensionError : Error {
    using Error::Error;
};

/// Out-of-range index, e.g. a token id not below the vocabulary size.
struct IndexError : Error {
    using Error::Error;
};

/// A sequence exceeds the model's maximum length.
struct LengthError : Error {
    using Error::Error;
};

/// A caller broke an API precondition (empty mask, non-scalar loss, ...).
struct ContractError : Error {
    using Error::Error;
};

/// An invalid configuration value; the message names the violated constraint.
struct ConfigError : Error {
    using Error::Error;
};

/// An operation applied in the wrong object state (double LoRA attach, ...).
struct StateError : Error {
    using Error::Error;
};

/// Malformed checkpoint or other binary file.
struct FormatError : Error {
    using Error::Error;
};

/// A dataset unusable for the requested training run.
struct DataError : Error {
    using Error::Error;
};

/// Requested sample larger than the population.
struct SizeError : Error {
    using Error::Error;
};

/// Filesystem failure.
struct IoError : Error {
    using Error::Error;
};

/// File scorer has no entry for the requested key.
struct LookupError : Error {
    using Error::Error;
};

/// Remote or file scorer failed; evaluation aborts rather than imputing.
struct ScorerError : Error {
    using Error::Error;
};

/// Percentage improvement against a zero baseline.
struct UndefinedImprovementError : Error {
    using Error::Error;
};

/// A preference record that cannot be parsed. The kind feeds skip statistics.
struct RecordError : Error {
    enum class Kind { Schema, Marker, Consistency };

    RecordError(Kind k, const std::string& msg) : Error(msg), kind(k) {}

    const char* kind_name() const {
        switch (kind) {
            case Kind::Schema: return "schema";
            case Kind::Marker: return "marker";
            case Kind::Consistency: return "consistency";
        }
        return "unknown";
    }

    Kind kind;
};

}  // namespace alignkit
