#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace mtf {

enum class ErrorCode {
    UnknownMetric,
    InvalidScore,
    EmptyId,
    EmptyCaption,
    InvalidArgument,
    IoError,
    MalformedRow,
    MissingDenseCaption,
    NoScoreFound,
    OutOfRange,
    EndpointUnreachable,
    ScoreFailed,
    ProtocolError,
    DimensionMismatch,
    ZeroVector,
    NonFiniteEmbedding,
    EmptyHistogram,
    MissingHistogram,
    MissingScore,
    TooFewPoints,
    InsufficientPool,
    ZeroVariance,
    TooFewSamples,
    ConfigError,
    UsageError,
};

std::string_view to_string(ErrorCode code);

/// Every module reports failures through this exception. `details` carries the
/// structured payload (offending id, shard/row, counts) that the CLI prints as
/// machine-readable JSON.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, nlohmann::json details = nlohmann::json::object())
        : std::runtime_error(message), code_(code), details_(std::move(details)) {}

    ErrorCode code() const noexcept { return code_; }
    const nlohmann::json& details() const noexcept { return details_; }

    nlohmann::json to_json() const;

private:
    ErrorCode code_;
    nlohmann::json details_;
};

}  // namespace mtf
