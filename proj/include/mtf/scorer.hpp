#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtf/core.hpp"
#include "mtf/ingest.hpp"
#include "mtf/prompts.hpp"

namespace mtf::scorer {

using Millis = std::chrono::milliseconds;

struct ScoreRequest {
    std::string pair_id;
    Metric metric = Metric::ITM;
    std::string prompt;
    ImageRef image;
    int max_new_tokens = 4;
    Millis timeout{30000};
    int attempt = 1;
};

struct ScoreResult {
    std::string pair_id;
    Metric metric = Metric::ITM;
    std::string raw;
    std::string model;
};

json request_to_json(const ScoreRequest& r);
json results_to_json(std::span<const ScoreResult> results);
std::vector<ScoreResult> results_from_json(const json& body);

struct HealthInfo {
    std::string status;
    std::string model;
};

/// Anything that turns prompts into generated text. Implementations must be
/// safe to call from several threads at once.
class ScorerBackend {
public:
    virtual ~ScorerBackend() = default;

    /// Throws EndpointUnreachable if the backend cannot serve.
    virtual HealthInfo health() = 0;

    /// One round trip. Results may come back in any order but must cover every
    /// request. Transport failures throw Error{EndpointUnreachable|ProtocolError}.
    virtual std::vector<ScoreResult> score(std::span<const ScoreRequest> batch) = 0;
};

// ---------------------------------------------------------------------------
// Deterministic mock

inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;
inline constexpr std::string_view kMockModelName = "mock-fnv";

std::uint64_t fnv1a64(std::string_view bytes);

/// FNV-1a("{pair_id}:{metric}") mod 101.
QualityScore mock_score(std::string_view pair_id, Metric metric);

/// "{score}\nMock rationale." cut to `max_new_tokens` whitespace-delimited tokens.
std::string mock_raw(std::string_view pair_id, Metric metric, int max_new_tokens);

/// Keeps the text up to the end of the n-th whitespace-delimited token.
std::string truncate_tokens(std::string_view text, int max_tokens);

/// In-process stand-in for the reference scorer service.
class MockBackend final : public ScorerBackend {
public:
    HealthInfo health() override { return {"ok", std::string(kMockModelName)}; }
    std::vector<ScoreResult> score(std::span<const ScoreRequest> batch) override;
};

// ---------------------------------------------------------------------------
// HTTP

struct RetryPolicy {
    int max_attempts = 3;
    std::vector<Millis> backoff{Millis{1000}, Millis{2000}, Millis{4000}};
    double jitter = 0.2;

    /// Delay before attempt `next_attempt` (2-based); the schedule's last
    /// entry repeats when attempts outnumber it.
    Millis delay_before(int next_attempt, std::uint64_t jitter_seed) const;
};

struct ScorerEndpoint {
    std::string base_url;
    std::size_t concurrency = 8;
    RetryPolicy retry;
    std::optional<std::string> auth_token;
    Millis timeout{30000};

    void validate() const;
};

/// Talks the /v1/health + /v1/score JSON protocol over HTTP.
class HttpBackend final : public ScorerBackend {
public:
    explicit HttpBackend(ScorerEndpoint endpoint);

    HealthInfo health() override;
    std::vector<ScoreResult> score(std::span<const ScoreRequest> batch) override;

private:
    ScorerEndpoint endpoint_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

// ---------------------------------------------------------------------------
// Batch scoring

enum class FailurePolicy : std::uint8_t { Abort, Quarantine };
FailurePolicy parse_failure_policy(std::string_view s);

struct BatchOptions {
    std::vector<Metric> metrics;
    PromptMode mode = PromptMode::Rationalization;
    TeacherPath path = TeacherPath::Vision;
    int max_new_tokens = 4;
    std::size_t concurrency = 8;
    RetryPolicy retry;
    Millis timeout{30000};
    FailurePolicy on_failure = FailurePolicy::Abort;
    /// Emit records in input order (bounded reorder window) instead of
    /// completion order. Needed for byte-stable output files.
    bool ordered = true;
    /// Overrides the provenance string; defaults to the backend's model name.
    std::string provenance;
};

struct Quarantined {
    std::string pair_id;
    Metric metric;
    std::string cause;
};

struct BatchStats {
    std::uint64_t scored = 0;
    std::uint64_t quarantined = 0;
    std::uint64_t requests = 0;
    std::uint64_t retries = 0;
};

using RecordSink = std::function<void(const ScoreRecord&)>;
using QuarantineSink = std::function<void(const Quarantined&)>;

/// Scores every pair on every requested metric with at most
/// `opts.concurrency` backend calls in flight. Each record is handed to `sink`
/// (serialized, never concurrently); its id is appended to `log` only after the
/// sink returns. Throws EndpointUnreachable before any request if the health
/// probe fails, and ScoreFailed under the abort policy.
BatchStats score_batch(ingest::PairReader& pairs, ScorerBackend& backend, const BatchOptions& opts,
                       const RecordSink& sink, ingest::ProgressLog* log = nullptr,
                       const QuarantineSink& on_quarantine = {});

}  // namespace mtf::scorer
