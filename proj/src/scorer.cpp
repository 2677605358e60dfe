#include "mtf/scorer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <map>
#include <thread>

namespace mtf::scorer {

// ---------------------------------------------------------------------------
// Wire encoding

json request_to_json(const ScoreRequest& r) {
    return json{{"id", r.pair_id},
                {"metric", std::string(to_string(r.metric))},
                {"prompt", r.prompt},
                {"image", r.image},
                {"max_new_tokens", r.max_new_tokens}};
}

json results_to_json(std::span<const ScoreResult> results) {
    json arr = json::array();
    for (const auto& r : results) {
        arr.push_back(json{{"id", r.pair_id}, {"metric", std::string(to_string(r.metric))}, {"raw", r.raw}, {"model", r.model}});
    }
    return json{{"results", arr}};
}

std::vector<ScoreResult> results_from_json(const json& body) {
    std::vector<ScoreResult> out;
    try {
        for (const auto& r : body.at("results")) {
            ScoreResult res;
            res.pair_id = r.at("id").get<std::string>();
            res.metric = parse_metric(r.at("metric").get<std::string>());
            res.raw = r.at("raw").get<std::string>();
            res.model = r.value("model", std::string{});
            out.push_back(std::move(res));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProtocolError, std::string("malformed score response: ") + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mock

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = kFnvOffsetBasis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

QualityScore mock_score(std::string_view pair_id, Metric metric) {
    std::string key(pair_id);
    key += ':';
    key += to_string(metric);
    return QualityScore(static_cast<long long>(fnv1a64(key) % kScoreBins));
}

std::string truncate_tokens(std::string_view text, int max_tokens) {
    if (max_tokens <= 0) return {};
    int seen = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i == text.size()) break;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (++seen == max_tokens) return std::string(text.substr(0, i));
    }
    return std::string(text);
}

std::string mock_raw(std::string_view pair_id, Metric metric, int max_new_tokens) {
    const std::string full = std::to_string(mock_score(pair_id, metric).value()) + "\nMock rationale.";
    return truncate_tokens(full, max_new_tokens);
}

std::vector<ScoreResult> MockBackend::score(std::span<const ScoreRequest> batch) {
    std::vector<ScoreResult> out;
    out.reserve(batch.size());
    for (const auto& req : batch) {
        out.push_back({req.pair_id, req.metric, mock_raw(req.pair_id, req.metric, req.max_new_tokens),
                       std::string(kMockModelName)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Retry

Millis RetryPolicy::delay_before(int next_attempt, std::uint64_t jitter_seed) const {
    if (backoff.empty() || next_attempt < 2) return Millis{0};
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(next_attempt - 2), backoff.size() - 1);
    const double base = static_cast<double>(backoff[idx].count());
    // Map the seed onto [-1, 1) for a reproducible jitter.
    const double unit = static_cast<double>(jitter_seed >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    return Millis{static_cast<long long>(std::llround(base * (1.0 + jitter * unit)))};
}

void ScorerEndpoint::validate() const {
    if (base_url.empty()) throw Error(ErrorCode::InvalidArgument, "endpoint URL is empty");
    if (concurrency < 1) throw Error(ErrorCode::InvalidArgument, "concurrency must be at least 1");
    if (retry.max_attempts < 1) throw Error(ErrorCode::InvalidArgument, "retry max_attempts must be at least 1");
}

FailurePolicy parse_failure_policy(std::string_view s) {
    if (s == "abort") return FailurePolicy::Abort;
    if (s == "quarantine") return FailurePolicy::Quarantine;
    throw Error(ErrorCode::InvalidArgument, "unknown failure policy '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Batch scoring

namespace {

struct Outcome {
    std::optional<ScoreRecord> record;
    std::vector<Quarantined> failures;
};

class BatchRunner {
public:
    BatchRunner(ingest::PairReader& pairs, ScorerBackend& backend, const BatchOptions& opts, const RecordSink& sink,
                ingest::ProgressLog* log, const QuarantineSink& on_quarantine, std::string provenance)
        : pairs_(pairs),
          backend_(backend),
          opts_(opts),
          sink_(sink),
          log_(log),
          on_quarantine_(on_quarantine),
          provenance_(std::move(provenance)),
          window_(std::max<std::size_t>(4 * opts.concurrency, 16)) {}

    BatchStats run() {
        std::vector<std::thread> workers;
        workers.reserve(opts_.concurrency);
        for (std::size_t i = 0; i < opts_.concurrency; ++i) workers.emplace_back([this] { worker(); });
        for (auto& t : workers) t.join();
        if (error_) std::rethrow_exception(error_);
        if (log_) log_->flush();
        return stats_;
    }

private:
    // Pulls the next pair, respecting the reorder window. Returns false when done.
    bool take(ImageTextPair& pair, std::uint64_t& seq) {
        std::unique_lock lock(mu_);
        if (opts_.ordered) {
            cv_.wait(lock, [&] { return stopping_ || next_seq_ - next_emit_ < window_; });
        }
        if (stopping_ || exhausted_) return false;
        std::optional<ImageTextPair> p;
        try {
            p = pairs_.next();
        } catch (...) {
            fail(std::current_exception());
            return false;
        }
        if (!p) {
            exhausted_ = true;
            return false;
        }
        pair = std::move(*p);
        seq = next_seq_++;
        return true;
    }

    void worker() {
        ImageTextPair pair;
        std::uint64_t seq = 0;
        while (take(pair, seq)) {
            Outcome outcome;
            try {
                outcome = score_pair(pair);
            } catch (...) {
                std::lock_guard lock(mu_);
                fail(std::current_exception());
                return;
            }
            deliver(seq, std::move(outcome));
        }
    }

    // Caller holds mu_.
    void fail(std::exception_ptr e) {
        if (!error_) error_ = e;
        stopping_ = true;
        cv_.notify_all();
    }

    Outcome score_pair(const ImageTextPair& pair) {
        ScoreRecord record;
        record.pair_id = pair.id;
        record.provenance = provenance_;

        std::vector<ScoreRequest> pending;
        std::vector<std::string> causes(kMetricCount);
        for (Metric m : opts_.metrics) {
            ScoreRequest req;
            req.pair_id = pair.id;
            req.metric = m;
            req.image = pair.image;
            req.max_new_tokens = opts_.max_new_tokens;
            req.timeout = opts_.timeout;
            try {
                req.prompt = assemble_prompt(m, pair, opts_.mode, opts_.path);
            } catch (const Error& e) {
                causes[index_of(m)] = e.what();
                continue;
            }
            pending.push_back(std::move(req));
        }

        const int max_attempts = std::max(1, opts_.retry.max_attempts);
        for (int attempt = 1; attempt <= max_attempts && !pending.empty(); ++attempt) {
            if (attempt > 1) {
                std::uint64_t seed = fnv1a64(pair.id) ^ static_cast<std::uint64_t>(attempt) * kFnvPrime;
                std::this_thread::sleep_for(opts_.retry.delay_before(attempt, seed));
                std::lock_guard lock(mu_);
                ++stats_.retries;
                if (stopping_) return {};
            }
            for (auto& req : pending) req.attempt = attempt;

            std::vector<ScoreResult> results;
            {
                std::lock_guard lock(mu_);
                ++stats_.requests;
            }
            try {
                results = backend_.score(pending);
            } catch (const std::exception& e) {
                for (const auto& req : pending) causes[index_of(req.metric)] = e.what();
                continue;
            }

            std::vector<ScoreRequest> still;
            for (auto& req : pending) {
                auto it = std::find_if(results.begin(), results.end(), [&](const ScoreResult& r) {
                    return r.metric == req.metric && r.pair_id == req.pair_id;
                });
                if (it == results.end()) {
                    causes[index_of(req.metric)] = "no result returned";
                    still.push_back(std::move(req));
                    continue;
                }
                try {
                    record.set(req.metric, parse_score(it->raw, opts_.mode));
                } catch (const Error& e) {
                    causes[index_of(req.metric)] = e.what();
                    still.push_back(std::move(req));
                }
            }
            pending = std::move(still);
        }

        Outcome out;
        std::vector<Quarantined> failures;
        for (Metric m : opts_.metrics) {
            if (!record.has(m)) failures.push_back({pair.id, m, causes[index_of(m)]});
        }
        if (failures.empty()) {
            out.record = std::move(record);
            return out;
        }
        if (opts_.on_failure == FailurePolicy::Abort) {
            const auto& f = failures.front();
            throw Error(ErrorCode::ScoreFailed,
                        "scoring '" + f.pair_id + "' on " + std::string(to_string(f.metric)) + " failed: " + f.cause,
                        {{"id", f.pair_id}, {"metric", std::string(to_string(f.metric))}, {"cause", f.cause}});
        }
        out.failures = std::move(failures);
        return out;
    }

    void deliver(std::uint64_t seq, Outcome outcome) {
        std::lock_guard lock(mu_);
        if (stopping_) return;
        try {
            if (!opts_.ordered) {
                emit(outcome);
            } else {
                done_.emplace(seq, std::move(outcome));
                for (auto it = done_.find(next_emit_); it != done_.end(); it = done_.find(next_emit_)) {
                    emit(it->second);
                    done_.erase(it);
                    ++next_emit_;
                }
            }
        } catch (...) {
            fail(std::current_exception());
            return;
        }
        cv_.notify_all();
    }

    // Caller holds mu_.
    void emit(const Outcome& outcome) {
        if (outcome.record) {
            sink_(*outcome.record);
            if (log_) log_->append(outcome.record->pair_id);
            ++stats_.scored;
        }
        for (const auto& q : outcome.failures) {
            if (on_quarantine_) on_quarantine_(q);
        }
        if (!outcome.failures.empty()) ++stats_.quarantined;
    }

    ingest::PairReader& pairs_;
    ScorerBackend& backend_;
    const BatchOptions& opts_;
    const RecordSink& sink_;
    ingest::ProgressLog* log_;
    const QuarantineSink& on_quarantine_;
    std::string provenance_;
    const std::uint64_t window_;

    std::mutex mu_;
    std::condition_variable cv_;
    bool stopping_ = false;
    bool exhausted_ = false;
    std::exception_ptr error_;
    std::uint64_t next_seq_ = 0;
    std::uint64_t next_emit_ = 0;
    std::map<std::uint64_t, Outcome> done_;
    BatchStats stats_;
};

}  // namespace

BatchStats score_batch(ingest::PairReader& pairs, ScorerBackend& backend, const BatchOptions& opts,
                       const RecordSink& sink, ingest::ProgressLog* log, const QuarantineSink& on_quarantine) {
    if (opts.metrics.empty()) throw Error(ErrorCode::InvalidArgument, "no metrics requested");
    if (opts.concurrency < 1) throw Error(ErrorCode::InvalidArgument, "concurrency must be at least 1");
    if (opts.max_new_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_new_tokens must be at least 1");

    HealthInfo health;
    try {
        health = backend.health();
    } catch (const std::exception& e) {
        throw Error(ErrorCode::EndpointUnreachable, std::string("health check failed: ") + e.what());
    }
    if (health.status != "ok") {
        throw Error(ErrorCode::EndpointUnreachable, "endpoint reports status '" + health.status + "'");
    }
    std::string provenance = opts.provenance.empty() ? health.model : opts.provenance;
    BatchRunner runner(pairs, backend, opts, sink, log, on_quarantine, std::move(provenance));
    return runner.run();
}

}  // namespace mtf::scorer
