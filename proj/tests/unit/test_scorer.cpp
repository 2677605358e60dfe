#include "helpers.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "mtf/scorer.hpp"

using namespace mtf;
using namespace mtf::scorer;
using testutil::TempDir;

namespace {

// Written out from the published FNV-1a definition, independent of the library.
std::uint64_t reference_fnv(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h = h ^ c;
        h = h * 0x100000001b3ULL;
    }
    return h;
}

std::vector<ImageTextPair> make_pairs(int n, const std::string& prefix = "p") {
    std::vector<ImageTextPair> out;
    for (int i = 0; i < n; ++i) out.push_back({prefix + std::to_string(i), ImageRef::path("x.jpg"), "caption", std::nullopt});
    return out;
}

BatchOptions fast_options(std::vector<Metric> metrics, std::size_t c = 4) {
    BatchOptions o;
    o.metrics = std::move(metrics);
    o.concurrency = c;
    o.retry.backoff = {Millis{1}};
    o.retry.jitter = 0.0;
    return o;
}

std::vector<ScoreRecord> run_batch(std::vector<ImageTextPair> pairs, ScorerBackend& backend, const BatchOptions& o,
                                   BatchStats* stats = nullptr) {
    ingest::VectorReader reader(std::move(pairs));
    std::vector<ScoreRecord> out;
    auto s = score_batch(reader, backend, o, [&](const ScoreRecord& r) { out.push_back(r); });
    if (stats) *stats = s;
    return out;
}

class InstrumentedBackend : public ScorerBackend {
public:
    explicit InstrumentedBackend(Millis latency) : latency_(latency) {}
    HealthInfo health() override { return {"ok", "instrumented"}; }
    std::vector<ScoreResult> score(std::span<const ScoreRequest> batch) override {
        const int now = ++in_flight_;
        int prev = peak_.load();
        while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(latency_);
        auto out = inner_.score(batch);
        --in_flight_;
        ++calls_;
        return out;
    }
    int peak() const { return peak_.load(); }
    int calls() const { return calls_.load(); }

private:
    Millis latency_;
    MockBackend inner_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_{0};
    std::atomic<int> calls_{0};
};

// Fails the first `failures` calls for each (pair, metric).
class FlakyBackend : public ScorerBackend {
public:
    explicit FlakyBackend(int failures, bool throw_on_fail) : failures_(failures), throw_(throw_on_fail) {}
    HealthInfo health() override { return {"ok", "flaky"}; }
    std::vector<ScoreResult> score(std::span<const ScoreRequest> batch) override {
        std::lock_guard lock(mu_);
        std::vector<ScoreResult> out;
        std::vector<bool> failing;
        for (const auto& req : batch) failing.push_back(seen_[req.pair_id + ":" + std::string(to_string(req.metric))]++ < failures_);
        if (throw_ && std::find(failing.begin(), failing.end(), true) != failing.end()) {
            throw Error(ErrorCode::EndpointUnreachable, "connection reset");
        }
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const auto& req = batch[i];
            if (failing[i]) {
                out.push_back({req.pair_id, req.metric, "I cannot rate this.", "flaky"});
                continue;
            }
            out.push_back({req.pair_id, req.metric, mock_raw(req.pair_id, req.metric, req.max_new_tokens), "flaky"});
        }
        return out;
    }

private:
    int failures_;
    bool throw_;
    std::mutex mu_;
    std::map<std::string, int> seen_;
};

class DownBackend : public ScorerBackend {
public:
    HealthInfo health() override { throw Error(ErrorCode::EndpointUnreachable, "connection refused"); }
    std::vector<ScoreResult> score(std::span<const ScoreRequest>) override {
        ++calls;
        return {};
    }
    int calls = 0;
};

}  // namespace

TEST_CASE("FNV-1a matches the reference definition") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::string id = "pair-" + std::to_string(i * 7919) + (i % 2 ? "-x" : "");
        for (Metric m : kAllMetrics) {
            const auto key = id + ":" + std::string(to_string(m));
            const auto expected = static_cast<int>(reference_fnv(key) % 101);
            CHECK(mock_score(id, m).value() == expected);
            CHECK(mock_score(id, m) == mock_score(id, m));
            ++checked;
        }
    }
    CHECK(checked == 4000);
}

TEST_CASE("mock raw text and truncation") {
    const auto s = mock_score("p1", Metric::ITM).value();
    CHECK(mock_raw("p1", Metric::ITM, 512) == std::to_string(s) + "\nMock rationale.");
    CHECK(mock_raw("p1", Metric::ITM, 1) == std::to_string(s));
    CHECK(mock_raw("p1", Metric::ITM, 2) == std::to_string(s) + "\nMock");
    CHECK(truncate_tokens("  a  b c", 2) == "  a  b");
    CHECK(truncate_tokens("a b", 0).empty());
    CHECK(parse_score(mock_raw("p1", Metric::ITM, 1), PromptMode::Rationalization).value() == s);
}

TEST_CASE("wire encoding") {
    ScoreRequest r;
    r.pair_id = "p1";
    r.metric = Metric::CTQ;
    r.prompt = "P";
    r.image = ImageRef::url("http://h/i.jpg");
    r.max_new_tokens = 4;
    const auto j = request_to_json(r);
    CHECK(j.at("id") == "p1");
    CHECK(j.at("metric") == "ctq");
    CHECK(j.at("image").at("kind") == "url");
    CHECK(j.at("max_new_tokens") == 4);

    std::vector<ScoreResult> results{{"p1", Metric::CTQ, "42\nok", "m"}};
    const auto back = results_from_json(results_to_json(results));
    REQUIRE(back.size() == 1);
    CHECK(back[0].raw == "42\nok");
    CHECK(back[0].metric == Metric::CTQ);
    CHECK_ERROR(results_from_json(json::parse(R"({"results":[{"id":"p1"}]})")), ErrorCode::ProtocolError);
    CHECK_ERROR(results_from_json(json::parse(R"({"oops":1})")), ErrorCode::ProtocolError);
}

TEST_CASE("retry delays follow the schedule") {
    RetryPolicy p;
    p.jitter = 0.0;
    CHECK(p.delay_before(1, 0) == Millis{0});
    CHECK(p.delay_before(2, 0) == Millis{1000});
    CHECK(p.delay_before(3, 0) == Millis{2000});
    CHECK(p.delay_before(4, 0) == Millis{4000});
    CHECK(p.delay_before(9, 0) == Millis{4000});
    p.jitter = 0.2;
    for (std::uint64_t seed = 0; seed < 1000; seed += 37) {
        const auto d = p.delay_before(2, seed * 0x9E3779B97F4A7C15ULL).count();
        CHECK(d >= 800);
        CHECK(d <= 1200);
    }
}

TEST_CASE("batch scoring against the mock is complete and deterministic") {
    MockBackend mock;
    const auto opts = fast_options({Metric::ITM, Metric::ODF}, 8);
    BatchStats stats;
    const auto first = run_batch(make_pairs(100), mock, opts, &stats);
    REQUIRE(first.size() == 100);
    CHECK(stats.scored == 100);
    CHECK(stats.requests == 100);
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].pair_id == "p" + std::to_string(i));
        CHECK(first[i].get(Metric::ITM) == mock_score(first[i].pair_id, Metric::ITM));
        CHECK(first[i].get(Metric::ODF) == mock_score(first[i].pair_id, Metric::ODF));
        CHECK_FALSE(first[i].has(Metric::CTQ));
        CHECK(first[i].provenance == "mock-fnv");
    }
    CHECK(run_batch(make_pairs(100), mock, opts) == first);
}

TEST_CASE("unordered emission covers the same records") {
    MockBackend mock;
    auto opts = fast_options({Metric::SU}, 8);
    opts.ordered = false;
    auto recs = run_batch(make_pairs(200), mock, opts);
    std::set<std::string> ids;
    for (const auto& r : recs) ids.insert(r.pair_id);
    CHECK(ids.size() == 200);
}

TEST_CASE("interrupted run resumes to the same output") {
    TempDir dir;
    MockBackend mock;
    const auto opts = fast_options({Metric::ITM, Metric::ODF}, 4);
    const auto full = run_batch(make_pairs(100), mock, opts);

    std::vector<ScoreRecord> partial;
    {
        ingest::ProgressLog log(dir / "p.log", 8);
        ingest::VectorReader reader(make_pairs(100));
        auto sink = [&](const ScoreRecord& r) {
            if (partial.size() == 40) throw std::runtime_error("killed");
            partial.push_back(r);
        };
        CHECK_THROWS_WITH(score_batch(reader, mock, opts, sink, &log), "killed");
    }
    CHECK(partial.size() == 40);
    CHECK(ingest::ProgressLog::replay(dir / "p.log").size() == 40);

    ingest::VectorReader reader(make_pairs(100));
    auto rest_in = ingest::resume_filter(reader, dir / "p.log");
    ingest::ProgressLog log(dir / "p.log");
    std::vector<ScoreRecord> rest;
    score_batch(*rest_in, mock, opts, [&](const ScoreRecord& r) { rest.push_back(r); }, &log);
    partial.insert(partial.end(), rest.begin(), rest.end());
    CHECK(partial == full);
}

TEST_CASE("unreachable endpoint fails before any request") {
    DownBackend down;
    CHECK_ERROR(run_batch(make_pairs(5), down, fast_options({Metric::ITM})), ErrorCode::EndpointUnreachable);
    CHECK(down.calls == 0);
}

TEST_CASE("failed metrics are retried") {
    SUBCASE("transport errors") {
        FlakyBackend flaky(2, true);
        BatchStats stats;
        auto recs = run_batch(make_pairs(10), flaky, fast_options({Metric::ITM, Metric::CTQ}), &stats);
        CHECK(recs.size() == 10);
        CHECK(stats.requests == 30);
        CHECK(stats.retries == 20);
    }
    SUBCASE("unparseable output") {
        FlakyBackend flaky(1, false);
        auto recs = run_batch(make_pairs(10), flaky, fast_options({Metric::ITM}));
        REQUIRE(recs.size() == 10);
        CHECK(recs[3].get(Metric::ITM) == mock_score("p3", Metric::ITM));
    }
}

TEST_CASE("exhausted retries abort or quarantine") {
    FlakyBackend never(100, false);
    auto opts = fast_options({Metric::ITM, Metric::SU});
    opts.retry.max_attempts = 2;
    CHECK_ERROR(run_batch(make_pairs(5), never, opts), ErrorCode::ScoreFailed);

    opts.on_failure = FailurePolicy::Quarantine;
    FlakyBackend never2(100, false);
    ingest::VectorReader reader(make_pairs(5));
    std::vector<Quarantined> q;
    std::vector<ScoreRecord> recs;
    auto stats = score_batch(reader, never2, opts, [&](const ScoreRecord& r) { recs.push_back(r); }, nullptr,
                             [&](const Quarantined& x) { q.push_back(x); });
    CHECK(recs.empty());
    CHECK(q.size() == 10);
    CHECK(stats.quarantined == 5);
    CHECK(q[0].cause.find("no integer score") != std::string::npos);
}

TEST_CASE("text-only scoring without a dense caption is quarantined, not sent") {
    InstrumentedBackend backend(Millis{0});
    auto opts = fast_options({Metric::ITM});
    opts.path = TeacherPath::TextOnly;
    opts.on_failure = FailurePolicy::Quarantine;
    auto pairs = make_pairs(3);
    pairs[1].dense_caption = "A dog.";
    ingest::VectorReader reader(pairs);
    std::vector<ScoreRecord> recs;
    std::vector<Quarantined> q;
    score_batch(reader, backend, opts, [&](const ScoreRecord& r) { recs.push_back(r); }, nullptr,
                [&](const Quarantined& x) { q.push_back(x); });
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].pair_id == "p1");
    CHECK(q.size() == 2);
    CHECK(backend.calls() == 1);
}

TEST_CASE("in-flight requests never exceed the concurrency cap") {
    for (std::size_t c : {1, 4, 32}) {
        CAPTURE(c);
        InstrumentedBackend backend(Millis{5});
        auto recs = run_batch(make_pairs(96), backend, fast_options({Metric::ITM}, c));
        CHECK(recs.size() == 96);
        CHECK(backend.peak() <= static_cast<int>(c));
        CHECK(backend.peak() >= 1);
    }
}

TEST_CASE("invalid batch options") {
    MockBackend mock;
    CHECK_ERROR(run_batch(make_pairs(1), mock, fast_options({})), ErrorCode::InvalidArgument);
    CHECK_ERROR(run_batch(make_pairs(1), mock, fast_options({Metric::ITM}, 0)), ErrorCode::InvalidArgument);
    CHECK_ERROR(parse_failure_policy("retry"), ErrorCode::InvalidArgument);
}
