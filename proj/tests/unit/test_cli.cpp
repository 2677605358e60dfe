#include "helpers.hpp"

#include <sstream>

#include "mtf/cli.hpp"
#include "mtf/curation.hpp"
#include "mtf/embedding.hpp"
#include "mtf/ingest.hpp"

using namespace mtf;
using testutil::read_file;
using testutil::TempDir;
using testutil::write_file;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = mtf::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

void write_pairs_file(const std::filesystem::path& p, int n) {
    std::string text;
    for (int i = 0; i < n; ++i) {
        text += canonical_dump(json{{"id", "p" + std::to_string(i)}, {"image", "img/" + std::to_string(i) + ".jpg"},
                                    {"caption", "caption " + std::to_string(i)}});
        text += '\n';
    }
    write_file(p, text);
}

}  // namespace

TEST_CASE("usage errors exit 2 with a JSON error") {
    auto r = run_cli({"frobnicate"});
    CHECK(r.code == mtf::cli::kExitUsage);
    CHECK(json::parse(r.err).at("error") == "UsageError");
    CHECK(run_cli({}).code == mtf::cli::kExitUsage);
    CHECK(run_cli({"threshold", "--fraction", "abc"}).code == mtf::cli::kExitUsage);
    CHECK(run_cli({"threshold", "--metrics", "itm"}).code == mtf::cli::kExitUsage);  // missing --scores
    r = run_cli({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("score") != std::string::npos);
}

TEST_CASE("score, threshold, filter, report and sweep") {
    TempDir dir;
    write_pairs_file(dir / "p.jsonl", 300);
    const auto scores = (dir / "s.jsonl").string();

    auto r = run_cli({"score", "--pairs", (dir / "p.jsonl").string(), "--metrics", "itm,odf", "--endpoint", "mock", "--out",
                  scores, "--concurrency", "3"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out).at("scored") == 300);
    const auto recs = ingest::read_scores(scores);
    REQUIRE(recs.size() == 300);
    CHECK(recs[7].pair_id == "p7");
    CHECK(recs[7].get(Metric::ODF) == scorer::mock_score("p7", Metric::ODF));
    const auto manifest = ingest::read_manifest(scores + ".manifest.json");
    CHECK(manifest.total() == 300);
    CHECK(manifest.config_digest.size() == 64);

    r = run_cli({"threshold", "--scores", scores, "--metrics", "itm,odf", "--fraction", "0.3"});
    REQUIRE(r.code == 0);
    const auto th = json::parse(r.out);
    CHECK(th.at("fraction") == 0.3);
    CHECK(th.at("thresholds").contains("itm"));

    r = run_cli({"filter", "--scores", scores, "--spec", R"({"metrics":["itm","odf"],"combiner":"AND","fraction":0.3})",
             "--pairs", (dir / "p.jsonl").string(), "--out", (dir / "f").string()});
    REQUIRE(r.code == 0);
    const auto summary = json::parse(read_file(dir / "f" / "summary.json"));
    CHECK(summary.at("thresholds").at("itm") == th.at("thresholds").at("itm"));
    CHECK(summary.at("thresholds").at("odf") == th.at("thresholds").at("odf"));
    CHECK(summary.at("combiner") == "AND");
    const auto retained = summary.at("retained").get<std::size_t>();
    std::size_t lines = 0;
    ingest::for_each_jsonl(dir / "f" / "retained_ids.jsonl", [&](const json&, std::uint64_t) { ++lines; });
    CHECK(lines == retained);
    CHECK(ingest::drain(*ingest::open_jsonl({dir / "f" / "retained.jsonl"})).size() == retained);

    r = run_cli({"filter", "--scores", scores, "--metrics", "su", "--out", (dir / "g").string()});
    CHECK(r.code == 1);
    CHECK(json::parse(r.err).at("error") == "MissingHistogram");

    r = run_cli({"report", "--scores", scores, "--out", (dir / "rep").string()});
    REQUIRE(r.code == 0);
    const auto rep = json::parse(read_file(dir / "rep.json"));
    CHECK(rep.at("itm").at("histogram").at("total") == 300);
    CHECK_FALSE(rep.contains("su"));
    CHECK(read_file(dir / "rep.csv").rfind("metric,kind,key,value\n", 0) == 0);

    r = run_cli({"sweep", "--scores", scores, "--metric", "odf"});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("fraction,threshold,retained\n0.2,", 0) == 0);
}

TEST_CASE("config file and flag precedence") {
    TempDir dir;
    write_pairs_file(dir / "p.jsonl", 20);
    const auto scores = (dir / "s.jsonl").string();
    REQUIRE(run_cli({"score", "--pairs", (dir / "p.jsonl").string(), "--metrics", "ctq", "--endpoint", "mock", "--out", scores})
                .code == 0);

    write_file(dir / "c.json", R"({"scores":")" + scores + R"(","metrics":["ctq"],"fraction":0.5})");
    auto r = run_cli({"threshold", "--config", (dir / "c.json").string()});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out).at("fraction") == 0.5);
    r = run_cli({"threshold", "--config", (dir / "c.json").string(), "--fraction", "0.2"});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out).at("fraction") == 0.2);

    write_file(dir / "bad.json", R"({"scores":"x","colour":"red"})");
    r = run_cli({"threshold", "--config", (dir / "bad.json").string()});
    CHECK(r.code == mtf::cli::kExitUsage);
    CHECK(json::parse(r.err).at("error") == "ConfigError");
}

TEST_CASE("score resume after a crash reproduces the file") {
    TempDir dir;
    write_pairs_file(dir / "p.jsonl", 500);
    const auto full = (dir / "full.jsonl").string();
    const auto part = (dir / "part.jsonl").string();
    const std::vector<std::string> base{"score", "--pairs", (dir / "p.jsonl").string(), "--metrics", "itm,su",
                                        "--endpoint", "mock"};
    auto args = base;
    args.insert(args.end(), {"--out", full});
    REQUIRE(run_cli(args).code == 0);
    const auto want = read_file(full);

    // Crash state: the log covers 150 ids, the score file has 170 lines plus a torn one.
    std::istringstream in(want);
    std::string line, scores_text, log_text;
    for (int i = 0; i < 171 && std::getline(in, line); ++i) {
        if (i < 170) scores_text += line + "\n";
        if (i == 170) scores_text += line.substr(0, line.size() / 2);
        if (i < 150) log_text += json::parse(line).at("id").get<std::string>() + "\n";
    }
    write_file(part, scores_text);
    write_file(part + ".progress", log_text + "p150");

    args = base;
    args.insert(args.end(), {"--out", part, "--resume"});
    auto r = run_cli(args);
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out).at("carried_over") == 150);
    CHECK(read_file(part) == want);
}

TEST_CASE("failures: unreachable endpoint and quarantine") {
    TempDir dir;
    write_pairs_file(dir / "p.jsonl", 5);
    auto r = run_cli({"score", "--pairs", (dir / "p.jsonl").string(), "--metrics", "itm", "--endpoint", "http://127.0.0.1:1",
                  "--out", (dir / "s.jsonl").string(), "--timeout-ms", "300"});
    CHECK(r.code == 1);
    CHECK(json::parse(r.err).at("error") == "EndpointUnreachable");

    write_file(dir / "dense.jsonl", R"({"id":"a","caption":"c","dense_caption":"d"})" "\n" R"({"id":"b","caption":"c"})" "\n");
    r = run_cli({"score", "--pairs", (dir / "dense.jsonl").string(), "--metrics", "itm", "--endpoint", "mock", "--path",
             "text_only", "--on-failure", "quarantine", "--out", (dir / "d.jsonl").string()});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out).at("quarantined") == 1);
    CHECK(read_file(dir / "d.jsonl.rejects.jsonl").find("\"id\":\"b\"") != std::string::npos);
}

TEST_CASE("curate subcommands") {
    TempDir dir;

    SUBCASE("jobs") {
        write_pairs_file(dir / "p.jsonl", 3);
        auto r = run_cli({"curate", "jobs", "--pairs", (dir / "p.jsonl").string(), "--path", "text_only"});
        REQUIRE(r.code == 0);
        std::istringstream in(r.out);
        std::string line;
        int n = 0, captions = 0;
        while (std::getline(in, line)) {
            ++n;
            captions += json::parse(line).at("kind") == "dense_caption";
        }
        CHECK(n == 15);
        CHECK(captions == 3);
    }

    SUBCASE("sample is seed-deterministic") {
        std::vector<curation::InstructionRecord> recs;
        for (int i = 0; i < 3000; ++i) {
            const int s = (i * 37) % 101;
            recs.push_back(curation::scoring_instruction(Metric::ITM, "P" + std::to_string(i), std::to_string(s) + "\nwhy", "itm"));
        }
        curation::write_instructions(recs, dir / "i.jsonl");
        const std::vector<std::string> args{"curate", "sample", "--instructions", (dir / "i.jsonl").string(), "--seed", "5",
                                            "--metric", "itm"};
        const auto a = run_cli(args), b = run_cli(args);
        REQUIRE(a.code == 0);
        CHECK(a.out == b.out);
        CHECK(std::count(a.out.begin(), a.out.end(), '\n') == 1000);
    }

    SUBCASE("mixture") {
        json spec{{"sources", {{{"pool", "a"}, {"target", 3}}, {{"pool", "b"}, {"target", 2}}}}, {"total", 5}};
        write_file(dir / "mix.json", spec.dump());
        std::vector<curation::InstructionRecord> a(10, {"q", "a", {}, "", {}}), b(2, {"q", "b", {}, "", {}});
        curation::write_instructions(a, dir / "a.jsonl");
        curation::write_instructions(b, dir / "b.jsonl");
        auto r = run_cli({"curate", "mixture", "--mixture", (dir / "mix.json").string(), "--seed", "1", "--out",
                      (dir / "m.jsonl").string()});
        REQUIRE(r.code == 0);
        CHECK(curation::read_instructions(dir / "m.jsonl").size() == 5);
        CHECK(json::parse(r.out).at("per_source").at("b") == 2);

        spec["sources"][1]["target"] = 3;
        spec["total"] = 6;
        write_file(dir / "mix.json", spec.dump());
        r = run_cli({"curate", "mixture", "--mixture", (dir / "mix.json").string()});
        CHECK(r.code == 1);
        CHECK(json::parse(r.err).at("error") == "InsufficientPool");
    }

    SUBCASE("cluster") {
        scorer::EmbeddingTable t(2);
        const float pts[6][2] = {{0, 0}, {1, 0}, {0, 1.5f}, {10, 10}, {11, 10.5f}, {9.5f, 11}};
        for (int i = 0; i < 6; ++i) t.add("e" + std::to_string(i), std::span<const float>(pts[i], 2), std::span<const float>(pts[i], 2));
        t.save(dir / "e.bin");
        auto r = run_cli({"curate", "cluster", "--embeddings", (dir / "e.bin").string(), "--k", "2", "--seed", "3"});
        REQUIRE(r.code == 0);
        auto reps = json::parse(r.out).at("representatives").get<std::vector<std::string>>();
        std::sort(reps.begin(), reps.end());
        CHECK(reps == std::vector<std::string>{"e0", "e3"});
    }
}

TEST_CASE("correlate") {
    TempDir dir;
    std::vector<ScoreRecord> recs;
    std::string human = "id,human\n";
    for (int i = 0; i < 30; ++i) {
        ScoreRecord r;
        r.pair_id = "c" + std::to_string(i);
        r.set(Metric::ITM, QualityScore(i * 3));
        recs.push_back(r);
        human += r.pair_id + "," + std::to_string(i % 7 == 0 ? i + 5 : i) + "\n";
    }
    ingest::write_scores(recs, dir / "s.jsonl");
    write_file(dir / "h.csv", human);
    auto r = run_cli({"correlate", "--scores", (dir / "s.jsonl").string(), "--human", (dir / "h.csv").string(), "--metric",
                  "itm", "--permutations", "99"});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j.at("n") == 30);
    CHECK(j.at("pearson").at("coefficient").get<double>() > 0.9);
    CHECK(j.at("spearman").contains("permutation_p_value"));
}
