#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Runs the CLI inside `dir` with the given arguments.
Run cli(const fs::path& dir, const std::string& args) {
    const std::string cmd = "cd '" + dir.string() + "' && '" FLOWSTATE_CLI "' " + args + " > cli.out 2> cli.err";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir / "cli.out");
    r.err = slurp(dir / "cli.err");
    return r;
}

std::size_t lines(const fs::path& path) {
    std::ifstream in(path);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

/// A synthetic workspace shared by the cases below.
const fs::path& workspace() {
    static const fs::path dir = [] {
        auto d = testing::temp_dir("cli");
        const auto r = cli(d, "--seed 3 synth -o data --train-flows 6000 --test-flows 3000 --attack-flows 600");
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("synth writes a runnable workspace") {
    const auto& d = workspace();
    CHECK(fs::exists(d / "data" / "train.csv"));
    CHECK(fs::exists(d / "data" / "test.csv"));
    CHECK(lines(d / "data" / "train.csv") == 6001);
    CHECK(lines(d / "data" / "test.csv") == 3601);
    const auto config = nlohmann::json::parse(slurp(d / "data" / "config.json"));
    CHECK(config.at("train") == "train.csv");
}

TEST_CASE("train is reproducible for a fixed seed") {
    const auto& d = workspace();
    const auto a = cli(d, "--config data/config.json --seed 9 train -o a.model");
    REQUIRE(a.code == 0);
    CHECK(a.out.find("states:") != std::string::npos);
    CHECK(a.out.find("alert threshold:") != std::string::npos);
    const auto b = cli(d, "--config data/config.json --seed 9 train -o b.model");
    REQUIRE(b.code == 0);
    CHECK(slurp(d / "a.model") == slurp(d / "b.model"));
    CHECK_FALSE(slurp(d / "a.model").empty());
}

TEST_CASE("score, attack and eval") {
    const auto& d = workspace();
    REQUIRE(cli(d, "--config data/config.json train -o m.model").code == 0);

    const auto s = cli(d, "--config data/config.json score -m m.model --test data/test.csv -o scores");
    REQUIRE(s.code == 0);
    for (const char* f : {"verdicts.csv", "groups.csv", "traces.jsonl", "score.json"}) CHECK(fs::exists(d / "scores" / f));
    const auto meta = nlohmann::json::parse(slurp(d / "scores" / "score.json"));
    CHECK(fs::path(meta.at("flows").get<std::string>()).is_absolute());
    CHECK(lines(d / "scores" / "verdicts.csv") == meta.at("traces").get<std::size_t>() + 1);

    const auto a = cli(d, "--config data/config.json attack --test data/test.csv -o attacked.csv --kind frequency");
    REQUIRE(a.code == 0);
    CHECK(lines(d / "attacked.csv") == 3601);
    const auto prov = nlohmann::json::parse(slurp(d / "attacked.csv.provenance.json"));
    CHECK(prov.at("attack") == "frequency");
    CHECK(prov.at("malicious_flows") == 600);
    CHECK(prov.at("flows") == 3600);

    const auto e = cli(d, "--config data/config.json eval -o report --repetitions 1");
    REQUIRE(e.code == 0);
    CHECK(lines(d / "report" / "results.csv") == 1 + 3 * 5);
    CHECK(fs::exists(d / "report" / "summary.txt"));
}

TEST_CASE("scoring a file with no traces still succeeds") {
    const auto& d = workspace();
    REQUIRE(cli(d, "--config data/config.json train -o m.model").code == 0);
    std::ifstream full(d / "data" / "test.csv");
    std::string header;
    std::getline(full, header);
    std::ofstream(d / "header_only.csv") << header << '\n';
    const auto r = cli(d, "score -m m.model --test header_only.csv -o empty_scores");
    CHECK(r.code == 0);
    CHECK(lines(d / "empty_scores" / "verdicts.csv") == 1);
    CHECK(lines(d / "empty_scores" / "groups.csv") == 1);
}

TEST_CASE("errors exit nonzero with a message") {
    const auto& d = workspace();
    std::ofstream(d / "wrong.csv") << "a,b\n1,2\n";
    REQUIRE(cli(d, "--config data/config.json train -o m.model").code == 0);

    const auto schema = cli(d, "score -m m.model --test wrong.csv -o x");
    CHECK(schema.code == 1);
    CHECK(schema.err.find("not found in header") != std::string::npos);

    CHECK(cli(d, "score -m m.model").code != 0);
    CHECK(cli(d, "train --train missing.csv -o y.model").code == 1);
    CHECK(cli(d, "attack --test data/test.csv -o z.csv --kind teleport").code != 0);

    const auto mixed = cli(d, "train --train data/test.csv -o y.model");
    CHECK(mixed.code == 1);
    CHECK(mixed.err.find("malicious") != std::string::npos);
}

TEST_CASE("serve refuses a busy port") {
    const auto& d = workspace();
    REQUIRE(cli(d, "--config data/config.json train -o m.model").code == 0);
    REQUIRE(cli(d, "--config data/config.json score -m m.model --test data/test.csv -o scores").code == 0);
    httplib::Server blocker;
    const int port = blocker.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    const auto r = cli(d, "serve -m m.model --scores scores --port " + std::to_string(port));
    CHECK(r.code == 1);
    CHECK(r.err.find("port busy") != std::string::npos);
}
