#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "flowstate/error.hpp"
#include "flowstate/service.hpp"
#include "flowstate/synthetic.hpp"
#include "support.hpp"

using namespace flowstate;
using nlohmann::json;

namespace {

/// A scored run on disk: bundle, flows and score directory.
struct Fixture {
    std::filesystem::path dir;
    std::filesystem::path bundle;
    std::filesystem::path flows;
    std::filesystem::path scores;
    ScoreResult result;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture x;
        x.dir = testing::temp_dir("service");
        synthetic::Params p;
        p.train_flows = 10000;
        p.test_benign_flows = 4000;
        p.attack_flows = 500;
        p.seed = 7;
        const auto ds = synthetic::frequency_anomaly(synthetic::five_state_machine(), p);
        PipelineConfig c;
        c.restarts = 2;
        const auto trained = train_model(ds.train, c, 7);
        x.bundle = x.dir / "model.fsm";
        save_bundle(x.bundle, trained.bundle);
        x.flows = x.dir / "test.csv";
        {
            std::ofstream out(x.flows);
            write_flows_csv(out, ds.test);
        }
        x.result = score_flows(trained.bundle, ds.test, c);
        x.scores = x.dir / "scores";
        write_score_outputs(x.scores, x.result, json{{"model", x.bundle.string()}});
        return x;
    }();
    return f;
}

std::filesystem::path fresh_journal(const std::string& name) {
    const auto path = fixture().dir / (name + ".journal");
    std::filesystem::remove(path);
    return path;
}

TriageService make_service(const std::filesystem::path& journal) {
    const auto& f = fixture();
    return TriageService(load_triage_data(f.bundle, f.scores, f.flows), journal);
}

ApiResponse get(TriageService& s, const std::string& path, std::map<std::string, std::string> query = {}) {
    return s.handle(ApiRequest{"GET", path, std::move(query), ""});
}

ApiResponse post(TriageService& s, const std::string& path, const std::string& body) {
    return s.handle(ApiRequest{"POST", path, {}, body});
}

std::size_t line_count(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += !line.empty();
    return n;
}

}  // namespace

TEST_CASE("trace details survive a round trip") {
    const auto& f = fixture();
    std::ostringstream out;
    write_trace_details(out, f.result.verdicts);
    std::istringstream in(out.str());
    const auto back = read_trace_details(in);
    REQUIRE(back.size() == f.result.verdicts.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].anomaly_score == f.result.verdicts[i].anomaly_score);
        CHECK(back[i].root_cause == f.result.verdicts[i].root_cause);
        CHECK(back[i].state_sequence == f.result.verdicts[i].state_sequence);
        CHECK(back[i].per_state_scores == f.result.verdicts[i].per_state_scores);
        CHECK(back[i].label == f.result.verdicts[i].label);
    }
    std::istringstream bad("{\"seq_no\": 0}\n");
    CHECK_THROWS_AS(read_trace_details(bad), ParseError);
}

TEST_CASE("score directory contents") {
    const auto& f = fixture();
    for (const char* name : {ScoreFiles::verdicts, ScoreFiles::groups, ScoreFiles::traces, ScoreFiles::meta})
        CHECK(std::filesystem::exists(f.scores / name));
    CHECK(line_count(f.scores / ScoreFiles::verdicts) == f.result.verdicts.size() + 1);
    CHECK(line_count(f.scores / ScoreFiles::groups) == f.result.groups.size() + 1);
    std::ifstream meta(f.scores / ScoreFiles::meta);
    const json m = json::parse(meta);
    CHECK(m.at("threshold").get<double>() == f.result.threshold);
    CHECK(m.at("traces").get<std::size_t>() == f.result.verdicts.size());
    CHECK(m.at("model").get<std::string>() == f.bundle.string());
    CHECK_THROWS_AS(load_triage_data(f.bundle, f.dir / "nowhere", f.flows), ConfigError);
}

TEST_CASE("groups, traces and flows") {
    auto s = make_service(fresh_journal("read"));
    const auto& f = fixture();

    const auto groups = get(s, "/groups");
    REQUIRE(groups.status == 200);
    REQUIRE(groups.body.size() == f.result.groups.size());
    REQUIRE(groups.body.size() >= 2);
    for (std::size_t i = 1; i < groups.body.size(); ++i)
        CHECK(groups.body[i - 1]["size"].get<std::size_t>() >= groups.body[i]["size"].get<std::size_t>());
    for (std::size_t i = 0; i < groups.body.size(); ++i) {
        CHECK(groups.body[i]["root_cause"] == f.result.groups[i].root_cause);
        CHECK(groups.body[i]["verdict"] == "unreviewed");
    }

    const double floor = groups.body[0]["top_score"].get<double>();
    for (const auto& g : get(s, "/groups", {{"min_score", std::to_string(floor)}}).body)
        CHECK(g["top_score"].get<double>() >= floor);
    CHECK(get(s, "/groups", {{"min_score", "lots"}}).status == 400);

    const auto top = groups.body[0]["root_cause"].get<StateId>();
    const auto traces = get(s, "/groups/" + std::to_string(top) + "/traces", {{"limit", "5"}});
    REQUIRE(traces.status == 200);
    CHECK(traces.body.size() == std::min<std::size_t>(5, f.result.groups[0].size()));
    for (std::size_t i = 1; i < traces.body.size(); ++i)
        CHECK(traces.body[i - 1]["anomaly_score"].get<double>() >= traces.body[i]["anomaly_score"].get<double>());
    for (const auto& t : traces.body) CHECK(t["root_cause"] == top);

    const auto flows = get(s, "/groups/" + std::to_string(top) + "/flows");
    REQUIRE(flows.status == 200);
    const auto expected = link_flows(f.result.groups[0], f.result.verdicts,
                                     load_flows(f.flows, PipelineConfig{}).records, 10);
    REQUIRE(flows.body.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(flows.body[i]["line_index"] == expected[i].line_index);
        CHECK(flows.body[i]["dport"] == expected[i].dst_port);
    }

    CHECK(get(s, "/groups/999999/traces").status == 404);
    CHECK(get(s, "/groups/" + std::to_string(top) + "/bogus").status == 404);
}

TEST_CASE("single trace and model state") {
    auto s = make_service(fresh_journal("trace"));
    const auto& f = fixture();
    const auto& v = f.result.verdicts.at(3);
    const auto r = get(s, "/traces/3");
    REQUIRE(r.status == 200);
    CHECK(r.body["seq_no"] == 3);
    CHECK(r.body["root_cause"] == v.root_cause);
    CHECK(r.body["state_sequence"].size() == v.state_sequence.size());
    double sum = 0;
    for (const auto& [state, score] : r.body["per_state_scores"].items()) sum += score.get<double>();
    CHECK(sum == doctest::Approx(v.anomaly_score));
    CHECK(get(s, "/traces/" + std::to_string(f.result.verdicts.size())).status == 404);

    const auto bundle = load_bundle(f.bundle);
    const auto st = get(s, "/model/states/0");
    REQUIRE(st.status == 200);
    std::uint64_t out_total = 0;
    for (const auto& e : st.body["out"]) out_total += e["count"].get<std::uint64_t>();
    CHECK(out_total + st.body["final_count"].get<std::uint64_t>() == st.body["count"].get<std::uint64_t>());
    CHECK(st.body["out"].size() == bundle.machine.state(0).out.size());
    // Every incoming edge is some state's outgoing edge to this one.
    const auto target = st.body["out"][0]["target"].get<StateId>();
    const auto in = get(s, "/model/states/" + std::to_string(target)).body["in"];
    bool found = false;
    for (const auto& e : in) found = found || (e["source"] == 0 && e["symbol"] == st.body["out"][0]["symbol"]);
    CHECK(found);
    CHECK(get(s, "/model/states/" + std::to_string(bundle.machine.size())).status == 404);
}

TEST_CASE("verdicts, alerts and restart") {
    const auto journal = fresh_journal("verdicts");
    const auto& f = fixture();
    const auto top = f.result.groups[0].root_cause;
    const std::string verdict_path = "/groups/" + std::to_string(top) + "/verdict";
    {
        auto s = make_service(journal);
        const auto before = get(s, "/alerts").body;
        std::size_t from_top = 0;
        for (const auto& a : before) from_top += a["root_cause"] == top;
        CHECK(from_top == f.result.groups[0].size());

        CHECK(post(s, verdict_path, R"({"verdict":"false_positive","actor":"kim"})").status == 204);
        CHECK(s.verdict_of(top) == GroupVerdict::false_positive);
        const auto after = get(s, "/alerts").body;
        CHECK(after.size() == before.size() - from_top);
        for (const auto& a : after) CHECK(a["root_cause"] != top);
        CHECK(get(s, "/groups").body[0]["verdict"] == "false_positive");

        // Repeating the same verdict is not journaled again.
        CHECK(post(s, verdict_path, R"({"verdict":"false_positive"})").status == 204);
        CHECK(line_count(journal) == 1);

        CHECK(post(s, verdict_path, "not json").status == 400);
        CHECK(post(s, verdict_path, R"({"verdict":"unreviewed"})").status == 400);
        CHECK(post(s, verdict_path, R"({"state":"malicious"})").status == 400);
        CHECK(post(s, "/groups/999999/verdict", R"({"verdict":"malicious"})").status == 404);
        CHECK(post(s, "/groups", "{}").status == 404);
        CHECK(s.handle(ApiRequest{"DELETE", "/groups", {}, ""}).status == 405);
        CHECK(get(s, "/nothing/here").status == 404);
    }
    {
        auto s = make_service(journal);
        CHECK(s.verdict_of(top) == GroupVerdict::false_positive);
        for (const auto& a : get(s, "/alerts").body) CHECK(a["root_cause"] != top);
    }
    std::ifstream in(journal);
    std::string line;
    std::getline(in, line);
    const json entry = json::parse(line);
    CHECK(entry["group"] == top);
    CHECK(entry["verdict"] == "false_positive");
    CHECK(entry["actor"] == "kim");
    CHECK(entry["ts"].get<std::string>().size() > 0);
}

TEST_CASE("corrupt journal is rejected") {
    const auto journal = fresh_journal("corrupt");
    std::ofstream(journal) << "{\"ts\":\"x\"}\n";
    CHECK_THROWS_AS(make_service(journal), ParseError);
}

TEST_CASE("roc needs ground truth") {
    auto s = make_service(fresh_journal("roc"));
    const auto r = get(s, "/roc");
    REQUIRE(r.status == 200);
    std::vector<double> scores;
    std::vector<Label> labels;
    for (const auto& v : fixture().result.verdicts) {
        scores.push_back(v.anomaly_score);
        labels.push_back(v.label);
    }
    const auto known = known_only(scores, labels);
    CHECK(r.body["auc"].get<double>() == doctest::Approx(roc_auc(known.scores, known.labels).auc));

    auto data = load_triage_data(fixture().bundle, fixture().scores, fixture().flows);
    for (auto& v : data.verdicts) v.label = Label::unknown;
    TriageService unlabeled(std::move(data), fresh_journal("roc_unlabeled"));
    CHECK(get(unlabeled, "/roc").status == 404);
}

TEST_CASE("http front end") {
    auto s = make_service(fresh_journal("http"));
    TriageServer server(s);
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread worker([&] { server.run(); });

    httplib::Client client("127.0.0.1", port);
    const auto groups = client.Get("/groups");
    REQUIRE(groups);
    CHECK(groups->status == 200);
    const json body = json::parse(groups->body);
    REQUIRE_FALSE(body.empty());
    const auto top = body[0]["root_cause"].get<StateId>();

    const auto limited = client.Get("/groups/" + std::to_string(top) + "/traces?limit=2");
    REQUIRE(limited);
    CHECK(json::parse(limited->body).size() == std::min<std::size_t>(2, body[0]["size"].get<std::size_t>()));

    const auto posted = client.Post("/groups/" + std::to_string(top) + "/verdict", R"({"verdict":"malicious"})",
                                    "application/json");
    REQUIRE(posted);
    CHECK(posted->status == 204);
    CHECK(s.verdict_of(top) == GroupVerdict::malicious);

    const auto missing = client.Get("/traces/99999999");
    REQUIRE(missing);
    CHECK(missing->status == 404);

    TriageServer second(s);
    CHECK_THROWS_AS(second.bind("127.0.0.1", port), Error);

    server.stop();
    worker.join();
}
