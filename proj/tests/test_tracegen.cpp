#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "flowstate/error.hpp"
#include "flowstate/tracegen.hpp"
#include "support.hpp"

using namespace flowstate;
using testing::flow;

namespace {

FeatureEncoding table(Feature f, std::vector<double> values, std::vector<std::uint32_t> labels) {
    FeatureEncoding e;
    e.feature = f;
    e.values = std::move(values);
    e.labels = std::move(labels);
    return e;
}

EncodingSet fixed_encodings() {
    EncodingSet set;
    set.encodings[Feature::duration] = table(Feature::duration, {0.5, 2.0}, {0, 2});
    set.encodings[Feature::num_bytes] = table(Feature::num_bytes, {100, 500}, {4, 7});
    set.encodings[Feature::num_packets] = table(Feature::num_packets, {1, 9}, {1, 6});
    return set;
}

ConnectionEvents connection(const std::string& name, std::size_t n, Label label = Label::benign) {
    ConnectionEvents c;
    c.key = {name, "dst"};
    for (std::size_t i = 0; i < n; ++i) c.events.push_back({EventSymbol{name + std::to_string(i)}, 100 + i, label});
    return c;
}

}  // namespace

TEST_CASE("symbol joins labels in duration, protocol, bytes, packets order") {
    const auto ev = flows_to_events(std::vector{flow("a", "b", 1, 2.0, "TCP", 500, 1, Label::benign, 7)},
                                    fixed_encodings());
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].symbol.text == "2_TCP_7_1");
    CHECK(ev[0].line_index == 7);
}

TEST_CASE("single-feature symbol is the bare label") {
    EncodingSet set;
    set.features = {Feature::num_bytes};
    set.encodings[Feature::num_bytes] = table(Feature::num_bytes, {500}, {7});
    const auto ev = flows_to_events(std::vector{flow("a", "b", 1, 9.0, "UDP", 500, 3)}, set);
    CHECK(ev[0].symbol.text == "7");
}

TEST_CASE("empty flow list gives no events") { CHECK(flows_to_events({}, fixed_encodings()).empty()); }

TEST_CASE("missing encoding is a configuration error") {
    EncodingSet set;
    CHECK_THROWS_AS(flows_to_events(std::vector{flow("a", "b", 1, 1, "TCP", 1, 1)}, set), ConfigError);
}

TEST_CASE("protocol tokens never contain the separator") {
    CHECK(symbol_component("ipv6_icmp") == "ipv6-icmp");
    CHECK(symbol_component("TCP") == "TCP");
    CHECK(symbol_component("a b") == "a-b");
    CHECK(symbol_component("") == "-");
}

TEST_CASE("sliding windows") {
    SUBCASE("12 events, N=10 -> 3 traces") {
        const std::vector<ConnectionEvents> conns = {connection("x", 12)};
        const auto t = sliding_windows(conns, 10);
        REQUIRE(t.size() == 3);
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(t[k].symbols.front().text == "x" + std::to_string(k));
            CHECK(t[k].symbols.back().text == "x" + std::to_string(k + 9));
            CHECK(t[k].line_span.front() == 100 + k);
            CHECK(t[k].seq_no == k);
        }
    }
    SUBCASE("9 events, N=10 -> none") {
        const std::vector<ConnectionEvents> conns = {connection("x", 9)};
        CHECK(sliding_windows(conns, 10).empty());
    }
    SUBCASE("two connections of 10 -> seq_no 0 and 1") {
        const std::vector<ConnectionEvents> conns = {connection("x", 10), connection("y", 10)};
        const auto t = sliding_windows(conns, 10);
        REQUIRE(t.size() == 2);
        CHECK(t[0].connection.src_ip == "x");
        CHECK(t[1].connection.src_ip == "y");
        CHECK(t[1].seq_no == 1);
    }
    SUBCASE("count formula for arbitrary stride") {
        for (std::size_t stride = 1; stride <= 4; ++stride)
            for (std::size_t m = 0; m < 25; ++m) {
                const std::vector<ConnectionEvents> conns = {connection("x", m)};
                const std::size_t expected = m < 10 ? 0 : (m - 10) / stride + 1;
                CHECK(sliding_windows(conns, 10, stride).size() == expected);
            }
    }
    SUBCASE("bad parameters") {
        const std::vector<ConnectionEvents> conns = {connection("x", 3)};
        CHECK_THROWS_AS(sliding_windows(conns, 0), ConfigError);
        CHECK_THROWS_AS(sliding_windows(conns, 2, 0), ConfigError);
    }
}

TEST_CASE("trace labels") {
    std::vector<Event> w = {{{"a"}, 1, Label::benign}, {{"b"}, 2, Label::benign}};
    CHECK(trace_label(w) == Label::benign);
    w.push_back({{"c"}, 3, Label::unknown});
    CHECK(trace_label(w) == Label::unknown);
    w.push_back({{"d"}, 4, Label::malicious});
    CHECK(trace_label(w) == Label::malicious);
}

TEST_CASE("make_traces keeps windows inside connections") {
    std::mt19937_64 rng(4);
    std::vector<FlowRecord> flows;
    for (std::size_t i = 0; i < 400; ++i) {
        const int host = static_cast<int>(rng() % 5);
        flows.push_back(flow("h" + std::to_string(host), "srv", static_cast<std::int64_t>(rng() % 10000), 0.5, "TCP",
                             rng() % 2 ? 100 : 500, 1, Label::benign, i + 2));
    }
    const auto traces = make_traces(flows, fixed_encodings(), WindowParams{10, 1});

    std::map<std::size_t, ConnectionKey> owner;
    std::map<ConnectionKey, std::size_t> per_conn;
    for (const auto& f : flows) {
        owner[f.line_index] = connection_of(f);
        ++per_conn[connection_of(f)];
    }
    std::size_t expected = 0;
    for (const auto& [k, m] : per_conn) expected += m >= 10 ? m - 9 : 0;
    CHECK(traces.size() == expected);
    for (std::size_t i = 0; i < traces.size(); ++i) {
        CHECK(traces[i].seq_no == i);
        CHECK(traces[i].symbols.size() == 10);
        REQUIRE(traces[i].line_span.size() == 10);
        for (auto line : traces[i].line_span) CHECK(owner.at(line) == traces[i].connection);
    }
    std::ostringstream dump;
    write_traces(dump, std::span(traces).first(1));
    const std::string text = dump.str();
    CHECK(std::count(text.begin(), text.end(), ' ') == 9);
}
