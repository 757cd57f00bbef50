#include "flowstate/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "flowstate/error.hpp"

namespace flowstate::synthetic {

std::vector<std::size_t> SourceMachine::sample(std::mt19937_64& rng, std::size_t length, std::size_t start) const {
    std::vector<std::size_t> out;
    out.reserve(length);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t cur = start;
    for (std::size_t i = 0; i < length; ++i) {
        const auto& edges = states.at(cur);
        double u = unit(rng);
        const Edge* chosen = &edges.back();
        for (const auto& e : edges) {
            if (u < e.probability) {
                chosen = &e;
                break;
            }
            u -= e.probability;
        }
        out.push_back(chosen->symbol);
        cur = chosen->next;
    }
    return out;
}

std::vector<double> SourceMachine::stationary() const {
    std::vector<double> pi(states.size(), 1.0 / static_cast<double>(states.size()));
    for (int iter = 0; iter < 10000; ++iter) {
        std::vector<double> next(states.size(), 0.0);
        for (std::size_t s = 0; s < states.size(); ++s)
            for (const auto& e : states[s]) next[e.next] += pi[s] * e.probability;
        double diff = 0.0;
        for (std::size_t s = 0; s < states.size(); ++s) diff += std::abs(next[s] - pi[s]);
        pi = std::move(next);
        if (diff < 1e-15) break;
    }
    return pi;
}

std::vector<double> SourceMachine::symbol_frequencies() const {
    const auto pi = stationary();
    std::vector<double> freq(symbols, 0.0);
    for (std::size_t s = 0; s < states.size(); ++s)
        for (const auto& e : states[s]) freq[e.symbol] += pi[s] * e.probability;
    return freq;
}

SourceMachine five_state_machine() {
    // Symbol 0 is emitted 40% of the time everywhere, but each repetition
    // moves one state deeper; the last state loops.
    SourceMachine m;
    m.symbols = 8;
    m.states = {
        {{0, 0.40, 1}, {1, 0.30, 0}, {2, 0.30, 0}},
        {{0, 0.40, 2}, {3, 0.30, 0}, {4, 0.30, 0}},
        {{0, 0.40, 3}, {5, 0.60, 0}},
        {{0, 0.40, 4}, {6, 0.60, 0}},
        {{0, 0.40, 4}, {7, 0.60, 0}},
    };
    return m;
}

SourceMachine two_state_cycle() {
    SourceMachine m;
    m.symbols = 3;
    m.states = {
        {{0, 0.9, 1}, {2, 0.1, 0}},
        {{1, 0.9, 0}, {2, 0.1, 1}},
    };
    return m;
}

FeatureTuple symbol_features(std::size_t symbol) {
    FeatureTuple t;
    const double k = static_cast<double>(symbol + 1);
    t.duration = 0.25 * k * k;
    t.protocol = symbol % 3 == 2 ? "UDP" : "TCP";
    t.num_bytes = 64 + 211 * (symbol + 1) * (symbol + 1);
    t.num_packets = 1 + 3 * symbol;
    return t;
}

namespace {


void emit_connection(std::vector<FlowRecord>& out, std::mt19937_64& rng, const std::vector<std::size_t>& symbols,
                     const std::string& src, const std::string& dst, std::uint16_t dport, std::int64_t start_us,
                     double mean_gap_s, Label label) {
    std::exponential_distribution<double> gap(1.0 / mean_gap_s);
    std::uniform_int_distribution<int> sport(1024, 65535);
    double t = static_cast<double>(start_us);
    for (auto s : symbols) {
        FlowRecord f;
        f.src_ip = src;
        f.dst_ip = dst;
        f.src_port = static_cast<std::uint16_t>(sport(rng));
        f.dst_port = dport;
        f.timestamp_us = static_cast<std::int64_t>(t);
        assign_tuple(f, symbol_features(s));
        f.label = label;
        out.push_back(std::move(f));
        t += 1e6 * gap(rng);
    }
}

std::vector<FlowRecord> finish(std::vector<FlowRecord> flows) {
    flows = sort_flows(std::move(flows));
    for (std::size_t i = 0; i < flows.size(); ++i) flows[i].line_index = i + 2;
    return flows;
}

std::string host(const char* prefix, std::size_t i) {
    return std::string(prefix) + std::to_string(i / 250) + "." + std::to_string(i % 250 + 1);
}

}  // namespace

Dataset frequency_anomaly(const SourceMachine& machine, const Params& params) {
    if (params.flows_per_connection < 1 || params.attack_flows_per_connection < 1)
        throw ConfigError("synthetic: connection length must be >= 1");
    std::mt19937_64 rng(params.seed);
    const auto pi = machine.stationary();
    std::discrete_distribution<std::size_t> start_state(pi.begin(), pi.end());
    const std::uint16_t benign_ports[] = {80, 443, 53, 123, 8080};

    const double benign_gap = 1.0;  // seconds between flows of one connection
    const double span_s = static_cast<double>(params.flows_per_connection) * benign_gap;

    auto benign = [&](std::size_t total, std::size_t id_base, std::int64_t t0) {
        std::vector<FlowRecord> flows;
        std::uniform_real_distribution<double> offset(0.0, span_s);
        for (std::size_t done = 0, c = 0; done < total; ++c) {
            const std::size_t n = std::min(params.flows_per_connection, total - done);
            const auto symbols = machine.sample(rng, n, start_state(rng));
            emit_connection(flows, rng, symbols, host("10.0.", id_base + c), host("172.16.", (id_base + c) % 97),
                            benign_ports[(id_base + c) % 5], t0 + static_cast<std::int64_t>(1e6 * offset(rng)),
                            benign_gap, Label::benign);
            done += n;
        }
        return flows;
    };

    Dataset ds;
    const auto freq = machine.symbol_frequencies();
    ds.attack_symbol = params.attack_symbol.value_or(
        static_cast<std::size_t>(std::max_element(freq.begin(), freq.end()) - freq.begin()));
    if (ds.attack_symbol >= machine.symbols) throw ConfigError("synthetic: attack symbol out of range");

    ds.train = finish(benign(params.train_flows, 0, 0));

    const std::int64_t test_t0 = static_cast<std::int64_t>(4e6 * span_s);
    auto test = benign(params.test_benign_flows, 5000, test_t0);
    {
        // A benign connection emits the attack symbol every 1/freq flows on
        // average; the attack emits it rate_factor times as often.
        const double attack_gap = benign_gap / (params.rate_factor * freq[ds.attack_symbol]);
        std::uniform_real_distribution<double> offset(0.0, span_s);
        for (std::size_t done = 0, c = 0; done < params.attack_flows; ++c) {
            const std::size_t n = std::min(params.attack_flows_per_connection, params.attack_flows - done);
            const std::vector<std::size_t> symbols(n, ds.attack_symbol);
            emit_connection(test, rng, symbols, host("10.66.", c), host("203.0.", c), params.attack_port,
                            test_t0 + static_cast<std::int64_t>(1e6 * offset(rng)), attack_gap, Label::malicious);
            done += n;
        }
    }
    ds.test = finish(std::move(test));
    return ds;
}

std::vector<Trace> traces_from_symbols(const std::vector<std::vector<std::size_t>>& sequences,
                                       const std::string& prefix) {
    std::vector<Trace> traces;
    for (const auto& seq : sequences) {
        Trace t;
        t.seq_no = traces.size();
        t.connection = {"synthetic", std::to_string(t.seq_no)};
        for (std::size_t i = 0; i < seq.size(); ++i) {
            t.symbols.push_back(EventSymbol{prefix + std::to_string(seq[i])});
            t.line_span.push_back(i + 2);
        }
        traces.push_back(std::move(t));
    }
    return traces;
}

}  // namespace flowstate::synthetic
