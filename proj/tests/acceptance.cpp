// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "flowstate/attacks.hpp"
#include "flowstate/bundle.hpp"
#include "flowstate/encoder.hpp"
#include "flowstate/error.hpp"
#include "flowstate/eval.hpp"
#include "flowstate/pipeline.hpp"
#include "flowstate/scorer.hpp"
#include "flowstate/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace flowstate;

namespace {

/// Collects the first few failures of a criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (ok) return;
        if (failures_++ < 3) detail_ << (detail_.tellp() > 0 ? "; " : "") << what;
    }
    bool ok() const { return failures_ == 0; }
    std::string detail() const {
        std::string d = detail_.str();
        if (failures_ > 3) d += "; +" + std::to_string(failures_ - 3) + " more";
        return d;
    }
    std::string note;

private:
    std::size_t failures_ = 0;
    std::ostringstream detail_;
};

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

std::vector<Trace> two_state_traces(std::uint64_t seed, std::size_t count) {
    const auto gen = synthetic::two_state_cycle();
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::size_t>> seqs;
    for (std::size_t i = 0; i < count; ++i) seqs.push_back(gen.sample(rng, 10, i % 2));
    return synthetic::traces_from_symbols(seqs);
}

void gate(Check& c) {
    const auto start = std::chrono::steady_clock::now();
    double detector = 0.0, mc = 0.0;
    const int seeds = 10;
    for (int s = 0; s < seeds; ++s) {
        synthetic::Params p;
        p.seed = static_cast<std::uint64_t>(s);
        const auto ds = synthetic::frequency_anomaly(synthetic::five_state_machine(), p);
        PipelineConfig config;
        config.models = {"flowstate", "markov"};
        config.attacks.clear();
        config.repetitions = 1;
        config.seed = static_cast<std::uint64_t>(s);
        const auto report = run_experiment(ds.train, ds.test, config);
        detector += report.mean_auc("flowstate", "clean");
        mc += report.mean_auc("markov", "clean");
    }
    detector /= seeds;
    mc /= seeds;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    c.expect(detector >= 0.90, "detector mean AUC below 0.90");
    c.expect(mc <= 0.65, "markov mean AUC above 0.65");
    c.expect(secs <= 60.0, "took longer than 60 s");
    c.note = "detector " + fmt(detector) + ", markov " + fmt(mc) + ", " + fmt(secs) + " s";
}

void auc_oracle(Check& c) {
    std::mt19937_64 rng(20);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 2 + rng() % 999;
        const std::uint64_t distinct = 1 + rng() % 50;
        std::vector<double> scores;
        std::vector<Label> labels;
        for (std::size_t k = 0; k < n; ++k) {
            scores.push_back(static_cast<double>(rng() % distinct) * 0.37);
            labels.push_back(k == 0 ? Label::malicious : k == 1 ? Label::benign
                                                                 : (rng() % 2 ? Label::malicious : Label::benign));
        }
        const double diff = std::abs(roc_auc(scores, labels).auc - oracle::pair_count_auc(scores, labels));
        worst = std::max(worst, diff);
        c.expect(diff <= 1e-9, "instance " + std::to_string(i) + " differs by " + fmt(diff));
    }
    c.note = "max difference " + fmt(worst);
}

void root_cause(Check& c) {
    const std::vector<StateId> q = {1, 4, 7, 8, 4, 4, 4};
    const std::vector<double> a = {0.19, 0.20, 0.18, 0.16, 0.50, 0.60, 0.65};
    const StateId rc = q[root_cause_position(a)];
    c.expect(rc == 4, "root cause " + std::to_string(rc));
}

void score_arithmetic(Check& c) {
    auto walk = [](std::vector<StateId> seq) {
        ReplayResult r;
        r.state_sequence = seq;
        std::set<StateId> v(seq.begin(), seq.end());
        r.visited.assign(v.begin(), v.end());
        return r;
    };
    auto blank = [](std::size_t n) { return testing::trace_of(std::vector<std::string>(n, "s")); };
    {
        auto ledger = ScoreLedger::from_counts({1, 1}, 0.0);
        ledger.uc = 9;
        const double s = score_trace(ledger, walk({0, 0, 0, 0, 0}), blank(5)).anomaly_score;
        c.expect(std::abs(s) <= 1e-12, "expectation case gave " + fmt(s));
    }
    {
        auto ledger = ScoreLedger::from_counts({1, 1}, 0.0);
        ledger.uc = 9;
        ledger.observed[0] = 5;
        const double s = score_trace(ledger, walk({0, 0, 0, 0, 0}), blank(5)).anomaly_score;
        c.expect(std::abs(s - std::log(2.0)) <= 1e-12, "doubling case gave " + fmt(s));
    }
    {
        std::vector<std::uint64_t> counts(50, 20);
        counts[0] = 0;
        for (std::size_t i = 1; i <= 20; ++i) counts[i] = 21;  // total 1000
        auto ledger = ScoreLedger::from_counts(counts, 1.0);
        ledger.uc = 99;
        const double s = score_trace(ledger, walk({0}), blank(1)).anomaly_score;
        c.expect(ledger.train_total == 1000, "training total is not 1000");
        c.expect(std::abs(s - std::log(21.0)) <= 1e-12, "unseen case gave " + fmt(s));
    }
}

void pta_exactness(Check& c) {
    std::mt19937_64 rng(500);
    for (int i = 0; i < 500; ++i) {
        const auto traces = testing::random_traces(rng, 1 + rng() % 60, 1 + rng() % 10, 1 + rng() % 5);
        const auto pta = build_pta(traces);
        const auto why = oracle::check_prefix_tree(pta, traces);
        c.expect(why.empty(), "set " + std::to_string(i) + ": " + why);
        for (const auto& t : traces)
            c.expect(replay(pta, t).reset_positions.empty(), "set " + std::to_string(i) + ": reset on a training trace");
    }
}

void merge_soundness(Check& c) {
    std::size_t largest = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto traces = two_state_traces(seed, 200);
        const auto pta = build_pta(traces);
        const auto merged = merge_states(pta, MergeParams{});
        largest = std::max(largest, merged.size());
        c.expect(merged.size() <= 6, "seed " + std::to_string(seed) + ": " + std::to_string(merged.size()) + " states");
        c.expect(audit(merged).empty(), "seed " + std::to_string(seed) + ": " + audit(merged));
        c.expect(merge_states(pta, MergeParams{}) == merged, "merge is not repeatable");
        for (const auto& t : traces) c.expect(replay(merged, t).reset_positions.empty(), "reset on a training trace");

        const auto kept = merge_states(pta, MergeParams{0.999, pta.state(kRoot).count + 1});
        c.expect(kept.states() == pta.states() && oracle::check_prefix_tree(kept, traces).empty(),
                 "reject-all setting did not reproduce the prefix tree");
    }
    c.note = "at most " + std::to_string(largest) +
             " states; reject-all = alpha 0.999 with min_count above the root count";
}

void encoder(Check& c) {
    std::mt19937_64 rng(95);
    auto random_groups = [&](std::size_t conns, std::size_t max_len, std::uint64_t vocab) {
        std::vector<FlowRecord> flows;
        std::int64_t ts = 0;
        for (std::size_t k = 0; k < conns; ++k) {
            const std::size_t n = rng() % (max_len + 1);
            for (std::size_t i = 0; i < n; ++i)
                flows.push_back(testing::flow("h" + std::to_string(k), "d", ts++, 0.5, "TCP", 40 * (1 + rng() % vocab),
                                              1, Label::benign, flows.size() + 2));
        }
        return group_by_connection(flows);
    };

    for (int i = 0; i < 5; ++i) {
        const auto groups = random_groups(20, 40, 30);
        EncoderParams p;
        p.kmeans.clusters = 6;
        p.kmeans.restarts = 8;
        p.kmeans.seed = static_cast<std::uint64_t>(i);
        const auto a = fit_feature(groups, Feature::num_bytes, p);
        const auto b = fit_feature(groups, Feature::num_bytes, p);
        c.expect(a == b, "fixed seed gave different encodings");

        const auto matrix = build_context_matrix(groups, Feature::num_bytes, p.bins);
        std::vector<std::vector<double>> points;
        for (const auto& v : matrix.vectors) points.push_back(v.to_point());
        auto params = p.kmeans;
        params.clusters = std::min(params.clusters, std::set(points.begin(), points.end()).size());
        const auto km = kmeans(points, params);
        for (double s : km.restart_silhouettes)
            c.expect(km.silhouette >= s, "selected silhouette below another restart");
        c.expect(km.restart_silhouettes.at(km.best_restart) == km.silhouette, "best restart mismatch");
    }

    for (int i = 0; i < 100; ++i) {
        const auto groups = random_groups(1 + rng() % 8, 30, 12);
        std::uint64_t pairs = 0;
        for (const auto& g : groups) pairs += g.flows.size() > 1 ? g.flows.size() - 1 : 0;
        if (pairs == 0) continue;
        const auto m = build_context_matrix(groups, Feature::num_bytes, 1 + rng() % 10);
        std::uint64_t prev = 0, next = 0;
        for (const auto& v : m.vectors) {
            prev += std::accumulate(v.prev_bins.begin(), v.prev_bins.end(), std::uint64_t{0}) + v.prev_self;
            next += std::accumulate(v.next_bins.begin(), v.next_bins.end(), std::uint64_t{0}) + v.next_self;
        }
        c.expect(prev == pairs && next == pairs, "grouping " + std::to_string(i) + " loses context counts");
    }
}

void attacks(Check& c) {
    const std::vector<FeatureTuple> vocab = {{0.5, "TCP", 120, 2}, {1.0, "TCP", 900, 7}, {0.1, "UDP", 80, 1},
                                             {3.0, "TCP", 4000, 30}, {0.2, "ICMP", 64, 1}};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        std::discrete_distribution<std::size_t> pick({40, 25, 20, 10, 5});
        std::vector<FlowRecord> flows;
        for (std::size_t k = 0; k < 8; ++k)
            for (std::size_t i = 0; i < 100; ++i) {
                auto f = testing::flow("b" + std::to_string(k), "s", static_cast<std::int64_t>(k * 1000 + i), 0, "", 0, 0);
                assign_tuple(f, vocab[pick(rng)]);
                flows.push_back(f);
            }
        for (std::size_t i = 0; i < 45; ++i) {
            FeatureTuple t{static_cast<double>(rng() % 100) / 3.0, i % 5 ? "TCP" : "GRE", rng() % 9000, rng() % 90};
            auto f = testing::flow("m", "s", static_cast<std::int64_t>(500 + i * 3), 0, "", 0, 0, Label::malicious);
            assign_tuple(f, t);
            flows.push_back(f);
        }
        std::shuffle(flows.begin(), flows.end(), rng);
        for (std::size_t i = 0; i < flows.size(); ++i) flows[i].line_index = i + 2;

        std::vector<FlowRecord> pool;
        std::set<double> durations;
        std::set<std::uint64_t> bytes, packets;
        std::set<std::string> protocols;
        std::map<FeatureTuple, std::uint64_t> counts;
        for (const auto& f : flows)
            if (f.label == Label::benign) {
                pool.push_back(f);
                durations.insert(f.duration);
                bytes.insert(f.num_bytes);
                packets.insert(f.num_packets);
                protocols.insert(f.protocol);
                ++counts[tuple_of(f)];
            }

        const std::string at = "seed " + std::to_string(seed) + ": ";
        for (auto kind : all_attack_kinds()) {
            const auto out = apply_attack(flows, AttackSpec{kind, seed, 100, 10});
            c.expect(out.size() == flows.size(), at + "flow count changed");
            for (std::size_t i = 0; i < out.size() && i < flows.size(); ++i) {
                c.expect(out[i].label == flows[i].label, at + "label changed");
                if (flows[i].label != Label::malicious) continue;
                const auto t = tuple_of(out[i]);
                if (kind == AttackKind::padding)
                    c.expect(durations.contains(t.duration) && bytes.contains(t.num_bytes) &&
                                 packets.contains(t.num_packets) && protocols.contains(t.protocol),
                             at + "padding left the pool values");
                if (kind == AttackKind::frequency_replacement)
                    c.expect(counts[t] >= 100, at + "frequency output below pool count 100");
            }
        }

        const auto windows = benign_windows(pool, 10);
        const auto plan = plan_window_replacement(45, windows.size(), 10, seed);
        c.expect(std::set(plan.begin(), plan.end()).size() == plan.size(), at + "window reused");
        std::vector<FlowRecord> malicious;
        for (const auto& f : flows)
            if (f.label == Label::malicious) malicious.push_back(f);
        const auto replaced = window_replacement_attack(malicious, pool, 10, seed);
        for (std::size_t i = 0; i < replaced.size(); ++i)
            c.expect(tuple_of(replaced[i]) == windows[plan[i / 10]].tuples[i % 10], at + "window block mismatch");
    }
}

void uc_bookkeeping(Check& c) {
    const auto gen = synthetic::five_state_machine();
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        std::mt19937_64 rng(seed);
        std::vector<std::vector<std::size_t>> train, test;
        for (int i = 0; i < 1000; ++i) train.push_back(gen.sample(rng, 10, rng() % 5));
        // Half the stream comes from elsewhere so replays also reset.
        for (int i = 0; i < 1000; ++i) {
            auto s = gen.sample(rng, 10, rng() % 5);
            if (i % 2) std::reverse(s.begin(), s.end());
            test.push_back(std::move(s));
        }
        const auto machine = merge_states(build_pta(synthetic::traces_from_symbols(train)), MergeParams{});
        auto ledger = ScoreLedger::for_machine(machine);
        std::uint64_t expected = 0;
        for (const auto& t : synthetic::traces_from_symbols(test)) {
            const auto r = replay(machine, t);
            score_trace(ledger, r, t);
            expected += std::set<StateId>(r.state_sequence.begin(), r.state_sequence.end()).size();
            c.expect(ledger.uc == expected, "seed " + std::to_string(seed) + ": uc " + std::to_string(ledger.uc) +
                                                " != " + std::to_string(expected));
        }
    }
}

void bundle_round_trip(Check& c) {
    std::mt19937_64 rng(50);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        ModelBundle b;
        const auto traces = testing::random_traces(rng, 20 + rng() % 200, 1 + rng() % 10, 2 + rng() % 5);
        b.machine = merge_states(build_pta(traces), MergeParams{0.01 + 0.9 * unit(rng), rng() % 20});
        for (Feature f : {Feature::duration, Feature::num_bytes, Feature::num_packets}) {
            FeatureEncoding e;
            e.feature = f;
            e.bins = 1 + rng() % 10;
            e.clusters = 1 + rng() % 6;
            double v = unit(rng);
            for (std::size_t k = 0, n = 1 + rng() % 30; k < n; ++k) {
                e.values.push_back(v);
                e.labels.push_back(static_cast<std::uint32_t>(rng() % e.clusters));
                v += unit(rng) * 1e3 / 7.0;
            }
            for (std::size_t k = 0; k + 1 < e.bins; ++k) {
                e.prev_edges.push_back(k * 1.1 + unit(rng));
                e.next_edges.push_back(k * 1.3 + unit(rng));
            }
            e.silhouette = unit(rng) * 2 - 1;
            e.seed = rng();
            b.encodings.encodings[f] = e;
        }
        b.threshold = unit(rng) * 10;
        PipelineConfig config;
        config.seed = rng();
        b.config_json = config.to_json().dump();

        const std::string first = bundle_to_string(b);
        const auto loaded = load_bundle_from_string(first);
        c.expect(loaded == b, "model " + std::to_string(i) + " changed on load");
        c.expect(bundle_to_string(loaded) == first, "model " + std::to_string(i) + " not byte-identical");
    }
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
        {"synthetic effectiveness gate", gate},
        {"AUC matches pair counting", auc_oracle},
        {"root-cause worked example", root_cause},
        {"score arithmetic", score_arithmetic},
        {"prefix tree exactness", pta_exactness},
        {"merge soundness", merge_soundness},
        {"encoder determinism and selection", encoder},
        {"attack properties", attacks},
        {"UC bookkeeping", uc_bookkeeping},
        {"model round trip", bundle_round_trip},
    };
    bool all = true;
    for (const auto& [name, run] : criteria) {
        Check c;
        try {
            run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        all = all && c.ok();
        std::cout << (c.ok() ? "PASS " : "FAIL ") << name;
        std::string detail = c.ok() ? c.note : c.detail() + (c.note.empty() ? "" : " (" + c.note + ")");
        if (!detail.empty()) std::cout << ": " << detail;
        std::cout << std::endl;
    }
    return all ? 0 : 1;
}
