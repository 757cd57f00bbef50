#include "flowstate/scorer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <unordered_map>

#include "flowstate/csv.hpp"
#include "flowstate/error.hpp"

namespace flowstate {

ScoreLedger ScoreLedger::for_machine(const Automaton& machine, double smoothing) {
    std::vector<std::uint64_t> counts(machine.size());
    for (StateId q = 0; q < machine.size(); ++q) counts[q] = machine.arrivals(q);
    return from_counts(std::move(counts), smoothing);
}

ScoreLedger ScoreLedger::from_counts(std::vector<std::uint64_t> train_count, double smoothing) {
    if (!(smoothing >= 0.0)) throw ConfigError("smoothing must be >= 0");
    ScoreLedger ledger;
    ledger.observed.assign(train_count.size(), 0);
    for (auto c : train_count) ledger.train_total += c;
    ledger.train_count = std::move(train_count);
    ledger.smoothing = smoothing;
    return ledger;
}

double ScoreLedger::expected(StateId state, std::uint64_t uc_after) const {
    const double ratio = (static_cast<double>(train_count[state]) + smoothing) /
                         (static_cast<double>(train_total) + smoothing * static_cast<double>(states()));
    return ratio * static_cast<double>(std::max<std::uint64_t>(uc_after, 1));
}

std::size_t root_cause_position(std::span<const double> positional_scores) {
    if (positional_scores.empty()) throw InternalError("root cause of an empty trace");
    std::size_t best = 0;
    for (std::size_t i = 1; i < positional_scores.size(); ++i)
        if (positional_scores[i] > positional_scores[best]) best = i;
    return best;
}

TraceVerdict score_trace(ScoreLedger& ledger, const ReplayResult& replayed, const Trace& trace,
                         TraceAggregation aggregation) {
    const auto& seq = replayed.state_sequence;
    if (seq.size() != trace.symbols.size() || trace.line_span.size() != seq.size())
        throw InternalError("replay length " + std::to_string(seq.size()) + " does not match trace length " +
                            std::to_string(trace.symbols.size()));
    if (seq.empty()) throw InternalError("cannot score an empty trace");

    TraceVerdict v;
    v.seq_no = trace.seq_no;
    v.state_sequence = seq;
    v.line_span = trace.line_span;
    v.label = trace.label;

    ledger.uc += replayed.visited.size();
    const std::uint64_t uc_after = ledger.uc;

    v.positional_scores.reserve(seq.size());
    for (StateId q : seq) {
        if (q >= ledger.states()) throw InternalError("state " + std::to_string(q) + " outside the ledger");
        const double observed = static_cast<double>(++ledger.observed[q]) + ledger.smoothing;
        const double score = std::log(observed / ledger.expected(q, uc_after));
        v.positional_scores.push_back(score);
        switch (aggregation) {
            case TraceAggregation::last_visit: v.per_state_scores[q] = score; break;
            case TraceAggregation::max_visit: {
                auto [it, inserted] = v.per_state_scores.try_emplace(q, score);
                if (!inserted) it->second = std::max(it->second, score);
                break;
            }
            case TraceAggregation::visit_sum: v.per_state_scores[q] += score; break;
        }
    }
    for (const auto& [q, s] : v.per_state_scores) v.anomaly_score += s;
    v.root_cause_position = root_cause_position(v.positional_scores);
    v.root_cause = seq[v.root_cause_position];
    v.root_cause_flow_line = trace.line_span[v.root_cause_position];
    return v;
}

std::vector<TraceVerdict> score_stream(const Automaton& machine, ScoreLedger& ledger, std::span<const Trace> traces,
                                       TraceAggregation aggregation) {
    if (ledger.states() != machine.size()) throw InternalError("ledger does not belong to this machine");
    std::vector<TraceVerdict> verdicts;
    verdicts.reserve(traces.size());
    for (const auto& t : traces) verdicts.push_back(score_trace(ledger, replay(machine, t), t, aggregation));
    return verdicts;
}

std::string_view to_string(GroupVerdict verdict) {
    switch (verdict) {
        case GroupVerdict::unreviewed: return "unreviewed";
        case GroupVerdict::false_positive: return "false_positive";
        case GroupVerdict::malicious: return "malicious";
    }
    return "unreviewed";
}

GroupVerdict parse_group_verdict(std::string_view text) {
    if (text == "unreviewed") return GroupVerdict::unreviewed;
    if (text == "false_positive") return GroupVerdict::false_positive;
    if (text == "malicious") return GroupVerdict::malicious;
    throw ParseError("unknown verdict '" + std::string(text) + "'");
}

std::vector<AnomalyGroup> group_anomalies(std::span<const TraceVerdict> verdicts, double threshold) {
    std::map<StateId, AnomalyGroup> by_state;
    for (const auto& v : verdicts) {
        if (!(v.anomaly_score >= threshold)) continue;
        auto& g = by_state[v.root_cause];
        g.root_cause = v.root_cause;
        g.members.push_back(v.seq_no);
    }
    std::vector<AnomalyGroup> groups;
    groups.reserve(by_state.size());
    for (auto& [q, g] : by_state) groups.push_back(std::move(g));
    std::stable_sort(groups.begin(), groups.end(),
                     [](const AnomalyGroup& a, const AnomalyGroup& b) { return a.size() > b.size(); });
    return groups;
}

std::vector<FlowRecord> link_flows(const AnomalyGroup& group, std::span<const TraceVerdict> verdicts,
                                   std::span<const FlowRecord> flows, std::size_t k) {
    std::unordered_map<std::size_t, const TraceVerdict*> by_seq;
    for (const auto& v : verdicts) by_seq.emplace(v.seq_no, &v);
    std::unordered_map<std::size_t, const FlowRecord*> by_line;
    for (const auto& f : flows) by_line.emplace(f.line_index, &f);

    std::vector<const TraceVerdict*> members;
    for (auto seq : group.members) {
        auto it = by_seq.find(seq);
        if (it == by_seq.end()) throw InternalError("group member " + std::to_string(seq) + " has no verdict");
        members.push_back(it->second);
    }
    std::stable_sort(members.begin(), members.end(), [](const TraceVerdict* a, const TraceVerdict* b) {
        return a->anomaly_score > b->anomaly_score;
    });
    if (members.size() > k) members.resize(k);

    std::vector<FlowRecord> linked;
    linked.reserve(members.size());
    for (const auto* v : members) {
        auto it = by_line.find(v->root_cause_flow_line);
        if (it == by_line.end())
            throw InternalError("trace " + std::to_string(v->seq_no) + " links to missing line " +
                                std::to_string(v->root_cause_flow_line));
        linked.push_back(*it->second);
    }
    return linked;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return values[rank - 1];
}

void write_verdicts_csv(std::ostream& out, std::span<const TraceVerdict> verdicts) {
    csv::write_row(out, {"seq_no", "score", "root_cause", "flow_line"});
    char buf[32];
    for (const auto& v : verdicts) {
        auto res = std::to_chars(buf, buf + sizeof buf, v.anomaly_score);
        csv::write_row(out, {std::to_string(v.seq_no), std::string(buf, res.ptr), std::to_string(v.root_cause),
                             std::to_string(v.root_cause_flow_line)});
    }
}

void write_groups_csv(std::ostream& out, std::span<const AnomalyGroup> groups) {
    csv::write_row(out, {"root_cause", "size", "verdict"});
    for (const auto& g : groups)
        csv::write_row(out, {std::to_string(g.root_cause), std::to_string(g.size()), std::string(to_string(g.verdict))});
}

}  // namespace flowstate
