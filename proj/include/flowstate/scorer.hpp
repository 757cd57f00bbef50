#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "flowstate/automaton.hpp"

namespace flowstate {

/// How a trace's score is assembled from its states' rolling scores.
enum class TraceAggregation {
    last_visit,  // each visited state's score at its last visit (default)
    max_visit,   // each visited state's highest score within the trace
    visit_sum,   // every position's score
};

/// Rolling test-time bookkeeping, one per scored stream.
struct ScoreLedger {
    std::vector<std::uint64_t> observed;     // test-time visits per state
    std::uint64_t uc = 0;                    // sum of distinct states per processed trace
    std::vector<std::uint64_t> train_count;  // training visits per state
    std::uint64_t train_total = 0;
    double smoothing = 1.0;  // pseudocount added to both observed and training counts

    /// Ledger whose training counts are the machine's arrival counts.
    static ScoreLedger for_machine(const Automaton& machine, double smoothing = 1.0);
    static ScoreLedger from_counts(std::vector<std::uint64_t> train_count, double smoothing = 1.0);

    std::size_t states() const { return train_count.size(); }
    /// Expected test-time visits of `state` once `uc_after` distinct-state
    /// visits have been processed.
    double expected(StateId state, std::uint64_t uc_after) const;
};

struct TraceVerdict {
    std::size_t seq_no = 0;
    double anomaly_score = 0.0;
    StateId root_cause = kRoot;
    std::size_t root_cause_position = 0;
    std::size_t root_cause_flow_line = 0;
    std::map<StateId, double> per_state_scores;
    std::vector<double> positional_scores;
    std::vector<StateId> state_sequence;
    std::vector<std::size_t> line_span;
    Label label = Label::unknown;
};

/// Position of the largest score; the earliest one wins ties.
std::size_t root_cause_position(std::span<const double> positional_scores);

/// Updates the ledger with one replayed trace and scores it. UC grows by
/// the trace's distinct-state count before any position is scored.
TraceVerdict score_trace(ScoreLedger& ledger, const ReplayResult& replayed, const Trace& trace,
                         TraceAggregation aggregation = TraceAggregation::last_visit);

/// Replays and scores traces in order against one ledger.
std::vector<TraceVerdict> score_stream(const Automaton& machine, ScoreLedger& ledger, std::span<const Trace> traces,
                                       TraceAggregation aggregation = TraceAggregation::last_visit);

enum class GroupVerdict { unreviewed, false_positive, malicious };

std::string_view to_string(GroupVerdict verdict);
GroupVerdict parse_group_verdict(std::string_view text);

struct AnomalyGroup {
    StateId root_cause = kRoot;
    std::vector<std::size_t> members;  // seq_nos, stream order
    GroupVerdict verdict = GroupVerdict::unreviewed;

    std::size_t size() const { return members.size(); }
};

/// Groups verdicts scoring at least `threshold` by root cause, largest
/// group first (smaller state id on ties).
std::vector<AnomalyGroup> group_anomalies(std::span<const TraceVerdict> verdicts, double threshold);

/// Flows at the root-cause position of the group's members, highest trace
/// score first, at most `k`. Throws InternalError if a line is missing.
std::vector<FlowRecord> link_flows(const AnomalyGroup& group, std::span<const TraceVerdict> verdicts,
                                   std::span<const FlowRecord> flows, std::size_t k = 10);

/// Nearest-rank percentile, q in [0, 1]. Empty input gives 0.
double percentile(std::vector<double> values, double q);

void write_verdicts_csv(std::ostream& out, std::span<const TraceVerdict> verdicts);
void write_groups_csv(std::ostream& out, std::span<const AnomalyGroup> groups);

}  // namespace flowstate
