#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowstate/tracegen.hpp"

namespace flowstate {

using StateId = std::uint32_t;
using SymbolId = std::uint32_t;

inline constexpr StateId kRoot = 0;

struct Transition {
    StateId target = 0;
    std::uint64_t count = 0;

    bool operator==(const Transition&) const = default;
};

struct State {
    /// Training traces passing through this state: arrivals over incoming
    /// transitions, plus trace starts for the root.
    std::uint64_t count = 0;
    /// Training traces ending here. Marks F; not used for scoring.
    std::uint64_t final_count = 0;
    std::map<SymbolId, Transition> out;

    bool operator==(const State&) const = default;
};

struct MergeParams {
    /// Significance of the Hoeffding compatibility test, in (0, 1).
    double alpha = 0.05;
    /// States seen by fewer training traces than this are never merged.
    std::uint64_t min_count = 0;

    bool operator==(const MergeParams&) const = default;
};

/// Deterministic state machine with training counts. Symbols are interned
/// in lexicographic order; state 0 is the root.
class Automaton {
public:
    Automaton();

    /// Validates and assembles a machine (used by deserialization).
    static Automaton from_parts(std::vector<std::string> alphabet, std::vector<State> states,
                                std::uint64_t trace_starts, std::optional<MergeParams> merge);

    std::size_t size() const { return states_.size(); }
    const std::vector<std::string>& alphabet() const { return alphabet_; }
    const std::vector<State>& states() const { return states_; }
    const State& state(StateId id) const { return states_.at(id); }
    std::uint64_t trace_starts() const { return trace_starts_; }
    /// Parameters used for merging; empty for an unmerged prefix tree.
    const std::optional<MergeParams>& merge_params() const { return merge_; }

    std::optional<SymbolId> symbol_id(std::string_view symbol) const;
    std::optional<StateId> successor(StateId from, SymbolId symbol) const;
    std::optional<StateId> successor(StateId from, std::string_view symbol) const;

    /// How often the state was entered by a transition during training.
    std::uint64_t arrivals(StateId id) const;
    std::uint64_t total_arrivals() const;
    std::size_t transition_count() const;

    bool operator==(const Automaton& other) const {
        return alphabet_ == other.alphabet_ && states_ == other.states_ && trace_starts_ == other.trace_starts_ &&
               merge_ == other.merge_;
    }

private:
    friend Automaton build_pta(std::span<const Trace> traces);
    friend Automaton merge_states(const Automaton& pta, const MergeParams& params);

    void index_alphabet();

    std::vector<std::string> alphabet_;
    std::unordered_map<std::string, SymbolId> symbol_index_;
    std::vector<State> states_;
    std::uint64_t trace_starts_ = 0;
    std::optional<MergeParams> merge_;
};

/// Prefix tree over the training traces; shared prefixes share states.
/// States are numbered breadth-first, children in symbol order.
Automaton build_pta(std::span<const Trace> traces);

/// Red-blue state merging with an ALERGIA-style Hoeffding test on the
/// outgoing symbol frequencies. Throws ConfigError for alpha outside (0,1).
Automaton merge_states(const Automaton& pta, const MergeParams& params);

/// Two empirical frequencies differ significantly at level alpha.
bool hoeffding_different(std::uint64_t count_a, std::uint64_t total_a, std::uint64_t count_b,
                         std::uint64_t total_b, double alpha);

struct ReplayResult {
    std::vector<StateId> state_sequence;  // one state per consumed symbol
    std::vector<std::size_t> reset_positions;
    std::vector<StateId> visited;  // distinct states, ascending
};

/// Walks the trace, jumping back to the root when no transition exists.
/// A symbol unknown even at the root counts as a visit to the root.
ReplayResult replay(const Automaton& machine, std::span<const EventSymbol> symbols);
inline ReplayResult replay(const Automaton& machine, const Trace& trace) { return replay(machine, trace.symbols); }

/// Structural audit: determinism, reachability, count consistency.
/// Returns a description of the first violation, empty when sound.
std::string audit(const Automaton& machine);

}  // namespace flowstate
