#pragma once

// Independent reference computations the library results are checked against.

#include <cmath>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "flowstate/automaton.hpp"
#include "flowstate/flow.hpp"

namespace oracle {

/// Prefix -> number of traces having it, including the empty prefix.
inline std::map<std::vector<std::string>, std::uint64_t> prefix_counts(std::span<const flowstate::Trace> traces) {
    std::map<std::vector<std::string>, std::uint64_t> counts;
    for (const auto& t : traces) {
        std::vector<std::string> p;
        ++counts[p];
        for (const auto& s : t.symbols) {
            p.push_back(s.text);
            ++counts[p];
        }
    }
    return counts;
}

/// Empty when `machine` is exactly the prefix tree of `traces`: one state
/// per distinct prefix, one transition per nonempty prefix, counts equal
/// to the number of traces sharing the prefix.
inline std::string check_prefix_tree(const flowstate::Automaton& machine, std::span<const flowstate::Trace> traces) {
    const auto counts = prefix_counts(traces);
    std::ostringstream err;
    if (machine.size() != counts.size()) {
        err << "states " << machine.size() << " != prefixes " << counts.size();
        return err.str();
    }
    if (machine.transition_count() + 1 != counts.size()) return "transition count differs from prefix count";
    std::set<flowstate::StateId> reached;
    for (const auto& [prefix, n] : counts) {
        flowstate::StateId q = flowstate::kRoot;
        for (std::size_t i = 0; i < prefix.size(); ++i) {
            auto next = machine.successor(q, prefix[i]);
            if (!next) return "missing transition for a training prefix";
            if (i + 1 == prefix.size()) {
                const auto sym = *machine.symbol_id(prefix[i]);
                if (machine.state(q).out.at(sym).count != n) return "transition count mismatch";
            }
            q = *next;
        }
        if (!reached.insert(q).second) return "two prefixes share a state";
        if (machine.state(q).count != n) return "state count mismatch";
    }
    return {};
}

/// Mann-Whitney pair counting: P(malicious > benign) + P(tie) / 2.
inline double pair_count_auc(const std::vector<double>& scores, const std::vector<flowstate::Label>& labels) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != flowstate::Label::malicious) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != flowstate::Label::benign) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

/// ln((observed + a) / E) with E = ((train + a) / (total + a * states)) * max(uc, 1).
inline double positional_score(double observed, double train, double total, double states, double a, double uc) {
    const double e = (train + a) / (total + a * states) * std::max(uc, 1.0);
    return std::log((observed + a) / e);
}

}  // namespace oracle
