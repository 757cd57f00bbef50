#pragma once

#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowstate/tracegen.hpp"

namespace flowstate {

/// First-order Markov chain over event symbols with add-one smoothing.
/// Symbols not seen in training share one "unseen" bucket.
class MarkovBaseline {
public:
    static MarkovBaseline fit(std::span<const Trace> traces);

    /// -sum log P(s[i+1] | s[i]); larger means more anomalous.
    double score(std::span<const EventSymbol> symbols) const;
    double score(const Trace& trace) const { return score(trace.symbols); }

    double probability(std::string_view from, std::string_view to) const;
    std::size_t alphabet_size() const { return index_.size(); }

private:
    std::size_t bucket(std::string_view symbol) const;

    std::unordered_map<std::string, std::size_t> index_;
    // (alphabet + 1) x (alphabet + 1) counts; the last row/column is the
    // unseen bucket.
    std::vector<std::vector<std::uint64_t>> counts_;
    std::vector<std::uint64_t> row_totals_;
};

}  // namespace flowstate
