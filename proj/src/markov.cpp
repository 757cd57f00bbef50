#include "flowstate/markov.hpp"

#include <cmath>
#include <set>

namespace flowstate {

MarkovBaseline MarkovBaseline::fit(std::span<const Trace> traces) {
    MarkovBaseline mc;
    std::set<std::string> symbols;
    for (const auto& t : traces)
        for (const auto& s : t.symbols) symbols.insert(s.text);
    for (const auto& s : symbols) mc.index_.emplace(s, mc.index_.size());

    const std::size_t v = mc.index_.size() + 1;
    mc.counts_.assign(v, std::vector<std::uint64_t>(v, 0));
    mc.row_totals_.assign(v, 0);
    for (const auto& t : traces) {
        for (std::size_t i = 0; i + 1 < t.symbols.size(); ++i) {
            const auto a = mc.bucket(t.symbols[i].text);
            const auto b = mc.bucket(t.symbols[i + 1].text);
            ++mc.counts_[a][b];
            ++mc.row_totals_[a];
        }
    }
    return mc;
}

std::size_t MarkovBaseline::bucket(std::string_view symbol) const {
    auto it = index_.find(std::string(symbol));
    return it == index_.end() ? index_.size() : it->second;
}

double MarkovBaseline::probability(std::string_view from, std::string_view to) const {
    const auto a = bucket(from);
    const auto b = bucket(to);
    const double v = static_cast<double>(index_.size() + 1);
    return (static_cast<double>(counts_[a][b]) + 1.0) / (static_cast<double>(row_totals_[a]) + v);
}

double MarkovBaseline::score(std::span<const EventSymbol> symbols) const {
    double nll = 0.0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) nll -= std::log(probability(symbols[i].text, symbols[i + 1].text));
    return nll;
}

}  // namespace flowstate
