#include "flowstate/automaton.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "flowstate/error.hpp"

namespace flowstate {

Automaton::Automaton() { states_.emplace_back(); }

void Automaton::index_alphabet() {
    symbol_index_.clear();
    for (SymbolId i = 0; i < alphabet_.size(); ++i) symbol_index_.emplace(alphabet_[i], i);
}

Automaton Automaton::from_parts(std::vector<std::string> alphabet, std::vector<State> states,
                                std::uint64_t trace_starts, std::optional<MergeParams> merge) {
    if (!std::is_sorted(alphabet.begin(), alphabet.end()) ||
        std::adjacent_find(alphabet.begin(), alphabet.end()) != alphabet.end())
        throw ParseError("automaton alphabet must be sorted and unique");
    if (states.empty()) throw ParseError("automaton has no root state");
    Automaton m;
    m.alphabet_ = std::move(alphabet);
    m.states_ = std::move(states);
    m.trace_starts_ = trace_starts;
    m.merge_ = merge;
    m.index_alphabet();
    if (auto problem = audit(m); !problem.empty()) throw ParseError("invalid automaton: " + problem);
    return m;
}

std::optional<SymbolId> Automaton::symbol_id(std::string_view symbol) const {
    auto it = symbol_index_.find(std::string(symbol));
    if (it == symbol_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<StateId> Automaton::successor(StateId from, SymbolId symbol) const {
    const auto& out = states_.at(from).out;
    auto it = out.find(symbol);
    if (it == out.end()) return std::nullopt;
    return it->second.target;
}

std::optional<StateId> Automaton::successor(StateId from, std::string_view symbol) const {
    auto id = symbol_id(symbol);
    if (!id) return std::nullopt;
    return successor(from, *id);
}

std::uint64_t Automaton::arrivals(StateId id) const {
    const auto c = states_.at(id).count;
    return id == kRoot ? c - trace_starts_ : c;
}

std::uint64_t Automaton::total_arrivals() const {
    std::uint64_t total = 0;
    for (StateId q = 0; q < states_.size(); ++q) total += arrivals(q);
    return total;
}

std::size_t Automaton::transition_count() const {
    std::size_t n = 0;
    for (const auto& s : states_) n += s.out.size();
    return n;
}

Automaton build_pta(std::span<const Trace> traces) {
    Automaton m;
    std::set<std::string> symbols;
    for (const auto& t : traces)
        for (const auto& s : t.symbols) symbols.insert(s.text);
    m.alphabet_.assign(symbols.begin(), symbols.end());
    m.index_alphabet();

    // Build as a tree in insertion order, then renumber breadth-first.
    std::vector<State> tree(1);
    for (const auto& t : traces) {
        StateId cur = kRoot;
        ++tree[cur].count;
        for (const auto& s : t.symbols) {
            const SymbolId sym = m.symbol_index_.at(s.text);
            auto [it, inserted] = tree[cur].out.try_emplace(sym, Transition{0, 0});
            if (inserted) {
                it->second.target = static_cast<StateId>(tree.size());
                tree.emplace_back();
            }
            ++it->second.count;
            cur = it->second.target;
            ++tree[cur].count;
        }
        ++tree[cur].final_count;
    }
    m.trace_starts_ = traces.size();

    std::vector<StateId> order{kRoot};
    std::vector<StateId> renumber(tree.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        renumber[order[i]] = static_cast<StateId>(i);
        for (const auto& [sym, tr] : tree[order[i]].out) order.push_back(tr.target);
    }
    m.states_.assign(tree.size(), State{});
    for (StateId old = 0; old < tree.size(); ++old) {
        State s = std::move(tree[old]);
        for (auto& [sym, tr] : s.out) tr.target = renumber[tr.target];
        m.states_[renumber[old]] = std::move(s);
    }
    return m;
}

bool hoeffding_different(std::uint64_t count_a, std::uint64_t total_a, std::uint64_t count_b,
                         std::uint64_t total_b, double alpha) {
    if (total_a == 0 || total_b == 0) return false;
    const double fa = static_cast<double>(count_a) / static_cast<double>(total_a);
    const double fb = static_cast<double>(count_b) / static_cast<double>(total_b);
    const double bound = std::sqrt(0.5 * std::log(2.0 / alpha)) *
                         (1.0 / std::sqrt(static_cast<double>(total_a)) + 1.0 / std::sqrt(static_cast<double>(total_b)));
    return std::abs(fa - fb) > bound;
}

namespace {

std::uint64_t outgoing_total(const State& s) {
    std::uint64_t n = 0;
    for (const auto& [sym, tr] : s.out) n += tr.count;
    return n;
}

class RedBlueMerger {
public:
    RedBlueMerger(std::vector<State> states, const MergeParams& params)
        : states_(std::move(states)), params_(params) {}

    std::vector<State> run() {
        std::vector<bool> red(states_.size(), false);
        std::vector<StateId> reds{kRoot};
        red[kRoot] = true;
        for (;;) {
            // Blue fringe: non-red children of red states. Pick the lowest id,
            // which is the shallowest, symbol-first PTA node.
            StateId blue = 0;
            StateId parent = 0;
            SymbolId via = 0;
            bool found = false;
            for (StateId r : reds) {
                for (const auto& [sym, tr] : states_[r].out) {
                    if (red[tr.target]) continue;
                    if (!found || tr.target < blue) {
                        blue = tr.target;
                        parent = r;
                        via = sym;
                        found = true;
                    }
                }
            }
            if (!found) break;

            bool merged = false;
            if (states_[blue].count >= params_.min_count) {
                for (StateId r : reds) {
                    if (states_[r].count < params_.min_count) continue;
                    if (!compatible(r, blue)) continue;
                    states_[parent].out.at(via).target = r;
                    fold(r, blue);
                    merged = true;
                    break;
                }
            }
            if (!merged) {
                red[blue] = true;
                reds.push_back(blue);
            }
        }
        return std::move(states_);
    }

private:
    bool compatible(StateId a, StateId b) const {
        const State& sa = states_[a];
        const State& sb = states_[b];
        const std::uint64_t na = outgoing_total(sa);
        const std::uint64_t nb = outgoing_total(sb);
        auto ia = sa.out.begin();
        auto ib = sb.out.begin();
        while (ia != sa.out.end() || ib != sb.out.end()) {
            if (ib == sb.out.end() || (ia != sa.out.end() && ia->first < ib->first)) {
                if (hoeffding_different(ia->second.count, na, 0, nb, params_.alpha)) return false;
                ++ia;
            } else if (ia == sa.out.end() || ib->first < ia->first) {
                if (hoeffding_different(0, na, ib->second.count, nb, params_.alpha)) return false;
                ++ib;
            } else {
                if (hoeffding_different(ia->second.count, na, ib->second.count, nb, params_.alpha)) return false;
                ++ia;
                ++ib;
            }
        }
        for (const auto& [sym, tb] : sb.out) {
            auto it = sa.out.find(sym);
            if (it != sa.out.end() && !compatible(it->second.target, tb.target)) return false;
        }
        return true;
    }

    // Folds the tree rooted at `b` into `a`.
    void fold(StateId a, StateId b) {
        State& sb = states_[b];
        states_[a].count += sb.count;
        states_[a].final_count += sb.final_count;
        auto out_b = std::move(sb.out);
        sb = State{};
        for (const auto& [sym, tb] : out_b) {
            auto& out_a = states_[a].out;
            auto it = out_a.find(sym);
            if (it == out_a.end()) {
                out_a.emplace(sym, tb);
            } else {
                it->second.count += tb.count;
                fold(it->second.target, tb.target);
            }
        }
    }

    std::vector<State> states_;
    MergeParams params_;
};

}  // namespace

Automaton merge_states(const Automaton& pta, const MergeParams& params) {
    if (!(params.alpha > 0.0 && params.alpha < 1.0)) throw ConfigError("merge alpha must lie in (0, 1)");

    std::vector<State> merged = RedBlueMerger(pta.states_, params).run();

    // Canonical numbering: breadth-first from the root, symbols in order.
    std::vector<std::int64_t> renumber(merged.size(), -1);
    std::vector<StateId> order{kRoot};
    renumber[kRoot] = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (const auto& [sym, tr] : merged[order[i]].out) {
            if (renumber[tr.target] < 0) {
                renumber[tr.target] = static_cast<std::int64_t>(order.size());
                order.push_back(tr.target);
            }
        }
    }
    Automaton m;
    m.alphabet_ = pta.alphabet_;
    m.index_alphabet();
    m.trace_starts_ = pta.trace_starts_;
    m.merge_ = params;
    m.states_.assign(order.size(), State{});
    for (std::size_t i = 0; i < order.size(); ++i) {
        State s = std::move(merged[order[i]]);
        for (auto& [sym, tr] : s.out) tr.target = static_cast<StateId>(renumber[tr.target]);
        m.states_[i] = std::move(s);
    }
    return m;
}

ReplayResult replay(const Automaton& machine, std::span<const EventSymbol> symbols) {
    ReplayResult r;
    r.state_sequence.reserve(symbols.size());
    StateId cur = kRoot;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        const auto sym = machine.symbol_id(symbols[i].text);
        std::optional<StateId> next;
        if (sym) next = machine.successor(cur, *sym);
        if (!next) {
            r.reset_positions.push_back(i);
            cur = kRoot;
            if (sym) next = machine.successor(kRoot, *sym);
        }
        if (next) cur = *next;
        r.state_sequence.push_back(cur);
    }
    r.visited = r.state_sequence;
    std::sort(r.visited.begin(), r.visited.end());
    r.visited.erase(std::unique(r.visited.begin(), r.visited.end()), r.visited.end());
    return r;
}

std::string audit(const Automaton& machine) {
    const auto& states = machine.states();
    const std::size_t n = states.size();
    std::vector<std::uint64_t> incoming(n, 0);
    for (StateId q = 0; q < n; ++q) {
        std::uint64_t out_total = 0;
        for (const auto& [sym, tr] : states[q].out) {
            if (sym >= machine.alphabet().size()) return "state " + std::to_string(q) + " uses unknown symbol id";
            if (tr.target >= n) return "state " + std::to_string(q) + " has a dangling transition";
            incoming[tr.target] += tr.count;
            out_total += tr.count;
        }
        if (out_total + states[q].final_count != states[q].count)
            return "state " + std::to_string(q) + ": outgoing + final counts differ from state count";
    }
    if (states[kRoot].count != incoming[kRoot] + machine.trace_starts()) return "root count mismatch";
    for (StateId q = 1; q < n; ++q)
        if (states[q].count != incoming[q]) return "state " + std::to_string(q) + ": incoming counts mismatch";

    std::vector<bool> seen(n, false);
    std::deque<StateId> queue{kRoot};
    seen[kRoot] = true;
    while (!queue.empty()) {
        const StateId q = queue.front();
        queue.pop_front();
        for (const auto& [sym, tr] : states[q].out)
            if (!seen[tr.target]) {
                seen[tr.target] = true;
                queue.push_back(tr.target);
            }
    }
    for (StateId q = 0; q < n; ++q)
        if (!seen[q]) return "state " + std::to_string(q) + " unreachable";
    return {};
}

}  // namespace flowstate
