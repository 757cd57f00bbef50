#include "flowstate/attacks.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "flowstate/error.hpp"

namespace flowstate {

std::string_view to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::padding: return "padding";
        case AttackKind::random_replacement: return "random";
        case AttackKind::window_replacement: return "window";
        case AttackKind::frequency_replacement: return "frequency";
    }
    return "?";
}

AttackKind parse_attack_kind(std::string_view name) {
    if (name == "padding") return AttackKind::padding;
    if (name == "random" || name == "random_replacement") return AttackKind::random_replacement;
    if (name == "window" || name == "window_replacement") return AttackKind::window_replacement;
    if (name == "frequency" || name == "frequency_replacement") return AttackKind::frequency_replacement;
    throw ConfigError("unknown attack '" + std::string(name) + "'");
}

const std::vector<AttackKind>& all_attack_kinds() {
    static const std::vector<AttackKind> kinds = {AttackKind::padding, AttackKind::random_replacement,
                                                  AttackKind::window_replacement, AttackKind::frequency_replacement};
    return kinds;
}

FeatureTuple tuple_of(const FlowRecord& flow) {
    return {flow.duration, flow.protocol, flow.num_bytes, flow.num_packets};
}

void assign_tuple(FlowRecord& flow, const FeatureTuple& tuple) {
    flow.duration = tuple.duration;
    flow.protocol = tuple.protocol;
    flow.num_bytes = tuple.num_bytes;
    flow.num_packets = tuple.num_packets;
}

namespace {

void require_pool(std::span<const FlowRecord> pool) {
    if (pool.empty()) throw ConfigError("attack needs a nonempty benign pool");
}

template <typename T>
T nearest(const std::vector<T>& sorted, T value) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), value);
    if (it == sorted.end()) return sorted.back();
    if (*it == value || it == sorted.begin()) return *it;
    const T hi = *it;
    const T lo = *(it - 1);
    return (hi - value) < (value - lo) ? hi : lo;
}

template <typename T>
std::vector<T> sorted_unique(std::vector<T> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

std::vector<FlowRecord> padding_attack(std::span<const FlowRecord> malicious, std::span<const FlowRecord> pool) {
    require_pool(pool);
    std::vector<double> durations;
    std::vector<std::uint64_t> bytes, packets;
    std::map<std::string, std::size_t> protocols;
    for (const auto& f : pool) {
        durations.push_back(f.duration);
        bytes.push_back(f.num_bytes);
        packets.push_back(f.num_packets);
        ++protocols[f.protocol];
    }
    durations = sorted_unique(std::move(durations));
    bytes = sorted_unique(std::move(bytes));
    packets = sorted_unique(std::move(packets));
    std::string common;
    std::size_t best = 0;
    for (const auto& [p, c] : protocols)
        if (c > best) {
            best = c;
            common = p;
        }

    std::vector<FlowRecord> out(malicious.begin(), malicious.end());
    for (auto& f : out) {
        f.duration = nearest(durations, f.duration);
        f.num_bytes = nearest(bytes, f.num_bytes);
        f.num_packets = nearest(packets, f.num_packets);
        if (!protocols.contains(f.protocol)) f.protocol = common;
    }
    return out;
}

std::vector<FlowRecord> random_replacement_attack(std::span<const FlowRecord> malicious,
                                                  std::span<const FlowRecord> pool, std::uint64_t seed) {
    require_pool(pool);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<FlowRecord> out(malicious.begin(), malicious.end());
    for (auto& f : out) assign_tuple(f, tuple_of(pool[pick(rng)]));
    return out;
}

std::vector<BenignWindow> benign_windows(std::span<const FlowRecord> pool, std::size_t length) {
    if (length < 1) throw ConfigError("window length must be >= 1");
    std::vector<BenignWindow> windows;
    for (const auto& g : group_by_connection(pool)) {
        for (std::size_t start = 0; start + length <= g.flows.size(); start += length) {
            BenignWindow w;
            for (std::size_t i = start; i < start + length; ++i) w.tuples.push_back(tuple_of(g.flows[i]));
            windows.push_back(std::move(w));
        }
    }
    return windows;
}

std::vector<std::size_t> plan_window_replacement(std::size_t malicious_count, std::size_t available_windows,
                                                 std::size_t length, std::uint64_t seed) {
    if (length < 1) throw ConfigError("window length must be >= 1");
    const std::size_t needed = (malicious_count + length - 1) / length;
    if (needed > available_windows)
        throw ConfigError("window replacement needs " + std::to_string(needed) + " benign windows of length " +
                          std::to_string(length) + " but only " + std::to_string(available_windows) +
                          " are available");
    std::vector<std::size_t> order(available_windows);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < needed; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, available_windows - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    order.resize(needed);
    return order;
}

std::vector<FlowRecord> window_replacement_attack(std::span<const FlowRecord> malicious,
                                                  std::span<const FlowRecord> pool, std::size_t length,
                                                  std::uint64_t seed) {
    const auto windows = benign_windows(pool, length);
    const auto plan = plan_window_replacement(malicious.size(), windows.size(), length, seed);
    std::vector<FlowRecord> out(malicious.begin(), malicious.end());
    for (std::size_t i = 0; i < out.size(); ++i) assign_tuple(out[i], windows[plan[i / length]].tuples[i % length]);
    return out;
}

std::vector<FeatureTuple> frequent_tuples(std::span<const FlowRecord> pool, std::uint64_t min_count) {
    std::map<FeatureTuple, std::uint64_t> counts;
    for (const auto& f : pool) ++counts[tuple_of(f)];
    std::vector<FeatureTuple> frequent;
    for (const auto& [t, c] : counts)
        if (c >= min_count) frequent.push_back(t);
    return frequent;
}

std::vector<FlowRecord> frequency_replacement_attack(std::span<const FlowRecord> malicious,
                                                     std::span<const FlowRecord> pool, std::uint64_t min_count,
                                                     std::uint64_t seed) {
    if (min_count < 1) throw ConfigError("frequency threshold must be >= 1");
    const auto frequent = frequent_tuples(pool, min_count);
    if (frequent.empty())
        throw ConfigError("no flow occurs at least " + std::to_string(min_count) + " times in the benign pool");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, frequent.size() - 1);
    std::vector<FlowRecord> out(malicious.begin(), malicious.end());
    for (auto& f : out) assign_tuple(f, frequent[pick(rng)]);
    return out;
}

std::vector<FlowRecord> apply_attack(std::span<const FlowRecord> flows, const AttackSpec& spec) {
    if (spec.window < 1) throw ConfigError("attack window length must be >= 1");
    if (spec.min_count < 1) throw ConfigError("attack frequency threshold must be >= 1");

    // Work on row positions so the output keeps the input order.
    std::vector<std::size_t> order(flows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& fa = flows[a];
        const auto& fb = flows[b];
        if (fa.timestamp_us != fb.timestamp_us) return fa.timestamp_us < fb.timestamp_us;
        return connection_of(fa) < connection_of(fb);
    });
    std::vector<FlowRecord> pool;
    std::map<ConnectionKey, std::vector<std::size_t>> by_conn;
    std::vector<ConnectionKey> conn_order;
    for (std::size_t i : order) {
        const auto& f = flows[i];
        if (f.label == Label::benign) pool.push_back(f);
        if (f.label != Label::malicious) continue;
        auto [it, inserted] = by_conn.try_emplace(connection_of(f));
        if (inserted) conn_order.push_back(it->first);
        it->second.push_back(i);
    }
    std::vector<std::size_t> positions;
    for (const auto& key : conn_order)
        for (auto i : by_conn[key]) positions.push_back(i);
    std::vector<FlowRecord> malicious;
    malicious.reserve(positions.size());
    for (auto i : positions) malicious.push_back(flows[i]);

    std::vector<FlowRecord> out(flows.begin(), flows.end());
    if (malicious.empty()) return out;

    std::vector<FlowRecord> changed;
    switch (spec.kind) {
        case AttackKind::padding: changed = padding_attack(malicious, pool); break;
        case AttackKind::random_replacement: changed = random_replacement_attack(malicious, pool, spec.seed); break;
        case AttackKind::window_replacement:
            changed = window_replacement_attack(malicious, pool, spec.window, spec.seed);
            break;
        case AttackKind::frequency_replacement:
            changed = frequency_replacement_attack(malicious, pool, spec.min_count, spec.seed);
            break;
    }
    for (std::size_t k = 0; k < positions.size(); ++k) out[positions[k]] = std::move(changed[k]);
    return out;
}

}  // namespace flowstate
