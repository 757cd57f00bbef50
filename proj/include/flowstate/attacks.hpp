#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flowstate/flow.hpp"

namespace flowstate {

enum class AttackKind { padding, random_replacement, window_replacement, frequency_replacement };

std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);
const std::vector<AttackKind>& all_attack_kinds();

struct AttackSpec {
    AttackKind kind = AttackKind::padding;
    std::uint64_t seed = 0;
    std::uint64_t min_count = 100;  // frequency replacement threshold
    std::size_t window = 10;        // window replacement block length
};

/// The features an adversary may change: everything the detector scores.
struct FeatureTuple {
    double duration = 0.0;
    std::string protocol;
    std::uint64_t num_bytes = 0;
    std::uint64_t num_packets = 0;

    auto operator<=>(const FeatureTuple&) const = default;
    bool operator==(const FeatureTuple&) const = default;
};

FeatureTuple tuple_of(const FlowRecord& flow);
void assign_tuple(FlowRecord& flow, const FeatureTuple& tuple);

/// Each feature moves to the nearest pool value (smaller on ties). Unknown
/// protocols become the most frequent pool protocol.
std::vector<FlowRecord> padding_attack(std::span<const FlowRecord> malicious, std::span<const FlowRecord> pool);

/// Each flow takes the features of a uniformly drawn pool flow.
std::vector<FlowRecord> random_replacement_attack(std::span<const FlowRecord> malicious,
                                                  std::span<const FlowRecord> pool, std::uint64_t seed);

/// A benign window: `length` consecutive flows of one pool connection.
struct BenignWindow {
    std::vector<FeatureTuple> tuples;
};

/// Disjoint windows tiling each pool connection from its first flow.
std::vector<BenignWindow> benign_windows(std::span<const FlowRecord> pool, std::size_t length);

/// Which window replaces each block of `length` malicious flows; windows
/// are drawn without replacement. Throws ConfigError if too few windows.
std::vector<std::size_t> plan_window_replacement(std::size_t malicious_count, std::size_t available_windows,
                                                 std::size_t length, std::uint64_t seed);

/// Consecutive blocks of the malicious stream are overwritten by distinct
/// benign windows; a trailing partial block uses a window prefix.
std::vector<FlowRecord> window_replacement_attack(std::span<const FlowRecord> malicious,
                                                  std::span<const FlowRecord> pool, std::size_t length,
                                                  std::uint64_t seed);

/// Feature tuples occurring at least `min_count` times in the pool.
std::vector<FeatureTuple> frequent_tuples(std::span<const FlowRecord> pool, std::uint64_t min_count);

/// Each flow takes a uniformly drawn frequent pool tuple.
std::vector<FlowRecord> frequency_replacement_attack(std::span<const FlowRecord> malicious,
                                                     std::span<const FlowRecord> pool, std::uint64_t min_count,
                                                     std::uint64_t seed);

/// Applies an attack to the malicious flows of a test set, using its benign
/// flows as the adversary's collected data. Benign flows, row order,
/// timestamps, endpoints and labels are untouched. The malicious stream is
/// taken connection by connection in time order.
std::vector<FlowRecord> apply_attack(std::span<const FlowRecord> flows, const AttackSpec& spec);

}  // namespace flowstate
