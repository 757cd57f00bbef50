#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flowstate/attacks.hpp"
#include "flowstate/flow.hpp"
#include "flowstate/tracegen.hpp"

namespace flowstate::synthetic {

/// Probabilistic deterministic automaton: every state emits a symbol index
/// with some probability and moves to a fixed successor.
struct SourceMachine {
    struct Edge {
        std::size_t symbol = 0;
        double probability = 0.0;
        std::size_t next = 0;
    };
    std::vector<std::vector<Edge>> states;
    std::size_t symbols = 0;

    /// Samples `length` symbols starting from `start`.
    std::vector<std::size_t> sample(std::mt19937_64& rng, std::size_t length, std::size_t start = 0) const;
    /// Long-run frequency of each symbol (power iteration).
    std::vector<double> symbol_frequencies() const;
    std::vector<double> stationary() const;
};

/// Five states over eight symbols. Symbol 0 is the most frequent; each
/// repetition of it moves one state deeper.
SourceMachine five_state_machine();
/// Two states alternating "a"/"b"-ish emissions with small noise.
SourceMachine two_state_cycle();

/// Fixed feature values for a symbol index; values differ per symbol in
/// every numeric feature.
FeatureTuple symbol_features(std::size_t symbol);

struct Params {
    std::size_t train_flows = 50000;
    std::size_t test_benign_flows = 20000;
    std::size_t attack_flows = 2000;
    std::size_t flows_per_connection = 500;
    std::size_t attack_flows_per_connection = 500;
    /// Attack connections repeat the most frequent benign symbol this many
    /// times faster than a benign connection emits it.
    double rate_factor = 20.0;
    std::uint64_t seed = 0;
    std::uint16_t attack_port = 25;
    /// Symbol the attack repeats; the most frequent benign symbol if unset.
    std::optional<std::size_t> attack_symbol;
};

struct Dataset {
    std::vector<FlowRecord> train;
    std::vector<FlowRecord> test;
    std::size_t attack_symbol = 0;
};

/// Benign traffic from `machine`, plus attack connections in the test set.
/// Rows are in time order and line_index is the row's line in a CSV file
/// written in that order.
Dataset frequency_anomaly(const SourceMachine& machine, const Params& params);

/// Symbol sequences as traces, seq_no in order.
std::vector<Trace> traces_from_symbols(const std::vector<std::vector<std::size_t>>& sequences,
                                       const std::string& prefix = "s");

}  // namespace flowstate::synthetic
