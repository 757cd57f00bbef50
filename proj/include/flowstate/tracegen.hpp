#pragma once

#include <compare>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "flowstate/encoder.hpp"
#include "flowstate/flow.hpp"

namespace flowstate {

/// One flow as an automaton alphabet symbol, e.g. "2_TCP_7_1".
struct EventSymbol {
    std::string text;

    auto operator<=>(const EventSymbol&) const = default;
    bool operator==(const EventSymbol&) const = default;
};

/// Feature order plus the fitted encoding for each numeric feature.
struct EncodingSet {
    std::vector<Feature> features = default_feature_order();
    std::map<Feature, FeatureEncoding> encodings;

    bool operator==(const EncodingSet&) const = default;
};

struct Event {
    EventSymbol symbol;
    std::size_t line_index = 0;
    Label label = Label::unknown;
};

/// Protocol tokens are made safe for use as a symbol component.
std::string symbol_component(std::string_view protocol);

/// One event per flow, in input order.
std::vector<Event> flows_to_events(std::span<const FlowRecord> flows, const EncodingSet& encodings);

struct Trace {
    std::vector<EventSymbol> symbols;
    ConnectionKey connection;
    std::vector<std::size_t> line_span;  // one source line per symbol
    std::size_t seq_no = 0;
    Label label = Label::unknown;  // evaluation only
};

/// Malicious if any flow is malicious, benign if all are benign.
Label trace_label(std::span<const Event> window);

struct ConnectionEvents {
    ConnectionKey key;
    std::vector<Event> events;
};

/// Fixed-length windows inside each connection; short connections yield
/// nothing. seq_no follows connection order, then window position.
std::vector<Trace> sliding_windows(std::span<const ConnectionEvents> connections, std::size_t length,
                                   std::size_t stride = 1);

struct WindowParams {
    std::size_t length = 10;
    std::size_t stride = 1;
};

/// sort by (timestamp, connection) -> group -> encode -> window.
std::vector<Trace> make_traces(std::span<const FlowRecord> flows, const EncodingSet& encodings,
                               const WindowParams& window);

/// Debug dump: one trace per line, symbols separated by spaces.
void write_traces(std::ostream& out, std::span<const Trace> traces);

}  // namespace flowstate
