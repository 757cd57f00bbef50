#include "flowstate/tracegen.hpp"

#include "flowstate/error.hpp"

namespace flowstate {

std::string symbol_component(std::string_view protocol) {
    std::string out(protocol);
    for (char& c : out)
        if (c == '_' || std::isspace(static_cast<unsigned char>(c))) c = '-';
    if (out.empty()) out = "-";
    return out;
}

std::vector<Event> flows_to_events(std::span<const FlowRecord> flows, const EncodingSet& encodings) {
    for (Feature f : encodings.features) {
        if (is_numeric(f) && !encodings.encodings.contains(f))
            throw ConfigError("no encoding for feature " + std::string(to_string(f)));
    }
    std::vector<Event> events;
    events.reserve(flows.size());
    for (const auto& flow : flows) {
        std::string text;
        for (std::size_t i = 0; i < encodings.features.size(); ++i) {
            const Feature f = encodings.features[i];
            if (i) text.push_back('_');
            if (f == Feature::protocol)
                text += symbol_component(flow.protocol);
            else
                text += std::to_string(encodings.encodings.at(f).encode(feature_value(flow, f)));
        }
        events.push_back({EventSymbol{std::move(text)}, flow.line_index, flow.label});
    }
    return events;
}

Label trace_label(std::span<const Event> window) {
    bool all_benign = true;
    for (const auto& e : window) {
        if (e.label == Label::malicious) return Label::malicious;
        if (e.label != Label::benign) all_benign = false;
    }
    return all_benign ? Label::benign : Label::unknown;
}

std::vector<Trace> sliding_windows(std::span<const ConnectionEvents> connections, std::size_t length,
                                   std::size_t stride) {
    if (length < 1) throw ConfigError("window length must be >= 1");
    if (stride < 1) throw ConfigError("window stride must be >= 1");
    std::vector<Trace> traces;
    for (const auto& conn : connections) {
        const auto& ev = conn.events;
        for (std::size_t start = 0; start + length <= ev.size(); start += stride) {
            Trace t;
            t.connection = conn.key;
            t.seq_no = traces.size();
            t.symbols.reserve(length);
            t.line_span.reserve(length);
            for (std::size_t i = start; i < start + length; ++i) {
                t.symbols.push_back(ev[i].symbol);
                t.line_span.push_back(ev[i].line_index);
            }
            t.label = trace_label(std::span(ev).subspan(start, length));
            traces.push_back(std::move(t));
        }
    }
    return traces;
}

std::vector<Trace> make_traces(std::span<const FlowRecord> flows, const EncodingSet& encodings,
                               const WindowParams& window) {
    const auto sorted = sort_flows({flows.begin(), flows.end()});
    const auto groups = group_by_connection(sorted);
    std::vector<ConnectionEvents> connections;
    connections.reserve(groups.size());
    for (const auto& g : groups) connections.push_back({g.key, flows_to_events(g.flows, encodings)});
    return sliding_windows(connections, window.length, window.stride);
}

void write_traces(std::ostream& out, std::span<const Trace> traces) {
    for (const auto& t : traces) {
        for (std::size_t i = 0; i < t.symbols.size(); ++i) {
            if (i) out << ' ';
            out << t.symbols[i].text;
        }
        out << '\n';
    }
}

}  // namespace flowstate
