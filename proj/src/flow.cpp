#include "flowstate/flow.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "flowstate/csv.hpp"
#include "flowstate/error.hpp"

namespace flowstate {

std::string_view to_string(Label label) {
    switch (label) {
        case Label::benign: return "benign";
        case Label::malicious: return "malicious";
        case Label::unknown: return "unknown";
    }
    return "unknown";
}

Label parse_label_name(std::string_view name) {
    if (name == "benign") return Label::benign;
    if (name == "malicious") return Label::malicious;
    return Label::unknown;
}

const std::vector<std::string>& ColumnMapping::required_fields() {
    static const std::vector<std::string> fields = {"timestamp", "duration",    "protocol", "num_bytes",
                                                    "num_packets", "src_ip", "dst_ip"};
    return fields;
}

ColumnMapping ColumnMapping::identity() {
    ColumnMapping m;
    for (const auto& f : required_fields()) m.columns[f] = f;
    for (const char* f : {"src_port", "dst_port", "label"}) m.columns[f] = f;
    m.timestamp_format = "unix_us";
    return m;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view text, std::string_view what) {
    text = trim(text);
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty())
        throw ParseError("field " + std::string(what) + ": cannot parse '" + std::string(text) + "'");
    return value;
}

std::uint64_t parse_count(std::string_view text, std::string_view what) {
    text = trim(text);
    // Some exporters write integral counters as "123.0".
    if (text.find_first_of(".eE") != std::string_view::npos) {
        const double d = parse_number<double>(text, what);
        if (d < 0 || d != std::floor(d) || !std::isfinite(d))
            throw ParseError("field " + std::string(what) + ": not a nonnegative integer '" + std::string(text) + "'");
        return static_cast<std::uint64_t>(d);
    }
    if (!text.empty() && text.front() == '-')
        throw ParseError("field " + std::string(what) + ": negative value '" + std::string(text) + "'");
    return parse_number<std::uint64_t>(text, what);
}

std::optional<std::uint16_t> parse_port(std::string_view text, std::string_view what) {
    text = trim(text);
    if (text.empty()) return std::nullopt;
    int base = 10;
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
        text.remove_prefix(2);
        base = 16;
    }
    unsigned value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value, base);
    if (ec != std::errc() || ptr != end || value > 65535)
        throw ParseError("field " + std::string(what) + ": bad port '" + std::string(text) + "'");
    return static_cast<std::uint16_t>(value);
}

std::int64_t scaled_decimal(std::string_view text, std::int64_t scale) {
    text = trim(text);
    const auto dot = text.find('.');
    if (dot == std::string_view::npos) return parse_number<std::int64_t>(text, "timestamp") * scale;
    const std::int64_t whole = dot == 0 ? 0 : parse_number<std::int64_t>(text.substr(0, dot), "timestamp");
    std::string_view frac = text.substr(dot + 1);
    std::int64_t frac_units = 0;
    std::int64_t unit = scale;
    for (char c : frac) {
        if (!std::isdigit(static_cast<unsigned char>(c))) throw ParseError("field timestamp: bad fraction");
        unit /= 10;
        if (unit == 0) break;  // truncate beyond microseconds
        frac_units += (c - '0') * unit;
    }
    return whole * scale + (whole < 0 || text.front() == '-' ? -frac_units : frac_units);
}

}  // namespace

std::int64_t parse_timestamp(std::string_view text, std::string_view format) {
    text = trim(text);
    if (format == "unix_s") return scaled_decimal(text, 1'000'000);
    if (format == "unix_ms") return scaled_decimal(text, 1'000);
    if (format == "unix_us") return scaled_decimal(text, 1);

    std::tm tm{};
    std::istringstream in{std::string(text)};
    in.imbue(std::locale::classic());
    in >> std::get_time(&tm, std::string(format).c_str());
    if (in.fail()) throw ParseError("field timestamp: '" + std::string(text) + "' does not match format");
    std::int64_t micros = 0;
    if (in.peek() == '.') {
        in.get();
        std::int64_t unit = 100'000;
        while (std::isdigit(in.peek())) {
            const int d = in.get() - '0';
            micros += d * unit;
            unit /= 10;
        }
    }
    const std::time_t secs = timegm(&tm);
    return static_cast<std::int64_t>(secs) * 1'000'000 + micros;
}

namespace {

struct ColumnIndex {
    std::unordered_map<std::string, std::size_t> by_field;

    std::optional<std::size_t> find(const std::string& field) const {
        auto it = by_field.find(field);
        if (it == by_field.end()) return std::nullopt;
        return it->second;
    }
};

ColumnIndex resolve_columns(const std::vector<std::string>& header, const ColumnMapping& mapping) {
    for (const auto& f : ColumnMapping::required_fields()) {
        if (!mapping.columns.contains(f)) throw ConfigError("column mapping has no entry for required field '" + f + "'");
    }
    ColumnIndex index;
    for (const auto& [field, column] : mapping.columns) {
        auto it = std::find_if(header.begin(), header.end(),
                               [&](const std::string& h) { return trim(h) == column; });
        if (it == header.end()) throw ConfigError("column '" + column + "' (field " + field + ") not found in header");
        index.by_field[field] = static_cast<std::size_t>(it - header.begin());
    }
    return index;
}

FlowRecord parse_row(const std::vector<std::string>& row, const ColumnIndex& cols, const ColumnMapping& mapping) {
    auto cell = [&](const char* field) -> std::string_view {
        const std::size_t i = cols.by_field.at(field);
        if (i >= row.size()) throw ParseError(std::string("row too short for field ") + field);
        return row[i];
    };
    FlowRecord f;
    f.src_ip = std::string(trim(cell("src_ip")));
    f.dst_ip = std::string(trim(cell("dst_ip")));
    if (cols.find("src_port")) f.src_port = parse_port(cell("src_port"), "src_port");
    if (cols.find("dst_port")) f.dst_port = parse_port(cell("dst_port"), "dst_port");
    f.timestamp_us = parse_timestamp(cell("timestamp"), mapping.timestamp_format);
    f.duration = parse_number<double>(cell("duration"), "duration");
    if (!(f.duration >= 0.0) || !std::isfinite(f.duration)) throw ParseError("field duration: must be finite and >= 0");
    std::string proto(trim(cell("protocol")));
    if (auto it = mapping.protocol_map.find(proto); it != mapping.protocol_map.end()) proto = it->second;
    f.protocol = std::move(proto);
    f.num_bytes = parse_count(cell("num_bytes"), "num_bytes");
    f.num_packets = parse_count(cell("num_packets"), "num_packets");
    if (cols.find("label")) {
        const std::string raw(trim(cell("label")));
        auto it = mapping.label_map.find(raw);
        f.label = it == mapping.label_map.end() ? Label::unknown : parse_label_name(it->second);
    }
    return f;
}

}  // namespace

IngestResult ingest_csv(std::istream& in, const ColumnMapping& mapping, const IngestOptions& options) {
    IngestResult result;
    csv::Reader reader(in);
    std::vector<std::string> row;
    if (!reader.next(row)) return result;
    const ColumnIndex cols = resolve_columns(row, mapping);

    while (reader.next(row)) {
        const std::size_t line = reader.record_line();
        if (row.size() == 1 && trim(row[0]).empty()) continue;
        try {
            FlowRecord f = parse_row(row, cols, mapping);
            f.line_index = line;
            result.records.push_back(std::move(f));
        } catch (const ParseError& e) {
            result.errors.push_back({line, e.what()});
            if (result.errors.size() > options.max_row_errors) {
                throw ParseError("more than " + std::to_string(options.max_row_errors) +
                                 " malformed rows; last at line " + std::to_string(line) + ": " + e.what());
            }
        }
    }
    return result;
}

IngestResult ingest_csv(const std::filesystem::path& path, const ColumnMapping& mapping, const IngestOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    return ingest_csv(in, mapping, options);
}

void write_flows_csv(std::ostream& out, std::span<const FlowRecord> flows) {
    csv::write_row(out, {"timestamp", "src_ip", "dst_ip", "src_port", "dst_port", "protocol", "duration", "num_bytes",
                         "num_packets", "label"});
    auto port = [](const std::optional<std::uint16_t>& p) { return p ? std::to_string(*p) : std::string(); };
    for (const auto& f : flows) {
        char dur[32];
        auto res = std::to_chars(dur, dur + sizeof dur, f.duration);
        csv::write_row(out, {std::to_string(f.timestamp_us), f.src_ip, f.dst_ip, port(f.src_port), port(f.dst_port),
                             f.protocol, std::string(dur, res.ptr), std::to_string(f.num_bytes),
                             std::to_string(f.num_packets), std::string(to_string(f.label))});
    }
}

std::vector<FlowRecord> sort_flows(std::vector<FlowRecord> flows) {
    std::stable_sort(flows.begin(), flows.end(), [](const FlowRecord& a, const FlowRecord& b) {
        if (a.timestamp_us != b.timestamp_us) return a.timestamp_us < b.timestamp_us;
        if (a.src_ip != b.src_ip) return a.src_ip < b.src_ip;
        return a.dst_ip < b.dst_ip;
    });
    return flows;
}

std::vector<FlowRecord> sort_flows_by_connection(std::vector<FlowRecord> flows) {
    std::stable_sort(flows.begin(), flows.end(), [](const FlowRecord& a, const FlowRecord& b) {
        if (a.src_ip != b.src_ip) return a.src_ip < b.src_ip;
        if (a.dst_ip != b.dst_ip) return a.dst_ip < b.dst_ip;
        return a.timestamp_us < b.timestamp_us;
    });
    return flows;
}

ConnectionGroups group_by_connection(std::span<const FlowRecord> flows) {
    ConnectionGroups groups;
    std::map<ConnectionKey, std::size_t> slot;
    for (const auto& f : flows) {
        auto [it, inserted] = slot.try_emplace(connection_of(f), groups.size());
        if (inserted) groups.push_back({it->first, {}});
        groups[it->second].flows.push_back(f);
    }
    return groups;
}

}  // namespace flowstate
