#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowstate {

enum class Label { benign, malicious, unknown };

std::string_view to_string(Label label);
Label parse_label_name(std::string_view name);

/// One NetFlow row.
struct FlowRecord {
    std::string src_ip;
    std::string dst_ip;
    std::optional<std::uint16_t> src_port;
    std::optional<std::uint16_t> dst_port;
    std::int64_t timestamp_us = 0;  // microseconds since epoch
    double duration = 0.0;          // seconds
    std::string protocol;
    std::uint64_t num_bytes = 0;
    std::uint64_t num_packets = 0;
    Label label = Label::unknown;
    std::size_t line_index = 0;  // 1-based physical row in the source file

    bool operator==(const FlowRecord&) const = default;
};

/// Directed (src, dst) host pair.
struct ConnectionKey {
    std::string src_ip;
    std::string dst_ip;

    auto operator<=>(const ConnectionKey&) const = default;
    bool operator==(const ConnectionKey&) const = default;
};

inline ConnectionKey connection_of(const FlowRecord& f) { return {f.src_ip, f.dst_ip}; }

/// How to read a particular CSV schema.
///
/// `columns` maps semantic field names to header names. Required fields:
/// timestamp, duration, protocol, num_bytes, num_packets, src_ip, dst_ip.
/// Optional: src_port, dst_port, label.
///
/// `timestamp_format` is one of "unix_s" (decimal seconds), "unix_ms",
/// "unix_us", or a strftime pattern such as "%Y-%m-%d %H:%M:%S" (a decimal
/// fraction directly after the seconds field is accepted and truncated to
/// microseconds). Pattern timestamps are read as UTC.
struct ColumnMapping {
    std::map<std::string, std::string> columns;
    std::string timestamp_format = "unix_s";
    std::map<std::string, std::string> protocol_map;
    /// Raw label value -> "benign" / "malicious". Unlisted values are unknown.
    std::map<std::string, std::string> label_map = {
        {"benign", "benign"}, {"malicious", "malicious"}, {"0", "benign"}, {"1", "malicious"}};

    static const std::vector<std::string>& required_fields();
    /// Mapping whose header names equal the semantic names.
    static ColumnMapping identity();

    bool operator==(const ColumnMapping&) const = default;
};

struct RowError {
    std::size_t line_index = 0;
    std::string message;
};

struct IngestResult {
    std::vector<FlowRecord> records;
    std::vector<RowError> errors;
};

struct IngestOptions {
    /// Ingestion aborts with ParseError once more than this many rows fail.
    std::size_t max_row_errors = 1000;
};

/// Reads a headered CSV file. Throws ConfigError when a mapped column is
/// missing from the header, ParseError when the error cap is exceeded.
IngestResult ingest_csv(const std::filesystem::path& path, const ColumnMapping& mapping,
                        const IngestOptions& options = {});
IngestResult ingest_csv(std::istream& in, const ColumnMapping& mapping, const IngestOptions& options = {});

/// Writes flows back out with the identity mapping and unix_us timestamps.
void write_flows_csv(std::ostream& out, std::span<const FlowRecord> flows);

std::int64_t parse_timestamp(std::string_view text, std::string_view format);

/// Stable sort by (timestamp, connection).
std::vector<FlowRecord> sort_flows(std::vector<FlowRecord> flows);
/// Stable sort by (connection, timestamp).
std::vector<FlowRecord> sort_flows_by_connection(std::vector<FlowRecord> flows);

struct ConnectionGroup {
    ConnectionKey key;
    std::vector<FlowRecord> flows;
};

/// Groups in first-appearance order, flows in input order within a group.
using ConnectionGroups = std::vector<ConnectionGroup>;

ConnectionGroups group_by_connection(std::span<const FlowRecord> flows);

}  // namespace flowstate
