#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "flowstate/flow.hpp"
#include "flowstate/tracegen.hpp"

namespace testing {

inline flowstate::FlowRecord flow(std::string src, std::string dst, std::int64_t ts, double duration,
                                  std::string proto, std::uint64_t bytes, std::uint64_t packets,
                                  flowstate::Label label = flowstate::Label::benign, std::size_t line = 0) {
    flowstate::FlowRecord f;
    f.src_ip = std::move(src);
    f.dst_ip = std::move(dst);
    f.timestamp_us = ts;
    f.duration = duration;
    f.protocol = std::move(proto);
    f.num_bytes = bytes;
    f.num_packets = packets;
    f.label = label;
    f.line_index = line;
    return f;
}

inline flowstate::Trace trace_of(const std::vector<std::string>& symbols, std::size_t seq_no = 0) {
    flowstate::Trace t;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        t.symbols.push_back({symbols[i]});
        t.line_span.push_back(i + 2);
    }
    t.seq_no = seq_no;
    return t;
}

/// Random traces over a small alphabet "a", "b", ...
inline std::vector<flowstate::Trace> random_traces(std::mt19937_64& rng, std::size_t count, std::size_t length,
                                                   std::size_t alphabet) {
    std::uniform_int_distribution<std::size_t> pick(0, alphabet - 1);
    std::vector<flowstate::Trace> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<std::string> s;
        for (std::size_t k = 0; k < length; ++k) s.push_back(std::string(1, static_cast<char>('a' + pick(rng))));
        out.push_back(trace_of(s, i));
    }
    return out;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("flowstate_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
