#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

#include "flowstate/automaton.hpp"
#include "flowstate/tracegen.hpp"

namespace flowstate {

inline constexpr int kBundleVersion = 1;

/// Everything needed to score new traffic: the feature encodings, the
/// learned machine (with its training counts), the alert threshold and a
/// snapshot of the configuration that produced them.
struct ModelBundle {
    int version = kBundleVersion;
    EncodingSet encodings;
    Automaton machine;
    double threshold = 0.0;
    std::string config_json = "{}";

    bool operator==(const ModelBundle&) const = default;
};

/// Line-oriented text format; numbers are written in shortest round-trip
/// form so save -> load -> save is byte-identical.
void save_bundle(std::ostream& out, const ModelBundle& bundle);
std::string bundle_to_string(const ModelBundle& bundle);
void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle);

/// Throws ParseError on malformed input or a version mismatch.
ModelBundle load_bundle(std::istream& in);
ModelBundle load_bundle_from_string(const std::string& text);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace flowstate
