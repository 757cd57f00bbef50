#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowstate/flow.hpp"

namespace flowstate {

/// Flow features that can take part in an event symbol.
enum class Feature { duration, protocol, num_bytes, num_packets };

std::string_view to_string(Feature feature);
/// Accepts the canonical names plus the short aliases "bytes" and "packets".
Feature parse_feature(std::string_view name);
bool is_numeric(Feature feature);
/// Numeric value of a feature. Throws ConfigError for protocol.
double feature_value(const FlowRecord& flow, Feature feature);

/// Canonical symbol order: duration, protocol, bytes, packets.
const std::vector<Feature>& default_feature_order();

/// Context of one unique feature value: how often each binned value sits
/// directly before / after it within a connection, how often it repeats
/// itself, and how common it is overall.
struct ContextVector {
    std::vector<std::uint64_t> prev_bins;
    std::vector<std::uint64_t> next_bins;
    std::uint64_t prev_self = 0;
    std::uint64_t next_self = 0;
    double log_freq = 0.0;  // ln(1 + occurrences)

    /// Flattened [prev_bins | next_bins | prev_self | next_self | log_freq].
    std::vector<double> to_point() const;

    bool operator==(const ContextVector&) const = default;
};

struct ContextMatrix {
    Feature feature = Feature::num_bytes;
    std::size_t bins = 10;
    std::vector<double> prev_edges;  // interior quantile edges, strictly increasing
    std::vector<double> next_edges;
    std::vector<double> values;  // unique values, ascending
    std::vector<ContextVector> vectors;  // aligned with `values`
};

/// Nearest-rank quantile edges of `sample` at k/bins, k = 1..bins-1, with
/// duplicates collapsed.
std::vector<double> quantile_edges(std::vector<double> sample, std::size_t bins);
/// Index of the bin `value` falls in, given interior edges.
std::size_t bin_of(std::span<const double> edges, double value);

/// Builds one context vector per unique value of `feature`. Adjacency is
/// only counted between consecutive flows of the same connection.
ContextMatrix build_context_matrix(const ConnectionGroups& groups, Feature feature, std::size_t bins = 10);

struct KMeansParams {
    std::size_t clusters = 20;
    std::size_t restarts = 10;
    std::uint64_t seed = 0;
    std::size_t max_iterations = 300;
    /// Above this many points the silhouette is estimated on a seeded
    /// subsample of this size. 0 disables sampling.
    std::size_t silhouette_sample = 4000;
};

struct ClusterResult {
    std::vector<std::size_t> labels;
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;
    double silhouette = 0.0;
    std::size_t best_restart = 0;
    std::vector<double> restart_silhouettes;
};

/// Lloyd's algorithm with random initial centroids drawn from the points,
/// repeated `restarts` times; the restart with the highest mean silhouette
/// wins (lowest index on ties). Throws ConfigError for empty input, zero
/// clusters/restarts, or more clusters than distinct points.
ClusterResult kmeans(std::span<const std::vector<double>> points, const KMeansParams& params);

/// Mean silhouette coefficient. Singletons contribute 0; a single cluster
/// scores 0.
double silhouette_score(std::span<const std::vector<double>> points, std::span<const std::size_t> labels);

/// Discretization of one numeric feature.
struct FeatureEncoding {
    Feature feature = Feature::num_bytes;
    std::size_t bins = 10;
    std::vector<double> prev_edges;
    std::vector<double> next_edges;
    std::vector<double> values;  // ascending
    std::vector<std::uint32_t> labels;  // aligned with values
    std::size_t clusters = 0;
    double silhouette = 0.0;
    std::uint64_t seed = 0;

    /// Label of the training value nearest to `value` (ties go to the
    /// smaller value).
    std::uint32_t encode(double value) const;

    bool operator==(const FeatureEncoding&) const = default;
};

/// Clusters the context matrix. The requested cluster count is clamped to
/// the number of distinct context vectors. Labels are renumbered so that
/// cluster order follows the smallest member value.
FeatureEncoding fit_encoding(const ContextMatrix& matrix, const KMeansParams& params);

struct EncoderParams {
    std::size_t bins = 10;
    KMeansParams kmeans;
};

FeatureEncoding fit_feature(const ConnectionGroups& groups, Feature feature, const EncoderParams& params);

}  // namespace flowstate
