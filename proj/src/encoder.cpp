#include "flowstate/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "flowstate/error.hpp"

namespace flowstate {

std::string_view to_string(Feature feature) {
    switch (feature) {
        case Feature::duration: return "duration";
        case Feature::protocol: return "protocol";
        case Feature::num_bytes: return "num_bytes";
        case Feature::num_packets: return "num_packets";
    }
    return "?";
}

Feature parse_feature(std::string_view name) {
    if (name == "duration") return Feature::duration;
    if (name == "protocol") return Feature::protocol;
    if (name == "num_bytes" || name == "bytes") return Feature::num_bytes;
    if (name == "num_packets" || name == "packets") return Feature::num_packets;
    throw ConfigError("unknown feature '" + std::string(name) + "'");
}

bool is_numeric(Feature feature) { return feature != Feature::protocol; }

double feature_value(const FlowRecord& flow, Feature feature) {
    switch (feature) {
        case Feature::duration: return flow.duration;
        case Feature::num_bytes: return static_cast<double>(flow.num_bytes);
        case Feature::num_packets: return static_cast<double>(flow.num_packets);
        case Feature::protocol: break;
    }
    throw ConfigError("feature protocol is categorical");
}

const std::vector<Feature>& default_feature_order() {
    static const std::vector<Feature> order = {Feature::duration, Feature::protocol, Feature::num_bytes,
                                               Feature::num_packets};
    return order;
}

std::vector<double> ContextVector::to_point() const {
    std::vector<double> p;
    p.reserve(prev_bins.size() + next_bins.size() + 3);
    for (auto c : prev_bins) p.push_back(static_cast<double>(c));
    for (auto c : next_bins) p.push_back(static_cast<double>(c));
    p.push_back(static_cast<double>(prev_self));
    p.push_back(static_cast<double>(next_self));
    p.push_back(log_freq);
    return p;
}

std::vector<double> quantile_edges(std::vector<double> sample, std::size_t bins) {
    std::vector<double> edges;
    if (sample.empty() || bins < 2) return edges;
    std::sort(sample.begin(), sample.end());
    const std::size_t n = sample.size();
    for (std::size_t k = 1; k < bins; ++k) {
        std::size_t rank = (k * n + bins - 1) / bins;  // ceil(k/bins * n)
        rank = std::max<std::size_t>(rank, 1);
        const double edge = sample[rank - 1];
        if (edges.empty() || edges.back() < edge) edges.push_back(edge);
    }
    return edges;
}

std::size_t bin_of(std::span<const double> edges, double value) {
    return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
}

ContextMatrix build_context_matrix(const ConnectionGroups& groups, Feature feature, std::size_t bins) {
    if (bins < 1) throw ConfigError("bin count must be >= 1");
    if (!is_numeric(feature)) throw ConfigError("cannot build contexts for categorical feature protocol");

    ContextMatrix m;
    m.feature = feature;
    m.bins = bins;

    std::map<double, std::uint64_t> occurrences;
    std::vector<double> preds, succs;
    for (const auto& g : groups) {
        for (std::size_t i = 0; i < g.flows.size(); ++i) {
            const double v = feature_value(g.flows[i], feature);
            ++occurrences[v];
            if (i + 1 < g.flows.size()) {
                const double w = feature_value(g.flows[i + 1], feature);
                if (v != w) {
                    preds.push_back(v);
                    succs.push_back(w);
                }
            }
        }
    }
    m.prev_edges = quantile_edges(preds, bins);
    m.next_edges = quantile_edges(succs, bins);

    std::map<double, std::size_t> slot;
    for (const auto& [v, count] : occurrences) {
        slot[v] = m.values.size();
        m.values.push_back(v);
        ContextVector cv;
        cv.prev_bins.assign(bins, 0);
        cv.next_bins.assign(bins, 0);
        cv.log_freq = std::log1p(static_cast<double>(count));
        m.vectors.push_back(std::move(cv));
    }

    for (const auto& g : groups) {
        for (std::size_t i = 0; i + 1 < g.flows.size(); ++i) {
            const double a = feature_value(g.flows[i], feature);
            const double b = feature_value(g.flows[i + 1], feature);
            auto& va = m.vectors[slot[a]];
            auto& vb = m.vectors[slot[b]];
            if (a == b) {
                ++va.next_self;
                ++vb.prev_self;
            } else {
                ++va.next_bins[bin_of(m.next_edges, b)];
                ++vb.prev_bins[bin_of(m.prev_edges, a)];
            }
        }
    }
    return m;
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

struct LloydRun {
    std::vector<std::size_t> labels;
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;
};

LloydRun lloyd(std::span<const std::vector<double>> points, std::vector<std::vector<double>> centroids,
               std::size_t max_iterations) {
    const std::size_t n = points.size();
    const std::size_t k = centroids.size();
    const std::size_t dim = points.front().size();
    LloydRun run;
    run.labels.assign(n, std::numeric_limits<std::size_t>::max());

    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = squared_distance(points[i], centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (run.labels[i] != best) {
                run.labels[i] = best;
                changed = true;
            }
        }
        if (!changed) break;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> sizes(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[run.labels[i]];
            for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
            ++sizes[run.labels[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] == 0) continue;  // empty cluster keeps its centroid
            for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / static_cast<double>(sizes[c]);
        }
    }
    run.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) run.inertia += squared_distance(points[i], centroids[run.labels[i]]);
    run.centroids = std::move(centroids);
    return run;
}

// Silhouette over the members `subset` of `points`, measuring distances
// against all points.
double silhouette_over(std::span<const std::vector<double>> points, std::span<const std::size_t> labels,
                       std::span<const std::size_t> subset) {
    const std::size_t k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::size_t> sizes(k, 0);
    for (auto l : labels) ++sizes[l];
    const auto nonempty = std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; });
    if (nonempty < 2) return 0.0;

    double total = 0.0;
    std::vector<double> sum(k);
    for (std::size_t i : subset) {
        const std::size_t own = labels[i];
        if (sizes[own] <= 1) continue;
        std::fill(sum.begin(), sum.end(), 0.0);
        for (std::size_t j = 0; j < points.size(); ++j) {
            if (j == i) continue;
            sum[labels[j]] += std::sqrt(squared_distance(points[i], points[j]));
        }
        const double a = sum[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == own || sizes[c] == 0) continue;
            b = std::min(b, sum[c] / static_cast<double>(sizes[c]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(subset.size());
}

std::vector<std::size_t> silhouette_subset(std::size_t n, std::size_t cap, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (cap == 0 || n <= cap) return idx;
    std::mt19937_64 rng(seed ^ 0x5f3759dfULL);
    for (std::size_t i = 0; i < cap; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

double silhouette_score(std::span<const std::vector<double>> points, std::span<const std::size_t> labels) {
    if (points.size() != labels.size()) throw InternalError("silhouette: points/labels length mismatch");
    if (points.empty()) return 0.0;
    const auto all = silhouette_subset(points.size(), 0, 0);
    return silhouette_over(points, labels, all);
}

ClusterResult kmeans(std::span<const std::vector<double>> points, const KMeansParams& params) {
    if (points.empty()) throw ConfigError("kmeans: no points");
    if (params.clusters < 1) throw ConfigError("kmeans: cluster count must be >= 1");
    if (params.restarts < 1) throw ConfigError("kmeans: restarts must be >= 1");
    const std::size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw ConfigError("kmeans: points differ in dimension");

    // Distinct points, in first-appearance order, are the initialization pool.
    std::vector<std::size_t> distinct;
    {
        std::map<std::vector<double>, std::size_t> seen;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (seen.emplace(points[i], i).second) distinct.push_back(i);
    }
    if (params.clusters > distinct.size())
        throw ConfigError("kmeans: " + std::to_string(params.clusters) + " clusters requested but only " +
                          std::to_string(distinct.size()) + " distinct points");

    const auto subset = silhouette_subset(points.size(), params.silhouette_sample, params.seed);

    ClusterResult best;
    best.silhouette = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < params.restarts; ++r) {
        std::seed_seq seq{static_cast<std::uint32_t>(params.seed), static_cast<std::uint32_t>(params.seed >> 32),
                          static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(seq);
        std::vector<std::size_t> pool = distinct;
        std::vector<std::vector<double>> init;
        for (std::size_t c = 0; c < params.clusters; ++c) {
            std::uniform_int_distribution<std::size_t> pick(c, pool.size() - 1);
            std::swap(pool[c], pool[pick(rng)]);
            init.push_back(points[pool[c]]);
        }
        LloydRun run = lloyd(points, std::move(init), params.max_iterations);
        const double sil = silhouette_over(points, run.labels, subset);
        best.restart_silhouettes.push_back(sil);
        if (sil > best.silhouette) {
            best.silhouette = sil;
            best.best_restart = r;
            best.labels = std::move(run.labels);
            best.centroids = std::move(run.centroids);
            best.inertia = run.inertia;
        }
    }
    return best;
}

std::uint32_t FeatureEncoding::encode(double value) const {
    if (values.empty()) throw InternalError("encoding for " + std::string(to_string(feature)) + " is empty");
    auto it = std::lower_bound(values.begin(), values.end(), value);
    std::size_t idx;
    if (it == values.end()) {
        idx = values.size() - 1;
    } else if (*it == value || it == values.begin()) {
        idx = static_cast<std::size_t>(it - values.begin());
    } else {
        const std::size_t hi = static_cast<std::size_t>(it - values.begin());
        const double below = value - values[hi - 1];
        const double above = values[hi] - value;
        idx = above < below ? hi : hi - 1;
    }
    return labels[idx];
}

FeatureEncoding fit_encoding(const ContextMatrix& matrix, const KMeansParams& params) {
    if (matrix.vectors.empty())
        throw ConfigError("no training values for feature " + std::string(to_string(matrix.feature)));
    std::vector<std::vector<double>> points;
    points.reserve(matrix.vectors.size());
    for (const auto& v : matrix.vectors) points.push_back(v.to_point());

    std::size_t distinct = 0;
    {
        std::vector<std::vector<double>> sorted = points;
        std::sort(sorted.begin(), sorted.end());
        distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    }
    KMeansParams p = params;
    p.clusters = std::min(params.clusters, distinct);
    const ClusterResult result = kmeans(points, p);

    FeatureEncoding enc;
    enc.feature = matrix.feature;
    enc.bins = matrix.bins;
    enc.prev_edges = matrix.prev_edges;
    enc.next_edges = matrix.next_edges;
    enc.values = matrix.values;
    enc.silhouette = result.silhouette;
    enc.seed = params.seed;

    std::vector<std::int64_t> relabel(p.clusters, -1);
    std::uint32_t next = 0;
    enc.labels.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto& l = relabel[result.labels[i]];
        if (l < 0) l = next++;
        enc.labels.push_back(static_cast<std::uint32_t>(l));
    }
    enc.clusters = next;
    return enc;
}

FeatureEncoding fit_feature(const ConnectionGroups& groups, Feature feature, const EncoderParams& params) {
    return fit_encoding(build_context_matrix(groups, feature, params.bins), params.kmeans);
}

}  // namespace flowstate
