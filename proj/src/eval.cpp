#include "flowstate/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowstate/error.hpp"

namespace flowstate {

RocCurve roc_auc(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) throw ConfigError("roc: scores and labels differ in length");
    std::size_t positives = 0, negatives = 0;
    for (auto l : labels) {
        if (l == Label::malicious) ++positives;
        else if (l == Label::benign) ++negatives;
        else throw ConfigError("roc: unknown label");
    }
    if (positives == 0 || negatives == 0) throw ConfigError("roc: need both benign and malicious items");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    double area = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        const std::size_t tp0 = tp, fp0 = fp;
        for (; i < order.size() && scores[order[i]] == s; ++i) {
            if (labels[order[i]] == Label::malicious) ++tp;
            else ++fp;
        }
        // Trapezoid in count units; normalized once at the end.
        area += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0) / 2.0;
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                                static_cast<double>(tp) / static_cast<double>(positives)});
    }
    curve.auc = area / (static_cast<double>(positives) * static_cast<double>(negatives));
    return curve;
}

LabelledScores known_only(std::span<const double> scores, std::span<const Label> labels) {
    LabelledScores out;
    for (std::size_t i = 0; i < scores.size() && i < labels.size(); ++i) {
        if (labels[i] == Label::unknown) continue;
        out.scores.push_back(scores[i]);
        out.labels.push_back(labels[i]);
    }
    return out;
}

void write_roc_points(std::ostream& out, const RocCurve& curve) {
    out.precision(17);
    for (const auto& p : curve.points) out << p.fpr << ' ' << p.tpr << '\n';
}

double interpolated_quantile(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw ConfigError("quantile of empty data");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

BoxplotBaseline::Values BoxplotBaseline::values_of(const FlowRecord& flow) {
    return {flow.duration, static_cast<double>(flow.num_bytes), static_cast<double>(flow.num_packets)};
}

BoxplotBaseline BoxplotBaseline::fit(std::span<const Values> training) {
    if (training.empty()) throw ConfigError("boxplot baseline needs training flows");
    BoxplotBaseline b;
    std::vector<double> column(training.size());
    for (std::size_t f = 0; f < kFeatures; ++f) {
        for (std::size_t i = 0; i < training.size(); ++i) column[i] = training[i][f];
        std::sort(column.begin(), column.end());
        const double q1 = interpolated_quantile(column, 0.25);
        const double q3 = interpolated_quantile(column, 0.75);
        const double iqr = q3 - q1;
        b.lower_[f] = q1 - 1.5 * iqr;
        b.upper_[f] = q3 + 1.5 * iqr;
    }
    return b;
}

BoxplotBaseline BoxplotBaseline::fit(std::span<const FlowRecord> training) {
    std::vector<Values> values;
    values.reserve(training.size());
    for (const auto& f : training) values.push_back(values_of(f));
    return fit(values);
}

double BoxplotBaseline::score(const Values& values) const {
    double outside = 0.0;
    for (std::size_t f = 0; f < kFeatures; ++f)
        if (values[f] < lower_[f] || values[f] > upper_[f]) outside += 1.0;
    return outside;
}

}  // namespace flowstate
