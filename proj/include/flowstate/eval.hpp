#pragma once

#include <array>
#include <ostream>
#include <span>
#include <vector>

#include "flowstate/flow.hpp"

namespace flowstate {

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // (0,0) ... (1,1)
    double auc = 0.0;
};

/// Sweeps thresholds over the distinct scores, highest first; tied scores
/// form one step. Only benign and malicious labels are allowed; throws
/// ConfigError when a class is missing or lengths differ.
RocCurve roc_auc(std::span<const double> scores, std::span<const Label> labels);

/// Scores and labels with unknown-labelled items dropped.
struct LabelledScores {
    std::vector<double> scores;
    std::vector<Label> labels;
};
LabelledScores known_only(std::span<const double> scores, std::span<const Label> labels);

void write_roc_points(std::ostream& out, const RocCurve& curve);

/// Per-feature interquartile fences over duration, bytes and packets. A
/// flow scores the number of features falling outside
/// [Q1 - 1.5 IQR, Q3 + 1.5 IQR].
class BoxplotBaseline {
public:
    static constexpr std::size_t kFeatures = 3;
    using Values = std::array<double, kFeatures>;

    static Values values_of(const FlowRecord& flow);
    static BoxplotBaseline fit(std::span<const Values> training);
    static BoxplotBaseline fit(std::span<const FlowRecord> training);

    double score(const Values& values) const;
    double score(const FlowRecord& flow) const { return score(values_of(flow)); }

    const Values& lower() const { return lower_; }
    const Values& upper() const { return upper_; }

private:
    Values lower_{};
    Values upper_{};
};

/// Linear-interpolation quantile of sorted data (q in [0,1]).
double interpolated_quantile(std::span<const double> sorted, double q);

}  // namespace flowstate
