#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowstate/attacks.hpp"
#include "flowstate/automaton.hpp"
#include "flowstate/bundle.hpp"
#include "flowstate/encoder.hpp"
#include "flowstate/eval.hpp"
#include "flowstate/scorer.hpp"
#include "flowstate/tracegen.hpp"

namespace flowstate {

/// The four attacks with default parameters.
std::vector<AttackSpec> default_attacks();

struct PipelineConfig {
    std::filesystem::path train_path;
    std::filesystem::path test_path;
    ColumnMapping mapping = ColumnMapping::identity();
    std::size_t max_row_errors = 1000;
    /// Keep only benign-labelled flows for training. Without it, a training
    /// file containing malicious rows is rejected.
    bool train_benign_only = false;

    std::vector<Feature> features = default_feature_order();
    std::size_t bins = 10;
    std::size_t clusters = 20;
    std::map<Feature, std::size_t> clusters_per_feature;
    std::size_t restarts = 10;
    std::size_t silhouette_sample = 4000;

    WindowParams window;
    MergeParams merge;

    double smoothing = 1.0;
    TraceAggregation aggregation = TraceAggregation::last_visit;
    /// Fixed alert threshold; otherwise the model's validation quantile.
    std::optional<double> threshold;
    double threshold_quantile = 0.95;
    std::size_t top_k = 10;

    std::vector<std::string> models = {"flowstate", "markov", "boxplot"};
    std::vector<AttackSpec> attacks = default_attacks();
    bool include_clean = true;
    std::size_t repetitions = 10;
    std::uint64_t seed = 0;

    /// Relative paths inside `j` are resolved against `base_dir`.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    EncoderParams encoder_params(Feature feature, std::uint64_t seed) const;
    void validate() const;
};

ColumnMapping mapping_from_json(const nlohmann::json& j);
nlohmann::json mapping_to_json(const ColumnMapping& mapping);

std::string_view to_string(TraceAggregation aggregation);
TraceAggregation parse_aggregation(std::string_view text);

/// Ingests with the configured mapping and error cap; row errors are
/// returned alongside the records.
IngestResult load_flows(const std::filesystem::path& path, const PipelineConfig& config);

struct TrainResult {
    ModelBundle bundle;
    std::vector<Trace> traces;
    std::size_t flows_used = 0;
    std::size_t pta_states = 0;
};

/// sort -> group -> encode -> windows -> prefix tree -> merge. The alert
/// threshold is the configured quantile of the training traces' own
/// rolling scores.
TrainResult train_model(std::span<const FlowRecord> flows, const PipelineConfig& config, std::uint64_t seed);

struct ScoreResult {
    std::vector<Trace> traces;
    std::vector<TraceVerdict> verdicts;
    std::vector<AnomalyGroup> groups;
    double threshold = 0.0;
};

ScoreResult score_flows(const ModelBundle& bundle, std::span<const FlowRecord> flows, const PipelineConfig& config);

/// Trace scores for one detector on one condition.
struct ModelScores {
    std::vector<double> scores;
    std::vector<Label> labels;
};

struct ExperimentCell {
    std::string model;
    std::string condition;
    std::size_t run = 0;
    double auc = 0.0;
    RocCurve roc;
};

struct ExperimentReport {
    std::vector<ExperimentCell> cells;
    std::vector<std::string> models;
    std::vector<std::string> conditions;

    /// Arithmetic mean AUC over runs; NaN when no cell matches.
    double mean_auc(std::string_view model, std::string_view condition) const;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Every configured model x {clean, attacks} x repetitions. Repetition r
/// uses seed config.seed + r for clustering and attack sampling.
ExperimentReport run_experiment(std::span<const FlowRecord> train, std::span<const FlowRecord> test,
                                const PipelineConfig& config, const ProgressFn& progress = {});

/// results.csv (model,condition,run,auc), summary.txt and roc/*.txt.
void write_report(const std::filesystem::path& dir, const ExperimentReport& report);
std::string format_summary(const ExperimentReport& report);

}  // namespace flowstate
