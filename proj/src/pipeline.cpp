#include "flowstate/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "flowstate/csv.hpp"
#include "flowstate/error.hpp"
#include "flowstate/markov.hpp"

namespace flowstate {

using nlohmann::json;

std::string_view to_string(TraceAggregation aggregation) {
    switch (aggregation) {
        case TraceAggregation::last_visit: return "last_visit";
        case TraceAggregation::max_visit: return "max_visit";
        case TraceAggregation::visit_sum: return "visit_sum";
    }
    return "last_visit";
}

TraceAggregation parse_aggregation(std::string_view text) {
    if (text == "last_visit") return TraceAggregation::last_visit;
    if (text == "max_visit") return TraceAggregation::max_visit;
    if (text == "visit_sum") return TraceAggregation::visit_sum;
    throw ConfigError("unknown aggregation '" + std::string(text) + "'");
}

ColumnMapping mapping_from_json(const json& j) {
    ColumnMapping m = ColumnMapping::identity();
    if (j.contains("columns")) m.columns = j.at("columns").get<std::map<std::string, std::string>>();
    if (j.contains("timestamp_format")) m.timestamp_format = j.at("timestamp_format").get<std::string>();
    if (j.contains("protocol_map")) m.protocol_map = j.at("protocol_map").get<std::map<std::string, std::string>>();
    if (j.contains("label_map")) m.label_map = j.at("label_map").get<std::map<std::string, std::string>>();
    return m;
}

json mapping_to_json(const ColumnMapping& m) {
    return json{{"columns", m.columns},
                {"timestamp_format", m.timestamp_format},
                {"protocol_map", m.protocol_map},
                {"label_map", m.label_map}};
}

std::vector<AttackSpec> default_attacks() {
    std::vector<AttackSpec> specs;
    for (auto kind : all_attack_kinds()) specs.push_back(AttackSpec{kind});
    return specs;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.empty() || path.is_absolute() || base.empty()) return path;
    return base / path;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    PipelineConfig c;
    try {
        if (j.contains("train")) c.train_path = resolve(base_dir, j.at("train").get<std::string>());
        if (j.contains("test")) c.test_path = resolve(base_dir, j.at("test").get<std::string>());
        if (j.contains("mapping")) c.mapping = mapping_from_json(j.at("mapping"));
        read_opt(j, "max_row_errors", c.max_row_errors);
        read_opt(j, "train_benign_only", c.train_benign_only);
        if (j.contains("features")) {
            c.features.clear();
            for (const auto& f : j.at("features")) c.features.push_back(parse_feature(f.get<std::string>()));
        }
        if (j.contains("encoder")) {
            const auto& e = j.at("encoder");
            read_opt(e, "bins", c.bins);
            read_opt(e, "clusters", c.clusters);
            read_opt(e, "restarts", c.restarts);
            read_opt(e, "silhouette_sample", c.silhouette_sample);
            if (e.contains("clusters_per_feature"))
                for (const auto& [name, k] : e.at("clusters_per_feature").items())
                    c.clusters_per_feature[parse_feature(name)] = k.get<std::size_t>();
        }
        if (j.contains("window")) {
            read_opt(j.at("window"), "length", c.window.length);
            read_opt(j.at("window"), "stride", c.window.stride);
        }
        if (j.contains("merge")) {
            read_opt(j.at("merge"), "alpha", c.merge.alpha);
            read_opt(j.at("merge"), "min_count", c.merge.min_count);
        }
        if (j.contains("scoring")) {
            const auto& s = j.at("scoring");
            read_opt(s, "smoothing", c.smoothing);
            if (s.contains("aggregation")) c.aggregation = parse_aggregation(s.at("aggregation").get<std::string>());
            if (s.contains("threshold") && !s.at("threshold").is_null()) c.threshold = s.at("threshold").get<double>();
            read_opt(s, "threshold_quantile", c.threshold_quantile);
            read_opt(s, "top_k", c.top_k);
        }
        if (j.contains("experiment")) {
            const auto& x = j.at("experiment");
            read_opt(x, "models", c.models);
            read_opt(x, "repetitions", c.repetitions);
            read_opt(x, "include_clean", c.include_clean);
            if (x.contains("attacks")) {
                c.attacks.clear();
                for (const auto& a : x.at("attacks")) {
                    AttackSpec spec;
                    if (a.is_string()) {
                        spec.kind = parse_attack_kind(a.get<std::string>());
                    } else {
                        spec.kind = parse_attack_kind(a.at("kind").get<std::string>());
                        read_opt(a, "min_count", spec.min_count);
                        read_opt(a, "window", spec.window);
                        read_opt(a, "seed", spec.seed);
                    }
                    c.attacks.push_back(spec);
                }
            }
        }
        read_opt(j, "seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

json PipelineConfig::to_json() const {
    json features_json = json::array();
    for (auto f : features) features_json.push_back(std::string(to_string(f)));
    json per_feature = json::object();
    for (const auto& [f, k] : clusters_per_feature) per_feature[std::string(to_string(f))] = k;
    json attacks_json = json::array();
    for (const auto& a : attacks)
        attacks_json.push_back(
            {{"kind", std::string(to_string(a.kind))}, {"min_count", a.min_count}, {"window", a.window}, {"seed", a.seed}});
    return json{
        {"train", train_path.string()},
        {"test", test_path.string()},
        {"mapping", mapping_to_json(mapping)},
        {"max_row_errors", max_row_errors},
        {"train_benign_only", train_benign_only},
        {"features", features_json},
        {"encoder",
         {{"bins", bins},
          {"clusters", clusters},
          {"clusters_per_feature", per_feature},
          {"restarts", restarts},
          {"silhouette_sample", silhouette_sample}}},
        {"window", {{"length", window.length}, {"stride", window.stride}}},
        {"merge", {{"alpha", merge.alpha}, {"min_count", merge.min_count}}},
        {"scoring",
         {{"smoothing", smoothing},
          {"aggregation", std::string(to_string(aggregation))},
          {"threshold", threshold ? json(*threshold) : json(nullptr)},
          {"threshold_quantile", threshold_quantile},
          {"top_k", top_k}}},
        {"experiment",
         {{"models", models}, {"repetitions", repetitions}, {"include_clean", include_clean}, {"attacks", attacks_json}}},
        {"seed", seed},
    };
}

void PipelineConfig::validate() const {
    if (features.empty()) throw ConfigError("config: at least one feature is required");
    for (std::size_t i = 0; i < features.size(); ++i)
        for (std::size_t k = i + 1; k < features.size(); ++k)
            if (features[i] == features[k]) throw ConfigError("config: duplicate feature");
    if (bins < 1) throw ConfigError("config: encoder.bins must be >= 1");
    if (clusters < 1) throw ConfigError("config: encoder.clusters must be >= 1");
    for (const auto& [f, k] : clusters_per_feature)
        if (k < 1) throw ConfigError("config: clusters for " + std::string(to_string(f)) + " must be >= 1");
    if (restarts < 1) throw ConfigError("config: encoder.restarts must be >= 1");
    if (window.length < 1 || window.stride < 1) throw ConfigError("config: window length and stride must be >= 1");
    if (!(merge.alpha > 0.0 && merge.alpha < 1.0)) throw ConfigError("config: merge.alpha must lie in (0, 1)");
    if (!(smoothing >= 0.0)) throw ConfigError("config: scoring.smoothing must be >= 0");
    if (!(threshold_quantile >= 0.0 && threshold_quantile <= 1.0))
        throw ConfigError("config: scoring.threshold_quantile must lie in [0, 1]");
    if (repetitions < 1) throw ConfigError("config: experiment.repetitions must be >= 1");
    for (const auto& m : models)
        if (m != "flowstate" && m != "markov" && m != "boxplot") throw ConfigError("config: unknown model '" + m + "'");
    for (const auto& a : attacks)
        if (a.window < 1 || a.min_count < 1) throw ConfigError("config: attack window and min_count must be >= 1");
}

EncoderParams PipelineConfig::encoder_params(Feature feature, std::uint64_t run_seed) const {
    EncoderParams p;
    p.bins = bins;
    auto it = clusters_per_feature.find(feature);
    p.kmeans.clusters = it == clusters_per_feature.end() ? clusters : it->second;
    p.kmeans.restarts = restarts;
    p.kmeans.seed = run_seed;
    p.kmeans.silhouette_sample = silhouette_sample;
    return p;
}

IngestResult load_flows(const std::filesystem::path& path, const PipelineConfig& config) {
    IngestOptions options;
    options.max_row_errors = config.max_row_errors;
    return ingest_csv(path, config.mapping, options);
}

TrainResult train_model(std::span<const FlowRecord> flows, const PipelineConfig& config, std::uint64_t seed) {
    config.validate();
    std::vector<FlowRecord> usable;
    usable.reserve(flows.size());
    for (const auto& f : flows) {
        if (f.label == Label::malicious && !config.train_benign_only)
            throw ConfigError("training data contains malicious flows (line " + std::to_string(f.line_index) +
                              "); enable train_benign_only to filter them");
        if (config.train_benign_only && f.label != Label::benign) continue;
        usable.push_back(f);
    }

    const auto sorted = sort_flows(std::move(usable));
    const auto groups = group_by_connection(sorted);

    TrainResult result;
    result.flows_used = sorted.size();
    EncodingSet encodings;
    encodings.features = config.features;
    for (Feature f : config.features) {
        if (!is_numeric(f)) continue;
        if (sorted.empty()) break;
        encodings.encodings.emplace(f, fit_feature(groups, f, config.encoder_params(f, seed)));
    }

    result.traces = make_traces(sorted, encodings, config.window);
    if (result.traces.empty())
        throw ConfigError("no traces of length " + std::to_string(config.window.length) + " in training data");

    const Automaton pta = build_pta(result.traces);
    result.pta_states = pta.size();
    Automaton machine = merge_states(pta, config.merge);

    ScoreLedger ledger = ScoreLedger::for_machine(machine, config.smoothing);
    const auto verdicts = score_stream(machine, ledger, result.traces, config.aggregation);
    std::vector<double> scores;
    scores.reserve(verdicts.size());
    for (const auto& v : verdicts) scores.push_back(v.anomaly_score);

    result.bundle.encodings = std::move(encodings);
    result.bundle.machine = std::move(machine);
    result.bundle.threshold = percentile(std::move(scores), config.threshold_quantile);
    result.bundle.config_json = config.to_json().dump();
    return result;
}

ScoreResult score_flows(const ModelBundle& bundle, std::span<const FlowRecord> flows, const PipelineConfig& config) {
    ScoreResult result;
    result.traces = make_traces(flows, bundle.encodings, config.window);
    ScoreLedger ledger = ScoreLedger::for_machine(bundle.machine, config.smoothing);
    result.verdicts = score_stream(bundle.machine, ledger, result.traces, config.aggregation);
    result.threshold = config.threshold.value_or(bundle.threshold);
    result.groups = group_anomalies(result.verdicts, result.threshold);
    return result;
}

double ExperimentReport::mean_auc(std::string_view model, std::string_view condition) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : cells) {
        if (c.model != model || c.condition != condition) continue;
        sum += c.auc;
        ++n;
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

namespace {

ModelScores boxplot_trace_scores(const BoxplotBaseline& box, std::span<const Trace> traces,
                                 std::span<const FlowRecord> flows) {
    std::unordered_map<std::size_t, double> by_line;
    for (const auto& f : flows) by_line.emplace(f.line_index, box.score(f));
    ModelScores out;
    for (const auto& t : traces) {
        double worst = 0.0;
        for (auto line : t.line_span) worst = std::max(worst, by_line.at(line));
        out.scores.push_back(worst);
        out.labels.push_back(t.label);
    }
    return out;
}

}  // namespace

ExperimentReport run_experiment(std::span<const FlowRecord> train, std::span<const FlowRecord> test,
                                const PipelineConfig& config, const ProgressFn& progress) {
    config.validate();
    ExperimentReport report;
    report.models = config.models;

    std::vector<std::pair<std::string, std::optional<AttackSpec>>> conditions;
    if (config.include_clean) conditions.emplace_back("clean", std::nullopt);
    for (const auto& a : config.attacks) conditions.emplace_back(std::string(to_string(a.kind)), a);
    for (const auto& [name, spec] : conditions) report.conditions.push_back(name);

    auto wants = [&](std::string_view m) { return std::find(config.models.begin(), config.models.end(), m) != config.models.end(); };

    std::optional<BoxplotBaseline> box;
    if (wants("boxplot")) {
        std::vector<FlowRecord> benign;
        for (const auto& f : train)
            if (!config.train_benign_only || f.label == Label::benign) benign.push_back(f);
        box = BoxplotBaseline::fit(std::span<const FlowRecord>(benign));
    }

    for (std::size_t run = 0; run < config.repetitions; ++run) {
        const std::uint64_t seed = config.seed + run;
        if (progress) progress("run " + std::to_string(run + 1) + "/" + std::to_string(config.repetitions) + ": training");
        const TrainResult trained = train_model(train, config, seed);
        std::optional<MarkovBaseline> mc;
        if (wants("markov")) mc = MarkovBaseline::fit(trained.traces);

        for (const auto& [name, spec] : conditions) {
            std::vector<FlowRecord> flows(test.begin(), test.end());
            if (spec) {
                AttackSpec s = *spec;
                s.seed = spec->seed + seed;
                flows = apply_attack(flows, s);
            }
            const auto traces = make_traces(flows, trained.bundle.encodings, config.window);

            auto record = [&](const std::string& model, const ModelScores& ms) {
                const auto known = known_only(ms.scores, ms.labels);
                ExperimentCell cell;
                cell.model = model;
                cell.condition = name;
                cell.run = run;
                cell.roc = roc_auc(known.scores, known.labels);
                cell.auc = cell.roc.auc;
                report.cells.push_back(std::move(cell));
            };

            for (const auto& model : config.models) {
                ModelScores ms;
                if (model == "flowstate") {
                    ScoreLedger ledger = ScoreLedger::for_machine(trained.bundle.machine, config.smoothing);
                    for (const auto& v : score_stream(trained.bundle.machine, ledger, traces, config.aggregation)) {
                        ms.scores.push_back(v.anomaly_score);
                        ms.labels.push_back(v.label);
                    }
                } else if (model == "markov") {
                    for (const auto& t : traces) {
                        ms.scores.push_back(mc->score(t));
                        ms.labels.push_back(t.label);
                    }
                } else {
                    ms = boxplot_trace_scores(*box, traces, flows);
                }
                record(model, ms);
            }
        }
    }
    return report;
}

std::string format_summary(const ExperimentReport& report) {
    std::ostringstream out;
    out << std::left << std::setw(10) << "model";
    for (const auto& c : report.conditions) out << std::right << std::setw(11) << c;
    out << '\n';
    for (const auto& m : report.models) {
        out << std::left << std::setw(10) << m;
        for (const auto& c : report.conditions)
            out << std::right << std::setw(11) << std::fixed << std::setprecision(3) << report.mean_auc(m, c);
        out << '\n';
    }
    return out.str();
}

void write_report(const std::filesystem::path& dir, const ExperimentReport& report) {
    std::filesystem::create_directories(dir / "roc");
    {
        std::ofstream out(dir / "results.csv");
        csv::write_row(out, {"model", "condition", "run", "auc"});
        for (const auto& c : report.cells) {
            std::ostringstream auc;
            auc << std::setprecision(17) << c.auc;
            csv::write_row(out, {c.model, c.condition, std::to_string(c.run), auc.str()});
        }
    }
    {
        std::ofstream out(dir / "summary.txt");
        out << "mean AUC over runs\n" << format_summary(report);
    }
    for (const auto& c : report.cells) {
        std::ofstream out(dir / "roc" / (c.model + "_" + c.condition + "_run" + std::to_string(c.run) + ".txt"));
        write_roc_points(out, c.roc);
    }
}

}  // namespace flowstate
