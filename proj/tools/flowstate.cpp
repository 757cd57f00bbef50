#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowstate/error.hpp"
#include "flowstate/pipeline.hpp"
#include "flowstate/service.hpp"
#include "flowstate/synthetic.hpp"

namespace fs = std::filesystem;
using namespace flowstate;
using nlohmann::json;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

// Prefixes errors with the pipeline stage they came from.
template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(name) + ": " + e.what());
    } catch (const ParseError& e) {
        throw ParseError(std::string(name) + ": " + e.what());
    } catch (const InternalError& e) {
        throw InternalError(std::string(name) + ": " + e.what());
    } catch (const Error& e) {
        throw Error(std::string(name) + ": " + e.what());
    }
}

PipelineConfig base_config(const Globals& g) {
    PipelineConfig config = g.config.empty() ? PipelineConfig{} : PipelineConfig::load(g.config);
    if (g.seed) config.seed = *g.seed;
    return config;
}

PipelineConfig bundle_config(const ModelBundle& bundle) {
    try {
        return PipelineConfig::from_json(json::parse(bundle.config_json));
    } catch (const json::exception& e) {
        throw ParseError(std::string("model config snapshot: ") + e.what());
    }
}

std::vector<FlowRecord> read_flows(const fs::path& path, const PipelineConfig& config, bool verbose) {
    if (path.empty()) throw ConfigError("no input file given");
    if (!fs::exists(path)) throw ConfigError("input file not found: " + path.string());
    IngestResult result = load_flows(path, config);
    if (!result.errors.empty()) {
        std::cerr << path.string() << ": skipped " << result.errors.size() << " malformed rows\n";
        if (verbose)
            for (const auto& e : result.errors) std::cerr << "  line " << e.line_index << ": " << e.message << '\n';
    }
    return std::move(result.records);
}

int cmd_train(const Globals& g, const std::string& train, const std::string& out, std::optional<double> alpha,
              std::optional<std::uint64_t> min_count) {
    PipelineConfig config = base_config(g);
    if (!train.empty()) config.train_path = train;
    if (alpha) config.merge.alpha = *alpha;
    if (min_count) config.merge.min_count = *min_count;
    config.validate();

    const auto flows = stage("ingest", [&] { return read_flows(config.train_path, config, g.verbose); });
    const TrainResult result = stage("train", [&] { return train_model(flows, config, config.seed); });
    stage("save", [&] {
        save_bundle(fs::path(out), result.bundle);
        return 0;
    });

    std::cout << "flows used:      " << result.flows_used << '\n'
              << "traces:          " << result.traces.size() << '\n'
              << "prefix tree:     " << result.pta_states << " states\n"
              << "states:          " << result.bundle.machine.size() << '\n'
              << "alphabet size:   " << result.bundle.machine.alphabet().size() << '\n'
              << "alert threshold: " << result.bundle.threshold << '\n';
    for (const auto& [feature, enc] : result.bundle.encodings.encodings)
        std::cout << "silhouette " << to_string(feature) << ": " << std::setprecision(4) << enc.silhouette << " (K="
                  << enc.clusters << ")\n";
    std::cout << "model written to " << out << '\n';
    return 0;
}

int cmd_score(const Globals& g, const std::string& model, const std::string& test, const std::string& out,
              std::optional<double> threshold) {
    const ModelBundle bundle = stage("load model", [&] { return load_bundle(fs::path(model)); });
    PipelineConfig config = bundle_config(bundle);
    if (threshold) config.threshold = *threshold;
    if (!test.empty()) config.test_path = test;

    const auto flows = stage("ingest", [&] { return read_flows(config.test_path, config, g.verbose); });
    const ScoreResult result = stage("score", [&] { return score_flows(bundle, flows, config); });
    stage("write", [&] {
        write_score_outputs(out, result, json{{"model", fs::absolute(model).string()},
                                              {"flows", fs::absolute(config.test_path).string()}});
        return 0;
    });

    double mean = 0.0;
    for (const auto& v : result.verdicts) mean += v.anomaly_score;
    if (!result.verdicts.empty()) mean /= static_cast<double>(result.verdicts.size());
    std::size_t alerts = 0;
    for (const auto& grp : result.groups) alerts += grp.size();
    std::cout << "traces:     " << result.verdicts.size() << '\n'
              << "mean score: " << mean << '\n'
              << "threshold:  " << result.threshold << '\n'
              << "alerts:     " << alerts << " in " << result.groups.size() << " groups\n";
    for (std::size_t i = 0; i < result.groups.size() && i < 10; ++i)
        std::cout << "  root cause " << result.groups[i].root_cause << ": " << result.groups[i].size() << " traces\n";
    std::cout << "outputs written to " << out << '\n';
    return 0;
}

int cmd_attack(const Globals& g, const std::string& model, const std::string& test, const std::string& out,
               const std::string& kind, std::uint64_t min_count, std::size_t window) {
    PipelineConfig config = model.empty() ? base_config(g)
                                          : bundle_config(stage("load model", [&] { return load_bundle(fs::path(model)); }));
    if (!test.empty()) config.test_path = test;
    AttackSpec spec;
    spec.kind = parse_attack_kind(kind);
    spec.seed = g.seed.value_or(config.seed);
    spec.min_count = min_count;
    spec.window = window;

    const auto flows = stage("ingest", [&] { return read_flows(config.test_path, config, g.verbose); });
    const auto attacked = stage("attack", [&] { return apply_attack(flows, spec); });
    std::size_t malicious = 0;
    for (const auto& f : attacked) malicious += f.label == Label::malicious;

    std::ofstream csv_out(out);
    write_flows_csv(csv_out, attacked);
    if (!csv_out) throw Error("cannot write " + out);
    const json provenance{{"attack", std::string(to_string(spec.kind))},
                          {"seed", spec.seed},
                          {"min_count", spec.min_count},
                          {"window", spec.window},
                          {"source", fs::absolute(config.test_path).string()},
                          {"flows", attacked.size()},
                          {"malicious_flows", malicious}};
    std::ofstream side(out + ".provenance.json");
    side << provenance.dump(2) << '\n';
    std::cout << "rewrote " << malicious << " malicious of " << attacked.size() << " flows with " << kind
              << " attack -> " << out << '\n';
    return 0;
}

int cmd_eval(const Globals& g, const std::string& train, const std::string& test, const std::string& out,
             std::optional<std::size_t> repetitions) {
    PipelineConfig config = base_config(g);
    if (!train.empty()) config.train_path = train;
    if (!test.empty()) config.test_path = test;
    if (repetitions) config.repetitions = *repetitions;
    config.validate();

    const auto train_flows = stage("ingest train", [&] { return read_flows(config.train_path, config, g.verbose); });
    const auto test_flows = stage("ingest test", [&] { return read_flows(config.test_path, config, g.verbose); });
    ProgressFn progress;
    if (g.verbose) progress = [](const std::string& msg) { std::cerr << msg << '\n'; };
    const ExperimentReport report =
        stage("experiment", [&] { return run_experiment(train_flows, test_flows, config, progress); });
    write_report(out, report);
    std::cout << "mean AUC over " << config.repetitions << " runs\n" << format_summary(report);
    std::cout << "report written to " << out << '\n';
    return 0;
}

TriageServer* active_server = nullptr;

void on_signal(int) {
    if (active_server) active_server->stop();
}

int cmd_serve(const std::string& model, const std::string& scores, const std::string& test, const std::string& host,
              int port, std::string journal) {
    fs::path flows_path = test;
    if (flows_path.empty()) {
        std::ifstream meta(fs::path(scores) / ScoreFiles::meta);
        if (!meta) throw ConfigError("no scored outputs in " + scores);
        flows_path = json::parse(meta).value("flows", "");
    }
    TriageData data = stage("load", [&] { return load_triage_data(model, scores, flows_path); });
    if (journal.empty()) journal = (fs::path(scores) / "verdicts.journal").string();
    TriageService service(std::move(data), journal);
    TriageServer server(service);
    const int bound = server.bind(host, port);
    active_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "serving on http://" << host << ':' << bound << "  (journal " << journal << ")" << std::endl;
    server.run();
    active_server = nullptr;
    return 0;
}

int cmd_synth(const Globals& g, const std::string& out, const synthetic::Params& base) {
    synthetic::Params params = base;
    params.seed = g.seed.value_or(0);
    const auto data = synthetic::frequency_anomaly(synthetic::five_state_machine(), params);
    fs::create_directories(out);
    {
        std::ofstream f(fs::path(out) / "train.csv");
        write_flows_csv(f, data.train);
    }
    {
        std::ofstream f(fs::path(out) / "test.csv");
        write_flows_csv(f, data.test);
    }
    PipelineConfig config;
    config.train_path = "train.csv";
    config.test_path = "test.csv";
    config.seed = params.seed;
    std::ofstream f(fs::path(out) / "config.json");
    f << config.to_json().dump(2) << '\n';
    std::cout << "wrote " << data.train.size() << " training and " << data.test.size() << " test flows to " << out
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowstate: NetFlow anomaly detection with learned state machines"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "random seed (overrides the config file)");
    app.add_flag("-v,--verbose", g.verbose, "print row errors and progress");

    std::string train, test, out, model, scores, kind = "padding", host = "127.0.0.1", journal;
    std::optional<double> alpha, threshold;
    std::optional<std::uint64_t> min_count;
    std::optional<std::size_t> repetitions;
    std::uint64_t attack_min_count = 100;
    std::size_t attack_window = 10;
    int port = 8080;
    synthetic::Params synth;

    auto* train_cmd = app.add_subcommand("train", "learn a model from benign flows");
    train_cmd->add_option("--train", train, "training CSV (overrides the config file)");
    train_cmd->add_option("-o,--out", out, "model file to write")->required();
    train_cmd->add_option("--alpha", alpha, "merge significance level in (0,1)");
    train_cmd->add_option("--min-count", min_count, "never merge states seen fewer times");

    auto* score_cmd = app.add_subcommand("score", "score test flows against a model");
    score_cmd->add_option("-m,--model", model, "model file")->required()->check(CLI::ExistingFile);
    score_cmd->add_option("--test", test, "test CSV")->required();
    score_cmd->add_option("-o,--out", out, "output directory")->required();
    score_cmd->add_option("--threshold", threshold, "alert threshold (default: stored in the model)");

    auto* attack_cmd = app.add_subcommand("attack", "rewrite the malicious flows of a test file");
    attack_cmd->add_option("-m,--model", model, "model whose column mapping reads the test file");
    attack_cmd->add_option("--test", test, "test CSV")->required();
    attack_cmd->add_option("-o,--out", out, "attacked CSV to write")->required();
    attack_cmd->add_option("--kind", kind, "padding | random | window | frequency")
        ->check(CLI::IsMember({"padding", "random", "window", "frequency"}));
    attack_cmd->add_option("--min-count", attack_min_count, "frequency attack: minimum pool count");
    attack_cmd->add_option("--window", attack_window, "window attack: block length");

    auto* eval_cmd = app.add_subcommand("eval", "AUC experiment over models, attacks and repetitions");
    eval_cmd->add_option("--train", train, "training CSV (overrides the config file)");
    eval_cmd->add_option("--test", test, "test CSV (overrides the config file)");
    eval_cmd->add_option("-o,--out", out, "report directory")->required();
    eval_cmd->add_option("--repetitions", repetitions, "number of runs");

    auto* serve_cmd = app.add_subcommand("serve", "HTTP triage API over scored outputs");
    serve_cmd->add_option("-m,--model", model, "model file")->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--scores", scores, "directory written by score")->required()->check(CLI::ExistingDirectory);
    serve_cmd->add_option("--test", test, "test CSV (default: the file that was scored)");
    serve_cmd->add_option("--host", host, "listen address");
    serve_cmd->add_option("--port", port, "listen port (0 picks a free one)");
    serve_cmd->add_option("--journal", journal, "verdict journal (default: <scores>/verdicts.journal)");

    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic train/test pair with a frequency anomaly");
    synth_cmd->add_option("-o,--out", out, "output directory")->required();
    synth_cmd->add_option("--train-flows", synth.train_flows, "benign training flows");
    synth_cmd->add_option("--test-flows", synth.test_benign_flows, "benign test flows");
    synth_cmd->add_option("--attack-flows", synth.attack_flows, "attack flows");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return cmd_train(g, train, out, alpha, min_count);
        if (*score_cmd) return cmd_score(g, model, test, out, threshold);
        if (*attack_cmd) return cmd_attack(g, model, test, out, kind, attack_min_count, attack_window);
        if (*eval_cmd) return cmd_eval(g, train, test, out, repetitions);
        if (*serve_cmd) return cmd_serve(model, scores, test, host, port, journal);
        if (*synth_cmd) return cmd_synth(g, out, synth);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
