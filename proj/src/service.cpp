#include "flowstate/service.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>

#include <httplib.h>

#include "flowstate/error.hpp"
#include "flowstate/eval.hpp"
#include "flowstate/pipeline.hpp"

namespace flowstate {

using nlohmann::json;

namespace {

// JSON has no infinity; an unbounded score (zero expectation) travels as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json trace_json(const TraceVerdict& v) {
    json per_state = json::array();
    for (const auto& [state, score] : v.per_state_scores) per_state.push_back(json::array({state, number(score)}));
    json positional = json::array();
    for (double s : v.positional_scores) positional.push_back(number(s));
    return json{{"seq_no", v.seq_no},
                {"anomaly_score", number(v.anomaly_score)},
                {"root_cause", v.root_cause},
                {"root_cause_position", v.root_cause_position},
                {"root_cause_flow_line", v.root_cause_flow_line},
                {"label", std::string(to_string(v.label))},
                {"state_sequence", v.state_sequence},
                {"per_state_scores", per_state},
                {"positional_scores", positional},
                {"line_span", v.line_span}};
}

json summary_json(const TraceVerdict& v) {
    return json{{"seq_no", v.seq_no},
                {"anomaly_score", number(v.anomaly_score)},
                {"root_cause", v.root_cause},
                {"root_cause_flow_line", v.root_cause_flow_line},
                {"label", std::string(to_string(v.label))}};
}

json flow_json(const FlowRecord& f) {
    return json{{"line_index", f.line_index},
                {"src_ip", f.src_ip},
                {"dst_ip", f.dst_ip},
                {"sport", f.src_port ? json(*f.src_port) : json(nullptr)},
                {"dport", f.dst_port ? json(*f.dst_port) : json(nullptr)},
                {"timestamp_us", f.timestamp_us},
                {"duration", f.duration},
                {"protocol", f.protocol},
                {"num_bytes", f.num_bytes},
                {"num_packets", f.num_packets},
                {"label", std::string(to_string(f.label))}};
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    const std::size_t n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[64];
    std::snprintf(out, sizeof out, "%.*s.%03dZ", static_cast<int>(n), buf, static_cast<int>(ms));
    return out;
}

// Sorted by score, highest first; stream order breaks ties.
void rank(std::vector<const TraceVerdict*>& items) {
    std::stable_sort(items.begin(), items.end(),
                     [](const TraceVerdict* a, const TraceVerdict* b) { return a->anomaly_score > b->anomaly_score; });
}

ApiResponse error_response(int status, const std::string& message) {
    return ApiResponse{status, json{{"error", message}}};
}

template <typename T>
bool parse_unsigned(std::string_view text, T& out) {
    if (text.empty()) return false;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<std::string_view> split_path(std::string_view path) {
    std::vector<std::string_view> parts;
    std::size_t i = 0;
    while (i < path.size()) {
        while (i < path.size() && path[i] == '/') ++i;
        const std::size_t start = i;
        while (i < path.size() && path[i] != '/') ++i;
        if (i > start) parts.push_back(path.substr(start, i - start));
    }
    return parts;
}

}  // namespace

void write_trace_details(std::ostream& out, std::span<const TraceVerdict> verdicts) {
    for (const auto& v : verdicts) out << trace_json(v).dump() << '\n';
}

std::vector<TraceVerdict> read_trace_details(std::istream& in) {
    std::vector<TraceVerdict> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            TraceVerdict v;
            v.seq_no = j.at("seq_no").get<std::size_t>();
            v.anomaly_score = number_from(j.at("anomaly_score"));
            v.root_cause = j.at("root_cause").get<StateId>();
            v.root_cause_position = j.at("root_cause_position").get<std::size_t>();
            v.root_cause_flow_line = j.at("root_cause_flow_line").get<std::size_t>();
            v.label = parse_label_name(j.at("label").get<std::string>());
            v.state_sequence = j.at("state_sequence").get<std::vector<StateId>>();
            for (const auto& pair : j.at("per_state_scores"))
                v.per_state_scores[pair.at(0).get<StateId>()] = number_from(pair.at(1));
            for (const auto& s : j.at("positional_scores")) v.positional_scores.push_back(number_from(s));
            v.line_span = j.at("line_span").get<std::vector<std::size_t>>();
            out.push_back(std::move(v));
        } catch (const json::exception& e) {
            throw ParseError("trace details line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_score_outputs(const std::filesystem::path& dir, const ScoreResult& result, const json& meta) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / ScoreFiles::verdicts);
        write_verdicts_csv(out, result.verdicts);
    }
    {
        std::ofstream out(dir / ScoreFiles::groups);
        write_groups_csv(out, result.groups);
    }
    {
        std::ofstream out(dir / ScoreFiles::traces);
        write_trace_details(out, result.verdicts);
    }
    json m = meta;
    m["threshold"] = number(result.threshold);
    m["traces"] = result.verdicts.size();
    m["groups"] = result.groups.size();
    std::ofstream out(dir / ScoreFiles::meta);
    out << m.dump(2) << '\n';
    if (!out) throw Error("cannot write score outputs to " + dir.string());
}

TriageData load_triage_data(const std::filesystem::path& bundle_path, const std::filesystem::path& score_dir,
                            const std::filesystem::path& flows_path) {
    TriageData data;
    data.bundle = load_bundle(bundle_path);
    PipelineConfig config;
    try {
        config = PipelineConfig::from_json(json::parse(data.bundle.config_json));
    } catch (const json::exception& e) {
        throw ParseError(std::string("model config snapshot: ") + e.what());
    }
    data.top_k = config.top_k;

    std::ifstream meta_in(score_dir / ScoreFiles::meta);
    std::ifstream traces_in(score_dir / ScoreFiles::traces);
    if (!meta_in || !traces_in) throw ConfigError("no scored outputs in " + score_dir.string());
    try {
        data.threshold = number_from(json::parse(meta_in).at("threshold"));
    } catch (const json::exception& e) {
        throw ParseError(std::string("score metadata: ") + e.what());
    }
    data.verdicts = read_trace_details(traces_in);
    data.flows = load_flows(flows_path, config).records;
    return data;
}

VerdictJournal::VerdictJournal(std::filesystem::path path) : path_(std::move(path)) {}

std::vector<JournalEntry> VerdictJournal::replay() const {
    std::vector<JournalEntry> entries;
    std::ifstream in(path_);
    if (!in) return entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            JournalEntry e;
            e.ts = j.at("ts").get<std::string>();
            e.group = j.at("group").get<StateId>();
            e.verdict = parse_group_verdict(j.at("verdict").get<std::string>());
            e.actor = j.value("actor", "");
            entries.push_back(std::move(e));
        } catch (const std::exception& e) {
            throw ParseError("journal " + path_.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return entries;
}

void VerdictJournal::append(const JournalEntry& entry) {
    if (!out_.is_open()) {
        out_.open(path_, std::ios::app);
        if (!out_) throw Error("cannot open journal " + path_.string());
    }
    const json j{{"ts", entry.ts},
                 {"group", entry.group},
                 {"verdict", std::string(to_string(entry.verdict))},
                 {"actor", entry.actor}};
    out_ << j.dump() << '\n';
    out_.flush();
    if (!out_) throw Error("cannot write journal " + path_.string());
}

TriageService::TriageService(TriageData data, std::filesystem::path journal_path)
    : data_(std::move(data)), journal_(std::move(journal_path)) {
    groups_ = group_anomalies(data_.verdicts, data_.threshold);
    for (std::size_t i = 0; i < groups_.size(); ++i) group_index_[groups_[i].root_cause] = i;
    for (const auto& e : journal_.replay()) verdicts_[e.group] = e.verdict;
    for (std::size_t i = 0; i < data_.verdicts.size(); ++i)
        if (data_.verdicts[i].seq_no != i) throw ParseError("trace details are not in stream order");
}

const AnomalyGroup* TriageService::find_group(StateId id) const {
    auto it = group_index_.find(id);
    return it == group_index_.end() ? nullptr : &groups_[it->second];
}

GroupVerdict TriageService::verdict_of(StateId group) const {
    std::shared_lock lock(mutex_);
    auto it = verdicts_.find(group);
    return it == verdicts_.end() ? GroupVerdict::unreviewed : it->second;
}

json TriageService::groups(double min_score) const {
    std::shared_lock lock(mutex_);
    json out = json::array();
    for (const auto& g : groups_) {
        double top = -std::numeric_limits<double>::infinity();
        for (auto m : g.members) top = std::max(top, data_.verdicts[m].anomaly_score);
        if (top < min_score) continue;
        auto it = verdicts_.find(g.root_cause);
        const GroupVerdict verdict = it == verdicts_.end() ? GroupVerdict::unreviewed : it->second;
        out.push_back({{"root_cause", g.root_cause},
                       {"size", g.size()},
                       {"verdict", std::string(to_string(verdict))},
                       {"top_score", number(top)}});
    }
    return out;
}

json TriageService::group_traces(StateId group, std::size_t limit) const {
    const AnomalyGroup* g = find_group(group);
    if (!g) throw ConfigError("unknown group " + std::to_string(group));
    std::vector<const TraceVerdict*> members;
    for (auto m : g->members) members.push_back(&data_.verdicts[m]);
    rank(members);
    json out = json::array();
    for (std::size_t i = 0; i < members.size() && i < limit; ++i) out.push_back(summary_json(*members[i]));
    return out;
}

json TriageService::group_flows(StateId group, std::size_t limit) const {
    const AnomalyGroup* g = find_group(group);
    if (!g) throw ConfigError("unknown group " + std::to_string(group));
    json out = json::array();
    for (const auto& f : link_flows(*g, data_.verdicts, data_.flows, limit)) out.push_back(flow_json(f));
    return out;
}

json TriageService::trace(std::size_t seq_no) const {
    if (seq_no >= data_.verdicts.size()) throw ConfigError("unknown trace " + std::to_string(seq_no));
    const TraceVerdict& v = data_.verdicts[seq_no];
    json j = trace_json(v);
    json per_state = json::object();
    for (const auto& [state, score] : v.per_state_scores) per_state[std::to_string(state)] = number(score);
    j["per_state_scores"] = per_state;
    return j;
}

json TriageService::model_state(StateId state) const {
    const Automaton& m = data_.bundle.machine;
    if (state >= m.size()) throw ConfigError("unknown state " + std::to_string(state));
    const State& s = m.state(state);
    json out_edges = json::array();
    for (const auto& [sym, t] : s.out)
        out_edges.push_back({{"symbol", m.alphabet()[sym]}, {"target", t.target}, {"count", t.count}});
    json in_edges = json::array();
    for (StateId from = 0; from < m.size(); ++from)
        for (const auto& [sym, t] : m.state(from).out)
            if (t.target == state)
                in_edges.push_back({{"symbol", m.alphabet()[sym]}, {"source", from}, {"count", t.count}});
    return json{{"id", state},
                {"train_count", m.arrivals(state)},
                {"count", s.count},
                {"final_count", s.final_count},
                {"out", out_edges},
                {"in", in_edges}};
}

void TriageService::set_verdict(StateId group, GroupVerdict verdict, const std::string& actor) {
    if (!find_group(group)) throw ConfigError("unknown group " + std::to_string(group));
    std::unique_lock lock(mutex_);
    auto it = verdicts_.find(group);
    const GroupVerdict current = it == verdicts_.end() ? GroupVerdict::unreviewed : it->second;
    if (current == verdict) return;
    journal_.append(JournalEntry{utc_now(), group, verdict, actor});
    verdicts_[group] = verdict;
}

json TriageService::alerts(double min_score) const {
    std::shared_lock lock(mutex_);
    std::vector<const TraceVerdict*> items;
    for (const auto& g : groups_) {
        auto it = verdicts_.find(g.root_cause);
        if (it != verdicts_.end() && it->second == GroupVerdict::false_positive) continue;
        for (auto m : g.members)
            if (data_.verdicts[m].anomaly_score >= min_score) items.push_back(&data_.verdicts[m]);
    }
    std::sort(items.begin(), items.end(),
              [](const TraceVerdict* a, const TraceVerdict* b) { return a->seq_no < b->seq_no; });
    rank(items);
    json out = json::array();
    for (const auto* v : items) {
        json j = summary_json(*v);
        auto it = verdicts_.find(v->root_cause);
        j["verdict"] = std::string(to_string(it == verdicts_.end() ? GroupVerdict::unreviewed : it->second));
        out.push_back(std::move(j));
    }
    return out;
}

json TriageService::roc() const {
    std::vector<double> scores;
    std::vector<Label> labels;
    for (const auto& v : data_.verdicts) {
        scores.push_back(v.anomaly_score);
        labels.push_back(v.label);
    }
    const auto known = known_only(scores, labels);
    const RocCurve curve = roc_auc(known.scores, known.labels);
    json points = json::array();
    for (const auto& p : curve.points) points.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}});
    return json{{"auc", curve.auc}, {"points", points}};
}

ApiResponse TriageService::handle(const ApiRequest& request) {
    const auto parts = split_path(request.path);
    auto query_number = [&](const char* key, double fallback) {
        auto it = request.query.find(key);
        if (it == request.query.end()) return fallback;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
        if (ec != std::errc() || ptr != it->second.data() + it->second.size())
            throw ConfigError(std::string("bad ") + key + " '" + it->second + "'");
        return v;
    };
    auto query_limit = [&]() {
        auto it = request.query.find("limit");
        if (it == request.query.end()) return data_.top_k;
        std::size_t v = 0;
        if (!parse_unsigned(it->second, v)) throw ConfigError("bad limit '" + it->second + "'");
        return v;
    };
    const double no_floor = -std::numeric_limits<double>::infinity();

    try {
        if (request.method == "GET") {
            if (parts.size() == 1 && parts[0] == "groups") return {200, groups(query_number("min_score", no_floor))};
            if (parts.size() == 1 && parts[0] == "alerts") return {200, alerts(query_number("min_score", no_floor))};
            if (parts.size() == 1 && parts[0] == "roc") {
                try {
                    return {200, roc()};
                } catch (const ConfigError& e) {
                    return error_response(404, std::string("no ground truth: ") + e.what());
                }
            }
            StateId id = 0;
            if (parts.size() == 3 && parts[0] == "groups" && parse_unsigned(parts[1], id)) {
                if (!find_group(id)) return error_response(404, "unknown group");
                if (parts[2] == "traces") return {200, group_traces(id, query_limit())};
                if (parts[2] == "flows") return {200, group_flows(id, query_limit())};
            }
            std::size_t seq = 0;
            if (parts.size() == 2 && parts[0] == "traces" && parse_unsigned(parts[1], seq)) {
                if (seq >= data_.verdicts.size()) return error_response(404, "unknown trace");
                return {200, trace(seq)};
            }
            if (parts.size() == 3 && parts[0] == "model" && parts[1] == "states" && parse_unsigned(parts[2], id)) {
                if (id >= data_.bundle.machine.size()) return error_response(404, "unknown state");
                return {200, model_state(id)};
            }
            return error_response(404, "not found");
        }
        if (request.method == "POST") {
            StateId id = 0;
            if (parts.size() == 3 && parts[0] == "groups" && parts[2] == "verdict" && parse_unsigned(parts[1], id)) {
                if (!find_group(id)) return error_response(404, "unknown group");
                json body;
                try {
                    body = json::parse(request.body);
                } catch (const json::exception&) {
                    return error_response(400, "body must be JSON");
                }
                if (!body.is_object() || !body.contains("verdict") || !body.at("verdict").is_string())
                    return error_response(400, "body needs a verdict");
                const std::string text = body.at("verdict").get<std::string>();
                if (text != "false_positive" && text != "malicious")
                    return error_response(400, "verdict must be false_positive or malicious");
                std::string actor = "analyst";
                if (body.contains("actor") && body.at("actor").is_string()) actor = body.at("actor").get<std::string>();
                set_verdict(id, parse_group_verdict(text), actor);
                return {204, nullptr};
            }
            return error_response(404, "not found");
        }
        return error_response(405, "method not allowed");
    } catch (const ConfigError& e) {
        return error_response(400, e.what());
    }
}

TriageServer::TriageServer(TriageService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
    auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
        ApiRequest request{req.method, req.path, {}, req.body};
        for (const auto& [k, v] : req.params) request.query.emplace(k, v);
        ApiResponse response;
        try {
            response = service_.handle(request);
        } catch (const std::exception& e) {
            response = ApiResponse{500, json{{"error", e.what()}}};
        }
        res.status = response.status;
        if (response.status != 204) res.set_content(response.body.dump(), "application/json");
    };
    // No SO_REUSEPORT: a second server on a busy port must fail to bind.
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    server_->Get(".*", dispatch);
    server_->Post(".*", dispatch);
}

TriageServer::~TriageServer() { stop(); }

int TriageServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = server_->bind_to_any_port(host);
        if (bound <= 0) throw Error("cannot bind " + host);
        return bound;
    }
    if (!server_->bind_to_port(host, port))
        throw Error("cannot listen on " + host + ":" + std::to_string(port) + " (port busy?)");
    return port;
}

void TriageServer::run() { server_->listen_after_bind(); }

void TriageServer::stop() {
    if (server_) server_->stop();
}

}  // namespace flowstate
