#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowstate/bundle.hpp"
#include "flowstate/pipeline.hpp"
#include "flowstate/scorer.hpp"

namespace httplib {
class Server;
}

namespace flowstate {

/// One scored trace per line, with everything the triage API exposes.
void write_trace_details(std::ostream& out, std::span<const TraceVerdict> verdicts);
std::vector<TraceVerdict> read_trace_details(std::istream& in);

/// Files written by `flowstate score` into its output directory.
struct ScoreFiles {
    static constexpr const char* verdicts = "verdicts.csv";
    static constexpr const char* groups = "groups.csv";
    static constexpr const char* traces = "traces.jsonl";
    static constexpr const char* meta = "score.json";
};

/// Writes verdicts.csv, groups.csv, traces.jsonl and score.json.
void write_score_outputs(const std::filesystem::path& dir, const ScoreResult& result, const nlohmann::json& meta);

struct TriageData {
    ModelBundle bundle;
    std::vector<TraceVerdict> verdicts;
    std::vector<FlowRecord> flows;
    double threshold = 0.0;
    std::size_t top_k = 10;
};

/// Loads a scored run: the bundle, the score directory and the flows it
/// was computed from (read with the bundle's column mapping).
TriageData load_triage_data(const std::filesystem::path& bundle_path, const std::filesystem::path& score_dir,
                            const std::filesystem::path& flows_path);

struct JournalEntry {
    std::string ts;
    StateId group = kRoot;
    GroupVerdict verdict = GroupVerdict::unreviewed;
    std::string actor;
};

/// Append-only newline-delimited verdict log.
class VerdictJournal {
public:
    explicit VerdictJournal(std::filesystem::path path);

    /// Every entry on disk, oldest first. Throws ParseError on a bad line.
    std::vector<JournalEntry> replay() const;
    void append(const JournalEntry& entry);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct ApiResponse {
    int status = 200;
    nlohmann::json body;  // null for 204
};

/// The triage API without a socket. Reads run concurrently; verdict
/// changes are serialized and journaled before they become visible.
class TriageService {
public:
    TriageService(TriageData data, std::filesystem::path journal_path);

    ApiResponse handle(const ApiRequest& request);

    nlohmann::json groups(double min_score) const;
    nlohmann::json group_traces(StateId group, std::size_t limit) const;
    nlohmann::json group_flows(StateId group, std::size_t limit) const;
    nlohmann::json trace(std::size_t seq_no) const;
    nlohmann::json model_state(StateId state) const;
    void set_verdict(StateId group, GroupVerdict verdict, const std::string& actor);
    nlohmann::json alerts(double min_score) const;
    nlohmann::json roc() const;

    GroupVerdict verdict_of(StateId group) const;

private:
    const AnomalyGroup* find_group(StateId id) const;

    TriageData data_;
    std::vector<AnomalyGroup> groups_;
    std::map<StateId, std::size_t> group_index_;
    std::map<StateId, GroupVerdict> verdicts_;
    VerdictJournal journal_;
    mutable std::shared_mutex mutex_;
};

/// HTTP front end for a TriageService.
class TriageServer {
public:
    explicit TriageServer(TriageService& service);
    ~TriageServer();

    /// Binds the listening socket; port 0 picks a free one. Throws Error
    /// when the port is unavailable. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called.
    void run();
    void stop();

private:
    TriageService& service_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace flowstate
