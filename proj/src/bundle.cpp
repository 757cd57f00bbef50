#include "flowstate/bundle.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "flowstate/error.hpp"

namespace flowstate {

namespace {

std::string fmt(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename T>
T parse(const std::string& token, const char* what) {
    T value{};
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
        throw ParseError(std::string("model file: bad ") + what + " '" + token + "'");
    return value;
}

class Lines {
public:
    explicit Lines(std::istream& in) : in_(in) {}

    std::vector<std::string> next() {
        std::string line;
        if (!std::getline(in_, line)) throw ParseError("model file: unexpected end of file");
        ++number_;
        std::vector<std::string> tokens;
        std::istringstream ss(line);
        for (std::string t; ss >> t;) tokens.push_back(t);
        return tokens;
    }

    std::string raw() {
        std::string line;
        if (!std::getline(in_, line)) throw ParseError("model file: unexpected end of file");
        ++number_;
        return line;
    }

    std::vector<std::string> expect(const std::string& keyword, std::size_t args) {
        auto t = next();
        if (t.empty() || t[0] != keyword || t.size() != args + 1)
            throw ParseError("model file line " + std::to_string(number_) + ": expected '" + keyword + "' with " +
                             std::to_string(args) + " values");
        return t;
    }

    std::size_t number() const { return number_; }

private:
    std::istream& in_;
    std::size_t number_ = 0;
};

std::vector<double> read_edges(Lines& lines, const std::string& keyword) {
    auto t = lines.next();
    if (t.size() < 2 || t[0] != keyword) throw ParseError("model file: expected " + keyword);
    const auto n = parse<std::size_t>(t[1], "edge count");
    if (t.size() != n + 2) throw ParseError("model file: " + keyword + " count mismatch");
    std::vector<double> edges;
    for (std::size_t i = 0; i < n; ++i) edges.push_back(parse<double>(t[i + 2], "edge"));
    return edges;
}

}  // namespace

void save_bundle(std::ostream& out, const ModelBundle& b) {
    out << "flowstate-model " << b.version << '\n';
    out << "features " << b.encodings.features.size();
    for (auto f : b.encodings.features) out << ' ' << to_string(f);
    out << '\n';
    out << "threshold " << fmt(b.threshold) << '\n';
    out << "config " << b.config_json << '\n';

    out << "encodings " << b.encodings.encodings.size() << '\n';
    for (const auto& [feature, enc] : b.encodings.encodings) {
        out << "encoding " << to_string(feature) << '\n';
        out << "params " << enc.bins << ' ' << enc.clusters << ' ' << enc.seed << ' ' << fmt(enc.silhouette) << '\n';
        out << "prev_edges " << enc.prev_edges.size();
        for (double e : enc.prev_edges) out << ' ' << fmt(e);
        out << '\n';
        out << "next_edges " << enc.next_edges.size();
        for (double e : enc.next_edges) out << ' ' << fmt(e);
        out << '\n';
        out << "values " << enc.values.size() << '\n';
        for (std::size_t i = 0; i < enc.values.size(); ++i) out << fmt(enc.values[i]) << ' ' << enc.labels[i] << '\n';
    }

    const auto& m = b.machine;
    out << "automaton\n";
    if (const auto& mp = m.merge_params())
        out << "merge " << fmt(mp->alpha) << ' ' << mp->min_count << '\n';
    else
        out << "merge none\n";
    out << "trace_starts " << m.trace_starts() << '\n';
    out << "alphabet " << m.alphabet().size() << '\n';
    for (const auto& s : m.alphabet()) out << s << '\n';
    out << "states " << m.size() << '\n';
    for (StateId q = 0; q < m.size(); ++q)
        out << q << ' ' << m.state(q).count << ' ' << m.state(q).final_count << '\n';
    out << "transitions " << m.transition_count() << '\n';
    for (StateId q = 0; q < m.size(); ++q)
        for (const auto& [sym, tr] : m.state(q).out)
            out << q << ' ' << m.alphabet()[sym] << ' ' << tr.target << ' ' << tr.count << '\n';
    out << "end\n";
}

std::string bundle_to_string(const ModelBundle& bundle) {
    std::ostringstream out;
    save_bundle(out, bundle);
    return out.str();
}

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    save_bundle(out, bundle);
}

ModelBundle load_bundle(std::istream& in) {
    Lines lines(in);
    ModelBundle b;
    {
        auto t = lines.expect("flowstate-model", 1);
        b.version = parse<int>(t[1], "version");
        if (b.version != kBundleVersion)
            throw ParseError("model file version " + t[1] + " is not supported (expected " +
                             std::to_string(kBundleVersion) + ")");
    }
    {
        auto t = lines.next();
        if (t.size() < 2 || t[0] != "features") throw ParseError("model file: expected features");
        const auto n = parse<std::size_t>(t[1], "feature count");
        if (t.size() != n + 2) throw ParseError("model file: feature count mismatch");
        b.encodings.features.clear();
        for (std::size_t i = 0; i < n; ++i) b.encodings.features.push_back(parse_feature(t[i + 2]));
    }
    b.threshold = parse<double>(lines.expect("threshold", 1)[1], "threshold");
    {
        const std::string line = lines.raw();
        if (line.rfind("config ", 0) != 0) throw ParseError("model file: expected config");
        b.config_json = line.substr(7);
    }
    const auto encodings = parse<std::size_t>(lines.expect("encodings", 1)[1], "encoding count");
    for (std::size_t e = 0; e < encodings; ++e) {
        FeatureEncoding enc;
        enc.feature = parse_feature(lines.expect("encoding", 1)[1]);
        auto p = lines.expect("params", 4);
        enc.bins = parse<std::size_t>(p[1], "bins");
        enc.clusters = parse<std::size_t>(p[2], "clusters");
        enc.seed = parse<std::uint64_t>(p[3], "seed");
        enc.silhouette = parse<double>(p[4], "silhouette");
        enc.prev_edges = read_edges(lines, "prev_edges");
        enc.next_edges = read_edges(lines, "next_edges");
        const auto n = parse<std::size_t>(lines.expect("values", 1)[1], "value count");
        for (std::size_t i = 0; i < n; ++i) {
            auto t = lines.next();
            if (t.size() != 2) throw ParseError("model file line " + std::to_string(lines.number()) + ": bad value row");
            enc.values.push_back(parse<double>(t[0], "value"));
            const auto label = parse<std::uint32_t>(t[1], "label");
            if (label >= enc.clusters) throw ParseError("model file: label out of range");
            enc.labels.push_back(label);
        }
        if (!std::is_sorted(enc.values.begin(), enc.values.end()))
            throw ParseError("model file: encoding values not sorted");
        const Feature f = enc.feature;
        if (!b.encodings.encodings.emplace(f, std::move(enc)).second)
            throw ParseError("model file: duplicate encoding");
    }

    lines.expect("automaton", 0);
    std::optional<MergeParams> merge;
    {
        auto t = lines.next();
        if (t.size() == 2 && t[0] == "merge" && t[1] == "none") {
        } else if (t.size() == 3 && t[0] == "merge") {
            merge = MergeParams{parse<double>(t[1], "alpha"), parse<std::uint64_t>(t[2], "min_count")};
        } else {
            throw ParseError("model file: expected merge parameters");
        }
    }
    const auto starts = parse<std::uint64_t>(lines.expect("trace_starts", 1)[1], "trace starts");
    std::vector<std::string> alphabet;
    const auto symbols = parse<std::size_t>(lines.expect("alphabet", 1)[1], "alphabet size");
    for (std::size_t i = 0; i < symbols; ++i) {
        auto t = lines.next();
        if (t.size() != 1) throw ParseError("model file: bad alphabet entry");
        alphabet.push_back(t[0]);
    }
    std::map<std::string, SymbolId> symbol_ids;
    for (SymbolId i = 0; i < alphabet.size(); ++i) symbol_ids.emplace(alphabet[i], i);

    const auto n_states = parse<std::size_t>(lines.expect("states", 1)[1], "state count");
    std::vector<State> states(n_states);
    for (std::size_t i = 0; i < n_states; ++i) {
        auto t = lines.next();
        if (t.size() != 3 || parse<std::size_t>(t[0], "state id") != i) throw ParseError("model file: bad state row");
        states[i].count = parse<std::uint64_t>(t[1], "state count");
        states[i].final_count = parse<std::uint64_t>(t[2], "final count");
    }
    const auto n_trans = parse<std::size_t>(lines.expect("transitions", 1)[1], "transition count");
    for (std::size_t i = 0; i < n_trans; ++i) {
        auto t = lines.next();
        if (t.size() != 4) throw ParseError("model file: bad transition row");
        const auto from = parse<std::size_t>(t[0], "state id");
        const auto to = parse<StateId>(t[2], "state id");
        auto sym = symbol_ids.find(t[1]);
        if (from >= n_states || sym == symbol_ids.end()) throw ParseError("model file: bad transition row");
        if (!states[from].out.emplace(sym->second, Transition{to, parse<std::uint64_t>(t[3], "count")}).second)
            throw ParseError("model file: nondeterministic transition");
    }
    lines.expect("end", 0);
    b.machine = Automaton::from_parts(std::move(alphabet), std::move(states), starts, merge);
    return b;
}

ModelBundle load_bundle_from_string(const std::string& text) {
    std::istringstream in(text);
    return load_bundle(in);
}

ModelBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open model " + path.string());
    return load_bundle(in);
}

}  // namespace flowstate
