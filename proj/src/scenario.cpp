#include "mvrds/scenario.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace mvrds {

namespace {

struct Issue {
    std::string key;   // dotted path of the offending field
    std::string message;
};

std::optional<Issue> find_issue(const ScenarioConfig& c) {
    const auto& names = model_names();
    if (std::find(names.begin(), names.end(), c.model) == names.end())
        return Issue{"model", fmt::format("unknown model '{}' (known: {})", c.model, fmt::join(names, ", "))};
    try {
        (void)make_model(c.model, c.params);
    } catch (const std::exception& e) {
        return Issue{"params", e.what()};
    }
    const int d = c.params.dim;
    if (!(c.horizon > 0.0)) return Issue{"horizon", "horizon must be positive"};
    if (c.initial.particles < 1) return Issue{"initial.particles", "need at least one particle"};
    if (!c.initial.mean.empty() && static_cast<int>(c.initial.mean.size()) != d)
        return Issue{"initial.mean", fmt::format("mean needs {} entries", d)};
    if (!c.initial.point.empty() && static_cast<int>(c.initial.point.size()) != d)
        return Issue{"initial.point", fmt::format("point needs {} entries", d)};
    if (!(c.initial.scale >= 0.0)) return Issue{"initial.scale", "scale must be nonnegative"};
    if (c.inner_steps < 1) return Issue{"law.inner_steps", "need at least one inner step"};
    if (c.fine_level < 1 || c.fine_level > 24) return Issue{"rde.fine_level", "fine_level must be in [1, 24]"};
    if (c.rde_level < 1 || c.rde_level > c.fine_level)
        return Issue{"rde.level", fmt::format("level must be in [1, fine_level = {}]", c.fine_level)};
    const std::size_t rde_cells = std::size_t{1} << c.rde_level;
    if (c.law_n < 1 || c.law_n > rde_cells || rde_cells % c.law_n != 0 || (c.law_n & (c.law_n - 1)) != 0)
        return Issue{"law.n", fmt::format("law.n must be a power of two dividing 2^{} RDE cells", c.rde_level)};
    if (!(c.blowup > 0.0)) return Issue{"rde.blowup", "blowup must be positive"};
    if (c.seeds.empty()) return Issue{"seeds", "seed panel is empty"};
    if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
        return Issue{"seeds", "seeds must be distinct"};
    for (const auto& ch : c.checks) {
        const auto& known = check_names();
        if (std::find(known.begin(), known.end(), ch) == known.end())
            return Issue{"checks", fmt::format("unknown check '{}' (known: {})", ch, fmt::join(known, ", "))};
    }
    if (std::set<std::string>(c.checks.begin(), c.checks.end()).size() != c.checks.size())
        return Issue{"checks", "checks must not repeat"};
    if (!(c.p >= 1.0)) return Issue{"p", "p must be at least 1"};
    if (c.duality_paths < 1) return Issue{"duality_paths", "need at least one dual path"};
    if (c.output.empty()) return Issue{"output", "output directory is empty"};
    return std::nullopt;
}

class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
        throw ConfigError(fmt::format("{}:{}: {}", source_, n.Mark().line + 1, msg));
    }
    [[noreturn]] void fail_line(int line, const std::string& msg) const {
        throw ConfigError(fmt::format("{}:{}: {}", source_, line, msg));
    }

    void expect_map(const YAML::Node& n, const std::string& where, const std::set<std::string>& allowed) {
        if (!n.IsMap()) fail(n, fmt::format("'{}' must be a mapping", where));
        for (const auto& kv : n) {
            const auto key = kv.first.as<std::string>();
            if (!allowed.count(key)) fail(kv.first, fmt::format("unknown key '{}'", where.empty() ? key : where + "." + key));
            lines_[where.empty() ? key : where + "." + key] = kv.first.Mark().line + 1;
        }
    }

    template <class T>
    void get(const YAML::Node& parent, const char* key, const std::string& path, T& out) {
        const YAML::Node n = parent[key];
        if (!n) return;
        try {
            out = n.as<T>();
        } catch (const YAML::Exception&) {
            fail(n, fmt::format("cannot read '{}' as {}", path, type_name<T>()));
        }
    }

    int line_of(const std::string& key) const {
        for (std::string k = key;;) {
            if (auto it = lines_.find(k); it != lines_.end()) return it->second;
            const auto dot = k.rfind('.');
            if (dot == std::string::npos) return 1;
            k.resize(dot);
        }
    }

private:
    template <class T>
    static const char* type_name() {
        if constexpr (std::is_same_v<T, std::string>) return "a string";
        else if constexpr (std::is_floating_point_v<T>) return "a number";
        else if constexpr (std::is_integral_v<T>) return "an integer";
        else return "a list";
    }

    std::string source_;
    std::map<std::string, int> lines_;
};

std::string number(double x) { return fmt::format("{}", x); }

template <class T>
void emit_list(YAML::Emitter& e, const std::vector<T>& v) {
    e << YAML::Flow << YAML::BeginSeq;
    for (const auto& x : v) {
        if constexpr (std::is_floating_point_v<T>) e << number(x);
        else e << x;
    }
    e << YAML::EndSeq;
}

}  // namespace

const std::vector<std::string>& check_names() {
    static const std::vector<std::string> names{"audit",     "cocycle",    "continuity", "duality",
                                                "moments",   "regularity", "stability"};
    return names;
}

void validate_scenario(const ScenarioConfig& cfg) {
    if (auto issue = find_issue(cfg)) throw ConfigError(fmt::format("{}: {}", issue->key, issue->message));
}

ScenarioConfig parse_scenario(const std::string& text, const std::string& source) {
    Reader r(source);
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        r.fail_line(e.mark.line + 1, e.msg);
    }
    if (!root || root.IsNull()) r.fail_line(1, "empty configuration");
    r.expect_map(root, "",
                 {"name", "model", "params", "horizon", "initial", "law", "rde", "seeds", "output", "checks", "p",
                  "duality_paths"});

    ScenarioConfig c;
    r.get(root, "name", "name", c.name);
    r.get(root, "model", "model", c.model);
    if (const auto n = root["params"]) {
        r.expect_map(n, "params", {"dim", "sigma_diag", "logcosh_weights", "logcosh_centres", "rate", "noise"});
        r.get(n, "dim", "params.dim", c.params.dim);
        r.get(n, "sigma_diag", "params.sigma_diag", c.params.sigma_diag);
        r.get(n, "logcosh_weights", "params.logcosh_weights", c.params.logcosh_weights);
        r.get(n, "logcosh_centres", "params.logcosh_centres", c.params.logcosh_centres);
        r.get(n, "rate", "params.rate", c.params.rate);
        r.get(n, "noise", "params.noise", c.params.noise);
    }
    r.get(root, "horizon", "horizon", c.horizon);
    if (const auto n = root["initial"]) {
        r.expect_map(n, "initial", {"particles", "mean", "scale", "point", "seed"});
        r.get(n, "particles", "initial.particles", c.initial.particles);
        r.get(n, "mean", "initial.mean", c.initial.mean);
        r.get(n, "scale", "initial.scale", c.initial.scale);
        r.get(n, "point", "initial.point", c.initial.point);
        r.get(n, "seed", "initial.seed", c.initial.seed);
    }
    if (const auto n = root["law"]) {
        r.expect_map(n, "law", {"n", "inner_steps"});
        r.get(n, "n", "law.n", c.law_n);
        r.get(n, "inner_steps", "law.inner_steps", c.inner_steps);
    }
    if (const auto n = root["rde"]) {
        r.expect_map(n, "rde", {"level", "fine_level", "blowup"});
        r.get(n, "level", "rde.level", c.rde_level);
        r.get(n, "fine_level", "rde.fine_level", c.fine_level);
        r.get(n, "blowup", "rde.blowup", c.blowup);
    }
    r.get(root, "seeds", "seeds", c.seeds);
    r.get(root, "output", "output", c.output);
    r.get(root, "checks", "checks", c.checks);
    r.get(root, "p", "p", c.p);
    r.get(root, "duality_paths", "duality_paths", c.duality_paths);

    if (auto issue = find_issue(c)) r.fail_line(r.line_of(issue->key), issue->key + ": " + issue->message);
    return c;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("{}: cannot open file", path));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

std::string canonical_yaml(const ScenarioConfig& c) {
    // Keys are written in sorted order at every level.
    YAML::Emitter e;
    e << YAML::BeginMap;
    e << YAML::Key << "checks" << YAML::Value;
    emit_list(e, c.checks);
    e << YAML::Key << "duality_paths" << YAML::Value << c.duality_paths;
    e << YAML::Key << "horizon" << YAML::Value << number(c.horizon);
    e << YAML::Key << "initial" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "mean" << YAML::Value;
    emit_list(e, c.initial.mean);
    e << YAML::Key << "particles" << YAML::Value << c.initial.particles;
    e << YAML::Key << "point" << YAML::Value;
    emit_list(e, c.initial.point);
    e << YAML::Key << "scale" << YAML::Value << number(c.initial.scale);
    e << YAML::Key << "seed" << YAML::Value << c.initial.seed;
    e << YAML::EndMap;
    e << YAML::Key << "law" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "inner_steps" << YAML::Value << c.inner_steps;
    e << YAML::Key << "n" << YAML::Value << c.law_n;
    e << YAML::EndMap;
    e << YAML::Key << "model" << YAML::Value << c.model;
    e << YAML::Key << "name" << YAML::Value << c.name;
    e << YAML::Key << "output" << YAML::Value << c.output;
    e << YAML::Key << "p" << YAML::Value << number(c.p);
    e << YAML::Key << "params" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "dim" << YAML::Value << c.params.dim;
    e << YAML::Key << "logcosh_centres" << YAML::Value;
    emit_list(e, c.params.logcosh_centres);
    e << YAML::Key << "logcosh_weights" << YAML::Value;
    emit_list(e, c.params.logcosh_weights);
    e << YAML::Key << "noise" << YAML::Value << number(c.params.noise);
    e << YAML::Key << "rate" << YAML::Value << number(c.params.rate);
    e << YAML::Key << "sigma_diag" << YAML::Value;
    emit_list(e, c.params.sigma_diag);
    e << YAML::EndMap;
    e << YAML::Key << "rde" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "blowup" << YAML::Value << number(c.blowup);
    e << YAML::Key << "fine_level" << YAML::Value << c.fine_level;
    e << YAML::Key << "level" << YAML::Value << c.rde_level;
    e << YAML::EndMap;
    e << YAML::Key << "seeds" << YAML::Value;
    emit_list(e, c.seeds);
    e << YAML::EndMap;
    return std::string(e.c_str()) + "\n";
}

}  // namespace mvrds
