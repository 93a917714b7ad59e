#include "mvrds/runner.hpp"

#include "mvrds/cocycle.hpp"
#include "mvrds/rng.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace mvrds {

namespace {

constexpr std::uint32_t kInitialTag = 0x1c0;
constexpr std::size_t kMetricPoints = 16;

struct SeedResult {
    std::uint64_t seed = 0;
    std::map<std::string, SuiteVerdict> suites;
    std::vector<std::string> files;
    std::string error;   // simulation failure
};

EmpiricalMeasure initial_cloud(const ScenarioConfig& c) {
    const int d = c.params.dim;
    Mat x(d, static_cast<long>(c.initial.particles));
    for (std::size_t i = 0; i < c.initial.particles; ++i)
        for (int r = 0; r < d; ++r) {
            const double m = c.initial.mean.empty() ? 0.0 : c.initial.mean[static_cast<std::size_t>(r)];
            x(r, static_cast<long>(i)) =
                m + c.initial.scale * keyed_normal(c.initial.seed, {i, kInitialTag, static_cast<std::uint32_t>(r)});
        }
    return EmpiricalMeasure::uniform(std::move(x));
}

Vec initial_point(const ScenarioConfig& c) {
    if (c.initial.point.empty()) return Vec::Zero(c.params.dim);
    return Eigen::Map<const Vec>(c.initial.point.data(), c.params.dim);
}

FrozenLawConfig law_config(const ScenarioConfig& c, std::uint64_t seed) {
    FrozenLawConfig f;
    f.n = c.law_n;
    f.inner_steps = c.inner_steps;
    f.seed = seed;
    f.noise_horizon = c.horizon;
    f.blowup = c.blowup;
    return f;
}

void write_file(const fs::path& dir, const std::string& name, const std::string& body, std::vector<std::string>& files) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", (dir / name).string()));
    out << body;
    files.push_back(name);
}

std::string point_table(const RdeSolution& sol) {
    std::ostringstream os;
    os << "t";
    for (long r = 0; r < sol.y.rows(); ++r) os << " y" << r + 1;
    os << '\n';
    for (std::size_t k = 0; k < sol.size(); ++k) {
        os << fmt::format("{:.17g}", sol.grid()[k]);
        for (long r = 0; r < sol.y.rows(); ++r) os << fmt::format(" {:.17g}", sol.y(r, static_cast<long>(k)));
        os << '\n';
    }
    return os.str();
}

std::string metric_table(const MeasureCurve& curve, double p) {
    std::ostringstream os;
    os << "t d_p dp_lower dp_upper\n";
    const std::size_t stride = std::max<std::size_t>(1, (curve.size() - 1) / kMetricPoints);
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < curve.size(); k += stride) idx.push_back(k);
    if (idx.back() + 1 != curve.size()) idx.push_back(curve.size() - 1);
    for (std::size_t k : idx) {
        const DpBracket b = dp_bracket(curve.states[k], curve.states.front(), p);
        os << fmt::format("{:.17g} {:.17g} {:.17g} {:.17g}\n", curve.times[k], b.wasserstein, b.lower, b.upper);
    }
    return os.str();
}

using Suite = SuiteVerdict (*)(const ScenarioConfig&, const FlowRun&, const JointState&, const FlowSegment&,
                               const fs::path&, std::vector<std::string>&);

SuiteVerdict suite_moments(const ScenarioConfig& c, const FlowRun& run, const JointState& e0, const FlowSegment&,
                           const fs::path&, std::vector<std::string>&) {
    std::vector<MeasureCurve> curves;
    std::vector<std::size_t> ns;
    for (std::size_t f : {1u, 2u, 4u}) {
        FrozenLawConfig lc = law_config(c, run.law.seed);
        lc.n = c.law_n * f;
        ns.push_back(lc.n);
        curves.push_back(simulate_frozen_law(run.model, e0.law, lc, c.horizon));
    }
    const MomentBoundReport r = moment_bound_check(curves, ns, c.p);
    SuiteVerdict v{r.ok, {{"slope", r.slope}, {"tolerance", r.tolerance}}, {}};
    for (std::size_t i = 0; i < ns.size(); ++i) v.values[fmt::format("sup_moment_n{}", ns[i])] = r.sup_moment[i];
    return v;
}

SuiteVerdict suite_duality(const ScenarioConfig& c, const FlowRun& run, const JointState& e0, const FlowSegment&,
                           const fs::path&, std::vector<std::string>&) {
    SuiteVerdict v;
    const DualityConfig dc{c.duality_paths, derive_seed(run.law.seed, 0xd0a1)};
    const std::vector<std::pair<std::string, std::function<double(const Vec&)>>> phis{
        {"x1", [](const Vec& y) { return y(0); }}, {"sq", [](const Vec& y) { return y.squaredNorm(); }}};
    for (const auto& [name, phi] : phis) {
        const DualityReport r = feynman_kac_duality(run.model, e0.law, phi, law_config(c, run.law.seed), c.horizon, dc);
        const bool ok = r.residual <= 3.0 * r.std_error + 1e-12 * (1.0 + std::abs(r.lhs));
        v.pass = v.pass && ok;
        v.values["residual_" + name] = r.residual;
        v.values["std_error_" + name] = r.std_error;
    }
    return v;
}

SuiteVerdict suite_cocycle(const ScenarioConfig& c, const FlowRun& run, const JointState& e0, const FlowSegment&,
                           const fs::path& dir, std::vector<std::string>& files) {
    const std::size_t parts = std::min<std::size_t>(4, c.law_n);
    const double q = c.horizon / static_cast<double>(parts);
    std::vector<double> s_values, t_values;
    for (std::size_t k = 0; k < parts; ++k) {
        s_values.push_back(static_cast<double>(k) * q);
        t_values.push_back(static_cast<double>(k + 1) * q);
    }
    const auto rows = cocycle_table(run, e0, s_values, t_values, 3.0, c.p);
    std::ostringstream os;
    write_cocycle_table(os, rows);
    write_file(dir, fmt::format("defects_s{}.csv", run.law.seed), os.str(), files);
    SuiteVerdict v;
    double point = 0.0, law = 0.0;
    for (const auto& r : rows) {
        v.pass = v.pass && r.pass;
        point = std::max(point, r.point_defect);
        law = std::max(law, r.law_defect);
    }
    v.values["max_point_defect"] = point;
    v.values["max_law_defect"] = law;
    v.values["rows"] = static_cast<double>(rows.size());
    return v;
}

SuiteVerdict suite_stability(const ScenarioConfig& c, const FlowRun& run, const JointState& e0, const FlowSegment&,
                             const fs::path&, std::vector<std::string>&) {
    SuiteVerdict v;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    bool degenerate = false;
    for (double eps : {0.01, 0.03, 0.1}) {
        Vec shift = Vec::Zero(c.params.dim);
        shift(0) = eps;
        const StabilityCheckReport r =
            stability_check(run.model, e0.law, e0.law.translated(shift), law_config(c, run.law.seed), c.horizon, c.p);
        degenerate = degenerate || r.degenerate;
        lo = std::min(lo, r.max_ratio_upper);
        hi = std::max(hi, r.max_ratio_upper);
        v.values[fmt::format("ratio_eps{}", eps)] = r.max_ratio_upper;
    }
    v.values["variation"] = lo > 0.0 ? hi / lo : 0.0;
    v.pass = degenerate || (lo > 0.0 && hi / lo <= 2.0);
    return v;
}

SuiteVerdict suite_regularity(const ScenarioConfig& c, const FlowRun& run, const JointState& e0, const FlowSegment&,
                              const fs::path&, std::vector<std::string>&) {
    FrozenLawConfig lc = law_config(c, run.law.seed);
    lc.record_inner = true;
    const MeasureCurve curve = simulate_frozen_law(run.model, e0.law, lc, c.horizon);
    const TimeRegularityReport r = time_regularity_check(curve, c.p);
    return {r.linear,
            {{"lipschitz_upper", r.lipschitz_upper},
             {"lipschitz_lower", r.lipschitz_lower},
             {"doubling_upper", r.doubling_upper},
             {"doubling_lower", r.doubling_lower}},
            {}};
}

SuiteVerdict suite_continuity(const ScenarioConfig& c, const FlowRun& run, const JointState& e0, const FlowSegment&,
                              const fs::path&, std::vector<std::string>&) {
    ContinuityOptions opt;
    opt.p = c.p;
    const ContinuityReport r = continuity_probe(run, e0, c.horizon, opt);
    SuiteVerdict v{r.ok, {}, {}};
    const char* names[] = {"point", "law", "noise"};
    for (const auto& ch : r.channels) v.values[fmt::format("slope_{}", names[static_cast<int>(ch.channel)])] = ch.slope;
    return v;
}

SuiteVerdict suite_audit(const ScenarioConfig&, const FlowRun& run, const JointState& e0, const FlowSegment& seg,
                         const fs::path&, std::vector<std::string>&) {
    std::vector<AuditSample> corpus;
    const auto& mu = e0.law;
    const std::size_t n = std::min<std::size_t>(16, mu.size());
    for (std::size_t i = 0; i < n; ++i)
        corpus.push_back({mu.atom(i), mu.atom((i + 1) % mu.size()), mu, seg.curve.terminal()});
    const AuditReport r = assumption_audit(run.model, corpus);
    SuiteVerdict v{r.ok, {}, {}};
    for (const auto& ch : r.checks) v.values["worst_ratio_" + ch.name] = ch.worst_ratio;
    return v;
}

const std::map<std::string, Suite>& suites() {
    static const std::map<std::string, Suite> s{
        {"audit", suite_audit},       {"cocycle", suite_cocycle},       {"continuity", suite_continuity},
        {"duality", suite_duality},   {"moments", suite_moments},       {"regularity", suite_regularity},
        {"stability", suite_stability}};
    return s;
}

SeedResult run_seed(const ScenarioConfig& c, std::uint64_t seed, const fs::path& dir, bool checks) {
    SeedResult out;
    out.seed = seed;
    FlowRunConfig fc;
    fc.seed = seed;
    fc.fine_level = c.fine_level;
    fc.rde_level = c.rde_level;
    fc.law = law_config(c, seed);
    fc.rde.blowup = c.blowup;
    fc.rde.compute_defect = false;
    try {
        const FlowRun run = make_flow_run(make_model(c.model, c.params), c.horizon, fc);
        const JointState e0{initial_point(c), initial_cloud(c)};
        const FlowSegment seg = flow_segment(run, e0, 0.0, c.horizon, c.law_n);
        std::ostringstream curve;
        write_curve_summary(curve, seg.curve, c.p);
        write_file(dir, fmt::format("curve_s{}.txt", seed), curve.str(), out.files);
        write_file(dir, fmt::format("point_s{}.txt", seed), point_table(seg.point), out.files);
        write_file(dir, fmt::format("metric_s{}.txt", seed), metric_table(seg.curve, c.p), out.files);
        if (!checks) return out;
        for (const auto& name : c.checks) {
            try {
                out.suites[name] = suites().at(name)(c, run, e0, seg, dir, out.files);
            } catch (const std::exception& e) {
                out.suites[name] = SuiteVerdict{false, {}, e.what()};
            }
        }
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

std::vector<std::pair<std::uint64_t, fs::path>> seed_files(const fs::path& dir, const std::string& prefix,
                                                           const std::string& ext) {
    std::vector<std::pair<std::uint64_t, fs::path>> out;
    if (!fs::is_directory(dir)) throw std::runtime_error(fmt::format("run directory {} does not exist", dir.string()));
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind(prefix, 0) != 0 || name.size() <= prefix.size() + ext.size() ||
            name.compare(name.size() - ext.size(), ext.size(), ext) != 0)
            continue;
        const std::string id = name.substr(prefix.size(), name.size() - prefix.size() - ext.size());
        if (id.empty() || !std::all_of(id.begin(), id.end(), ::isdigit)) continue;
        out.emplace_back(std::stoull(id), e.path());
    }
    if (out.empty()) throw std::runtime_error(fmt::format("no {}*{} artifacts in {}", prefix, ext, dir.string()));
    std::sort(out.begin(), out.end());
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

Table read_table(const fs::path& path, char sep) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
    Table t;
    std::string line;
    auto split = [sep](const std::string& s) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream is(s);
        if (sep == ' ') {
            while (is >> cell) out.push_back(cell);
        } else {
            while (std::getline(is, cell, sep)) out.push_back(cell);
        }
        return out;
    };
    if (!std::getline(in, line)) throw std::runtime_error(fmt::format("{} is empty", path.string()));
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        for (const auto& cell : split(line)) row.push_back(std::stod(cell));
        if (row.size() != t.header.size()) throw std::runtime_error(fmt::format("ragged row in {}", path.string()));
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Column-wise mean over the per-seed tables, which share their time column.
Table mean_table(const std::vector<std::pair<std::uint64_t, fs::path>>& files, char sep) {
    Table acc = read_table(files.front().second, sep);
    for (std::size_t f = 1; f < files.size(); ++f) {
        const Table t = read_table(files[f].second, sep);
        if (t.header != acc.header || t.rows.size() != acc.rows.size())
            throw std::runtime_error(fmt::format("{} does not match the other seeds", files[f].second.string()));
        for (std::size_t r = 0; r < t.rows.size(); ++r)
            for (std::size_t k = 0; k < t.rows[r].size(); ++k) acc.rows[r][k] += t.rows[r][k];
    }
    for (auto& row : acc.rows)
        for (auto& x : row) x /= static_cast<double>(files.size());
    return acc;
}

}  // namespace

std::string resolve_output_dir(const ScenarioConfig& cfg, const RunOptions& opt) {
    if (!opt.output_override.empty()) return opt.output_override;
    if (const char* env = std::getenv("MVRDS_OUTPUT_DIR"); env && *env) return env;
    return cfg.output;
}

RunResult run_scenario(const ScenarioConfig& cfg, const RunOptions& opt) {
    validate_scenario(cfg);
    const fs::path dir = resolve_output_dir(cfg, opt);
    fs::create_directories(dir);

    std::vector<SeedResult> results(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cfg.seeds.size();)
            results[i] = run_seed(cfg, cfg.seeds[i], dir, opt.checks);
    };
    const std::size_t jobs = std::clamp<std::size_t>(opt.jobs, 1, cfg.seeds.size());
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    RunResult out;
    const std::vector<std::string> requested = opt.checks ? cfg.checks : std::vector<std::string>{};
    for (const auto& name : requested) out.suites[name] = SuiteVerdict{};
    nlohmann::json seeds_json = nlohmann::json::object();
    for (const auto& r : results) {
        out.files.insert(out.files.end(), r.files.begin(), r.files.end());
        const std::string tag = fmt::format("s{}", r.seed);
        if (!r.error.empty()) {
            out.pass = false;
            seeds_json[tag] = r.error;
            for (const auto& name : requested) {
                auto& v = out.suites[name];
                v.pass = false;
                if (v.error.empty()) v.error = fmt::format("seed {}: {}", r.seed, r.error);
            }
            continue;
        }
        for (const auto& [name, sv] : r.suites) {
            auto& v = out.suites[name];
            v.pass = v.pass && sv.pass;
            for (const auto& [k, x] : sv.values) v.values[tag + "/" + k] = x;
            if (!sv.error.empty() && v.error.empty()) v.error = fmt::format("seed {}: {}", r.seed, sv.error);
        }
    }
    for (const auto& [name, v] : out.suites) out.pass = out.pass && v.pass;

    nlohmann::json verdict;
    verdict["scenario"] = cfg.name;
    verdict["model"] = cfg.model;
    verdict["seeds"] = cfg.seeds;
    verdict["pass"] = out.pass;
    verdict["errors"] = seeds_json;
    verdict["suites"] = nlohmann::json::object();
    for (const auto& [name, v] : out.suites) {
        nlohmann::json s;
        s["pass"] = v.pass;
        s["values"] = v.values;
        if (!v.error.empty()) s["error"] = v.error;
        verdict["suites"][name] = s;
    }
    write_file(dir, "config.yaml", canonical_yaml(cfg), out.files);
    std::sort(out.files.begin(), out.files.end());
    verdict["files"] = out.files;
    std::vector<std::string> unused;
    write_file(dir, "verdict.json", verdict.dump(2) + "\n", unused);
    out.files.push_back("verdict.json");
    std::sort(out.files.begin(), out.files.end());
    return out;
}

PlotKind plot_kind_from_string(const std::string& s) {
    if (s == "moments") return PlotKind::Moments;
    if (s == "defects") return PlotKind::Defects;
    if (s == "metric-curves") return PlotKind::MetricCurves;
    throw DomainError(fmt::format("unknown plot kind '{}' (moments, defects, metric-curves)", s));
}

std::string to_string(PlotKind k) {
    switch (k) {
        case PlotKind::Moments: return "moments";
        case PlotKind::Defects: return "defects";
        case PlotKind::MetricCurves: return "metric-curves";
    }
    return "?";
}

std::string emit_plot_data(const std::string& run_dir, PlotKind kind) {
    const fs::path dir(run_dir);
    std::ostringstream os;
    if (kind == PlotKind::Moments) {
        const Table t = mean_table(seed_files(dir, "curve_s", ".txt"), ' ');
        os << "t\tstatistic\tvalue\n";
        for (const auto& row : t.rows)
            for (std::size_t k = 1; k < row.size(); ++k)
                os << fmt::format("{:.17g}\t{}\t{:.17g}\n", row[0], t.header[k], row[k]);
    } else if (kind == PlotKind::MetricCurves) {
        const Table t = mean_table(seed_files(dir, "metric_s", ".txt"), ' ');
        os << "t\td_p\tdp_lower\tdp_upper\n";
        for (const auto& row : t.rows) os << fmt::format("{:.17g}\t{:.17g}\t{:.17g}\t{:.17g}\n", row[0], row[1], row[2], row[3]);
    } else {
        // Worst joint defect (point + law) over the seed panel for each (s, t, n).
        std::map<std::tuple<double, double, double>, double> worst;
        for (const auto& [seed, path] : seed_files(dir, "defects_s", ".csv")) {
            const Table t = read_table(path, ',');
            for (const auto& row : t.rows) {
                auto& w = worst[{row[0], row[1], row[2]}];
                w = std::max(w, row[4] + row[5]);
            }
        }
        os << "s\tt\tn\tdefect\n";
        for (const auto& [key, d] : worst)
            os << fmt::format("{:.17g}\t{:.17g}\t{}\t{:.17g}\n", std::get<0>(key), std::get<1>(key),
                              static_cast<long long>(std::get<2>(key)), d);
    }
    const fs::path out = dir / fmt::format("plot_{}.tsv", to_string(kind));
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot write {}", out.string()));
    f << os.str();
    return out.string();
}

}  // namespace mvrds
