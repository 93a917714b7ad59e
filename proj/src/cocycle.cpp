#include "mvrds/cocycle.hpp"

#include "mvrds/ode.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>

namespace mvrds {

namespace {

constexpr std::uint64_t kPointNoiseStream = 0x70;

/// Number of delta-cells in t, or a DomainError when t is off the grid.
std::size_t cells_in(double t, double delta, const char* what) {
    const double k = t / delta;
    if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k))
        throw DomainError(fmt::format("{} = {} is not on the law-freeze grid of step {}", what, t, delta));
    return static_cast<std::size_t>(std::llround(k));
}

void check_nesting(const FlowRun& run) {
    if (!(run.horizon > 0.0)) throw DomainError("flow horizon must be positive");
    if (run.rde_level < 0 || run.rde_level > run.noise->fine_level())
        throw DomainError(fmt::format("RDE level {} exceeds the noise level {}", run.rde_level, run.noise->fine_level()));
    const double cells = std::ldexp(1.0, run.rde_level);
    const double per_freeze = cells / static_cast<double>(run.law.n);
    if (run.law.n < 1 || per_freeze < 1.0 || per_freeze != std::floor(per_freeze))
        throw DomainError(fmt::format("{} law-freeze cells do not nest in 2^{} RDE cells", run.law.n, run.rde_level));
    if (run.noise->horizon() != run.horizon) throw DomainError("noise horizon differs from the flow horizon");
    if (run.noise->dim() != run.model.noise_dim) throw DomainError("noise dimension differs from the model");
}

RoughPathPtr build_lift(const NoisePath& noise, double T, int level, LiftMode mode) {
    return std::make_shared<const RoughPath>(brownian_lift(noise, dyadic_grid(0.0, T, T, level), mode));
}

FrozenLawConfig leg_config(const FlowRun& run, std::size_t intervals, double offset) {
    FrozenLawConfig c = run.law;
    c.n = intervals;
    c.particles = 0;
    c.record_inner = false;
    c.noise_horizon = run.horizon;
    c.time_offset = offset;
    return c;
}

struct FrozenContexts {
    MeanFieldModel model;
    std::vector<LawContext> laws;
    double t0 = 0.0;
    double delta = 1.0;

    const LawContext& at(double t) const {
        const double k = std::floor((t - t0) / delta + 1e-7);
        const auto i = static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(laws.size() - 1)));
        return laws[i];
    }
};

Vec corrected_drift(const MeanFieldModel& m, const Vec& y, const LawContext& law, bool correct) {
    Vec b = m.eval_drift(y, law);
    if (correct && !m.diffusion_state_independent) b -= 0.5 * m.ito_correction(y, law);
    return b;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double den = n * sxx - sx * sx;
    return den == 0.0 ? 0.0 : (n * sxy - sx * sy) / den;
}

}  // namespace

double joint_distance(const JointState& a, const JointState& b, double p) {
    return (a.point - b.point).norm() + wasserstein(a.law, b.law, p);
}

FlowRun make_flow_run(const MeanFieldModel& model, double T, const FlowRunConfig& cfg) {
    FlowRun run;
    run.noise = std::make_shared<const NoisePath>(
        NoisePath::generate(cfg.seed, model.noise_dim, T, cfg.fine_level, kPointNoiseStream));
    run.model = model;
    run.law = cfg.law;
    run.law.noise_horizon = T;
    run.law.time_offset = 0.0;
    run.rde = cfg.rde;
    run.rde_level = cfg.rde_level;
    run.horizon = T;
    check_nesting(run);
    run.lift = build_lift(*run.noise, T, run.rde_level, LiftMode::Stratonovich);
    return run;
}

FlowRun with_noise(const FlowRun& run, NoisePath noise) {
    FlowRun out = run;
    out.noise = std::make_shared<const NoisePath>(std::move(noise));
    check_nesting(out);
    out.lift = build_lift(*out.noise, out.horizon, out.rde_level, LiftMode::Stratonovich);
    return out;
}

CoefficientField frozen_law_field(const MeanFieldModel& model, const MeasureCurve& curve, double delta,
                                  bool ito_correction) {
    auto ctx = std::make_shared<FrozenContexts>();
    ctx->model = model;
    ctx->t0 = curve.times.front();
    ctx->delta = delta;
    const std::size_t n = cells_in(curve.times.back() - curve.times.front(), delta, "curve length");
    if (n == 0 || (n - 1) * curve.freeze_stride >= curve.size()) throw DomainError("curve does not cover the freeze grid");
    for (std::size_t k = 0; k < n; ++k) ctx->laws.push_back(model.law(curve.states[k * curve.freeze_stride]));

    CoefficientField c;
    c.dim = model.dim;
    c.noise_dim = model.noise_dim;
    const bool correct = ito_correction && !model.diffusion_state_independent;
    if (model.drift || correct) {
        c.drift = [ctx, correct](double t, const Vec& y, Vec& out) {
            out = corrected_drift(ctx->model, y, ctx->at(t), correct);
        };
        c.drift_jacobian = [ctx, correct](double t, const Vec& y, Mat& out) {
            const LawContext& law = ctx->at(t);
            if (!correct) {
                out = ctx->model.eval_drift_jacobian(y, law);
                return;
            }
            out.resize(y.size(), y.size());
            Vec yp = y, ym = y;
            for (long j = 0; j < y.size(); ++j) {
                const double h = 1e-6 * std::max(1.0, std::abs(y(j)));
                yp(j) = y(j) + h;
                ym(j) = y(j) - h;
                out.col(j) = (corrected_drift(ctx->model, yp, law, true) - corrected_drift(ctx->model, ym, law, true)) /
                             (2.0 * h);
                yp(j) = ym(j) = y(j);
            }
        };
    }
    c.diffusion = [ctx](double t, const Vec& y, Mat& out) { out = ctx->model.eval_diffusion(y, ctx->at(t)); };
    c.diffusion_grad = [ctx](double t, const Vec& y, std::vector<Mat>& out) {
        out = ctx->model.eval_diffusion_grad(y, ctx->at(t));
    };
    if (model.diffusion_hess)
        c.diffusion_hess = [ctx](double t, const Vec& y, std::vector<Mat>& out) {
            out = ctx->model.eval_diffusion_hess(y, ctx->at(t));
        };
    c.meta.sigma_state_independent = model.diffusion_state_independent;
    c.meta.sigma_affine = model.diffusion_affine || model.diffusion_state_independent;
    return c;
}

FlowSegment flow_segment(const FlowRun& run, const JointState& e0, double r, double t, std::size_t intervals) {
    if (!(t > 0.0)) throw DomainError("flow segment needs t > 0");
    if (r < 0.0 || r + t > run.horizon * (1.0 + 1e-12))
        throw DomainError(fmt::format("segment [{}, {}] leaves [0, {}]", r, r + t, run.horizon));
    if (e0.point.size() != run.model.dim) throw DomainError("initial point has the wrong dimension");

    MeasureCurve curve = simulate_frozen_law(run.model, e0.law, leg_config(run, intervals, r), t);
    auto window = std::make_shared<const RoughPath>(shift(*run.lift, r, 0.0, t));
    const CoefficientField field =
        frozen_law_field(run.model, curve, t / static_cast<double>(intervals), true);
    RdeSolution sol = solve_forward(field, window, e0.point, 0.0, t, run.rde);
    JointState state{sol.terminal(), curve.terminal()};
    return {std::move(state), std::move(curve), std::move(sol)};
}

JointState joint_flow(const FlowRun& run, const JointState& e0, double t) {
    if (t == 0.0) return e0;
    return flow_segment(run, e0, 0.0, t, cells_in(t, run.delta(), "t")).state;
}

CocycleDefect cocycle_defect(const FlowRun& run, const JointState& e0, double s, double t, const CocycleOptions& opt) {
    if (s < 0.0 || t < 0.0) throw DomainError("cocycle defect needs s, t >= 0");
    if (s + t > run.horizon * (1.0 + 1e-12)) throw DomainError("s + t exceeds the flow horizon");
    if (s + t == 0.0) return {0.0, 0.0, 0.0, e0, e0};

    const double delta = run.delta();
    std::size_t n_full = run.law.n, n_s = run.law.n, n_t = run.law.n;
    if (opt.aligned) {
        n_s = cells_in(s, delta, "s");
        n_t = cells_in(t, delta, "t");
        n_full = n_s + n_t;
    } else {
        // Each leg is split into run.law.n cells, which must land on the RDE grid.
        const TimeGrid& g = run.lift->grid();
        for (double len : {s, t, s + t})
            if (len > 0.0) (void)g.index_of(len / static_cast<double>(run.law.n));
    }

    const JointState full = flow_segment(run, e0, 0.0, s + t, n_full).state;
    const JointState first = s > 0.0 ? flow_segment(run, e0, 0.0, s, n_s).state : e0;
    JointState composed = t > 0.0 ? flow_segment(run, first, s, t, n_t).state : first;

    const SemigroupReport sg = semigroup_check(run.model, e0.law, leg_config(run, n_full, 0.0), s, t,
                                               SemigroupOptions{true, opt.aligned, opt.p});
    CocycleDefect d{(full.point - composed.point).norm(), sg.wasserstein, sg.upper, full, std::move(composed)};
    return d;
}

SelfConsistency self_consistency_defect(const FlowRun& run, const JointState& e0, double t, double p) {
    if (t == 0.0) return {};
    FlowRun fine = run;
    fine.law.n = 2 * run.law.n;
    if (run.rde_level < run.noise->fine_level()) {
        fine.rde_level = run.rde_level + 1;
        fine.lift = build_lift(*run.noise, run.horizon, fine.rde_level, LiftMode::Stratonovich);
    }
    check_nesting(fine);
    const JointState a = joint_flow(run, e0, t);
    const JointState b = joint_flow(fine, e0, t);
    return {(a.point - b.point).norm(), wasserstein(a.law, b.law, p)};
}

std::vector<CocycleRow> cocycle_table(const FlowRun& run, const JointState& e0, const std::vector<double>& s_values,
                                      const std::vector<double>& t_values, double margin, double p) {
    constexpr double kUlp = std::numeric_limits<double>::epsilon();
    std::map<double, SelfConsistency> baseline;
    std::vector<CocycleRow> rows;
    for (double s : s_values)
        for (double t : t_values) {
            if (s + t > run.horizon * (1.0 + 1e-12)) continue;
            auto it = baseline.find(s + t);
            if (it == baseline.end()) it = baseline.emplace(s + t, self_consistency_defect(run, e0, s + t, p)).first;
            const CocycleDefect d = cocycle_defect(run, e0, s, t, CocycleOptions{true, p});
            CocycleRow row;
            row.s = s;
            row.t = t;
            row.n = run.law.n;
            row.particles = e0.law.size();
            row.point_defect = d.point;
            row.law_defect = d.law;
            // Round-off allowance for runs whose refinement defect is itself zero.
            row.point_tolerance = margin * it->second.point + 64.0 * kUlp * (1.0 + d.full.point.norm());
            row.law_tolerance = margin * it->second.law + 64.0 * kUlp * (1.0 + std::sqrt(moment(d.full.law, 2.0)));
            row.pass = row.point_defect <= row.point_tolerance && row.law_defect <= row.law_tolerance;
            rows.push_back(row);
        }
    return rows;
}

void write_cocycle_table(std::ostream& os, const std::vector<CocycleRow>& rows) {
    os << "s,t,n,N,point_defect,law_defect,tolerance,pass,point_tolerance,law_tolerance\n";
    for (const auto& r : rows)
        os << fmt::format("{:.17g},{:.17g},{},{},{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g}\n", r.s, r.t, r.n, r.particles,
                          r.point_defect, r.law_defect, r.tolerance(), r.pass ? 1 : 0, r.point_tolerance,
                          r.law_tolerance);
}

WongZakaiPath wong_zakai_run(const FlowRun& run, const JointState& e0, int level, bool corrected, double t_end) {
    if (t_end < 0.0) t_end = run.horizon;
    if (level < 0 || level > run.noise->fine_level())
        throw DomainError(fmt::format("Wong-Zakai level {} is finer than the noise", level));
    const double T = run.horizon;
    const double h = std::ldexp(T, -level);
    const std::size_t cells = cells_in(t_end, h, "Wong-Zakai end time");
    const std::size_t law_cells = cells_in(t_end, run.delta(), "Wong-Zakai end time");
    if (cells == 0) throw DomainError("Wong-Zakai run needs t_end > 0");

    const MeasureCurve curve = simulate_frozen_law(run.model, e0.law, leg_config(run, law_cells, 0.0), t_end);
    std::vector<LawContext> laws;
    for (std::size_t k = 0; k < law_cells; ++k) laws.push_back(run.model.law(curve.states[k * curve.freeze_stride]));

    // Integrate over the finer of the level grid and the freeze grid; both are dyadic.
    const std::size_t sub = std::max<std::size_t>(1, law_cells / cells);
    const std::size_t per_law = std::max<std::size_t>(1, cells / law_cells);
    const double hs = h / static_cast<double>(sub);
    const auto& fine = run.noise->fine_grid();
    const Mat& w = run.noise->values();

    WongZakaiPath out;
    out.grid = TimeGrid::uniform(0.0, h, cells);
    out.y.resize(run.model.dim, static_cast<long>(cells + 1));
    out.y.col(0) = e0.point;
    Vec y = e0.point;
    const MeanFieldModel& m = run.model;
    OdeConfig ode;
    ode.atol = 1e-11;
    ode.rtol = 1e-11;
    ode.initial_step = hs / 4.0;
    for (std::size_t k = 0; k < cells; ++k) {
        const double a = out.grid[k], b = out.grid[k + 1];
        const Vec slope = (w.col(static_cast<long>(fine.index_of(b))) - w.col(static_cast<long>(fine.index_of(a)))) / h;
        for (std::size_t j = 0; j < sub; ++j) {
            const LawContext& law = laws[std::min(law_cells - 1, (k * sub + j) / per_law)];
            const OdeRhs f = [&](double, const Vec& z, Vec& dz) {
                dz = corrected_drift(m, z, law, corrected) + m.eval_diffusion(z, law) * slope;
            };
            const double t0 = a + static_cast<double>(j) * hs;
            try {
                y = integrate_ode(f, t0, j + 1 == sub ? b : t0 + hs, y, ode);
            } catch (const std::exception& e) {
                throw SolverError(fmt::format("Wong-Zakai cell [{}, {}] failed: {}", a, b, e.what()));
            }
            if (!y.allFinite() || y.norm() > run.rde.blowup)
                throw SolverError(fmt::format("Wong-Zakai solution blew up on cell [{}, {}]", a, b));
        }
        out.y.col(static_cast<long>(k + 1)) = y;
    }
    return out;
}

RdeSolution point_solution(const FlowRun& run, const JointState& e0, double t, LiftMode mode, bool ito_correction) {
    if (mode != LiftMode::Ito && mode != LiftMode::Stratonovich)
        throw DomainError("point_solution takes the Ito or Stratonovich lift");
    const std::size_t intervals = cells_in(t, run.delta(), "t");
    const MeasureCurve curve = simulate_frozen_law(run.model, e0.law, leg_config(run, intervals, 0.0), t);
    const RoughPathPtr lift = mode == LiftMode::Stratonovich
                                  ? run.lift
                                  : build_lift(*run.noise, run.horizon, run.rde_level, LiftMode::Ito);
    const CoefficientField field = frozen_law_field(run.model, curve, run.delta(), ito_correction);
    return solve_forward(field, lift, e0.point, 0.0, t, run.rde);
}

ContinuityReport continuity_probe(const FlowRun& run, const JointState& e0, double t, const ContinuityOptions& opt) {
    const JointState base = joint_flow(run, e0, t);
    const int d = run.model.dim;
    const double T = run.horizon;
    const int e = run.model.noise_dim;
    auto bump = opt.bump ? opt.bump : [T, e](double s) {
        Vec v = Vec::Zero(e);
        if (s >= 0.0 && s <= T) v(0) = std::sin(std::numbers::pi * s / T);
        return v;
    };

    ContinuityReport report;
    for (auto ch : {PerturbationChannel::Point, PerturbationChannel::Law, PerturbationChannel::Noise}) {
        ContinuityChannel c{ch, opt.eps, {}, 0.0, false, true};
        for (double eps : opt.eps) {
            JointState out = base;
            if (ch == PerturbationChannel::Point) {
                JointState in = e0;
                in.point.array() += eps / std::sqrt(static_cast<double>(d));
                out = joint_flow(run, in, t);
            } else if (ch == PerturbationChannel::Law) {
                Vec v = Vec::Zero(d);
                v(0) = eps;
                out = joint_flow(run, JointState{e0.point, e0.law.translated(v)}, t);
            } else {
                out = joint_flow(with_noise(run, run.noise->perturbed(bump, eps)), e0, t);
            }
            c.distance.push_back(joint_distance(base, out, opt.p));
        }
        std::vector<double> lx, ly;
        for (std::size_t i = 0; i < c.eps.size(); ++i)
            if (c.distance[i] > 0.0) {
                lx.push_back(std::log(c.eps[i]));
                ly.push_back(std::log(c.distance[i]));
            }
        c.degenerate = lx.empty();
        c.slope = lx.size() >= 2 ? fit_slope(lx, ly) : 0.0;
        c.ok = c.degenerate || (lx.size() == c.eps.size() && c.slope >= opt.min_slope);
        report.ok = report.ok && c.ok;
        report.channels.push_back(std::move(c));
    }
    return report;
}

}  // namespace mvrds
