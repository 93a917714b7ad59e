#include "mvrds/ode.hpp"
#include "mvrds/rde.hpp"
#include "test_fields.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace mvrds;
using mvrds::testing::TrigField;
using mvrds::testing::with_linear_drift;

namespace {

RoughPathPtr brownian(std::uint64_t seed, int d, int coarse_level, int fine_level, LiftMode mode = LiftMode::Stratonovich,
                      double horizon = 1.0) {
    const NoisePath noise = NoisePath::generate(seed, d, horizon, fine_level);
    return std::make_shared<const RoughPath>(
        brownian_lift(noise, TimeGrid::uniform_span(0.0, horizon, std::size_t{1} << coarse_level), mode));
}

RoughPathPtr smooth_driver(std::size_t cells, double horizon = 1.0) {
    return std::make_shared<const RoughPath>(smooth_rough_path(
        TimeGrid::uniform_span(0.0, horizon, cells),
        [](double t) {
            Vec v(2);
            v << std::sin(2.0 * t), t * t - 0.5 * t;
            return v;
        },
        [](double t) {
            Vec v(2);
            v << 2.0 * std::cos(2.0 * t), 2.0 * t - 0.5;
            return v;
        }));
}

// dy/dt = b(t, y) + sigma(t, y) x'(t) for the smooth driver above.
OdeRhs smooth_rhs(const CoefficientField& c) {
    return [&c](double t, const Vec& y, Vec& dy) {
        Vec xd(2);
        xd << 2.0 * std::cos(2.0 * t), 2.0 * t - 0.5;
        dy = c.eval_diffusion(t, y) * xd + c.eval_drift(t, y);
    };
}

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST(CoefficientField, DerivativeConsistency) {
    const auto field = with_linear_drift(TrigField::make(3, 2, 0.7).field(), 0.5);
    std::vector<std::pair<double, Vec>> pts;
    for (int i = 0; i < 20; ++i) pts.push_back({0.05 * i, Vec::LinSpaced(3, -1.0 + 0.1 * i, 0.5 - 0.07 * i)});
    EXPECT_LE(derivative_consistency(field, pts), 1e-5);
}

TEST(SolveDriftless, ZeroDiffusionIsConstant) {
    auto rp = brownian(1, 2, 8, 10);
    const auto c = CoefficientField::zero(3, 2);
    const Vec xi = Vec::LinSpaced(3, 1, 3);
    const RdeSolution sol = solve_driftless(c, rp, xi);
    for (std::size_t i = 0; i < sol.size(); ++i) EXPECT_EQ((sol.y.col(static_cast<long>(i)) - xi).norm(), 0.0);
    const RdeSolution back = solve_backward(c, rp, xi, 0.25, 0.75);
    EXPECT_EQ((back.y.col(0) - xi).norm(), 0.0);
    EXPECT_THROW(solve_driftless(with_linear_drift(c, 1.0), rp, xi), std::invalid_argument);
}

TEST(SolveDriftless, GeometricClosedForm) {
    auto rp = brownian(2, 1, 12, 12);
    const auto c = CoefficientField::scalar_linear(1.0);
    const RdeSolution sol = solve_driftless(c, rp, Vec::Constant(1, 1.3));
    double worst = 0.0;
    for (std::size_t i = 0; i < sol.size(); ++i) {
        const double exact = 1.3 * std::exp(rp->values()(0, static_cast<long>(i)) - rp->values()(0, 0));
        worst = std::max(worst, std::abs(sol.y(0, static_cast<long>(i)) - exact) / exact);
    }
    EXPECT_LE(worst, 1e-3);
    // Solution contract: Y' = sigma(t, Y) exactly.
    for (std::size_t i = 0; i < sol.size(); i += 97) EXPECT_EQ(sol.yprime(0, static_cast<long>(i)), sol.y(0, static_cast<long>(i)));
}

TEST(SolveDriftless, StateIndependentReducesToIntegration) {
    auto rp = brownian(3, 2, 10, 12);
    auto a1 = [](double t) {
        Mat m(2, 2);
        m << std::cos(t), 0.5 * t, 0.2, 1.0 + t * t;
        return m;
    };
    auto a1d = [](double t) {
        Mat m(2, 2);
        m << -std::sin(t), 0.5, 0.0, 2.0 * t;
        return m;
    };
    const auto c = CoefficientField::state_independent(2, 2, a1, a1d);
    const Vec xi = vec2(0.3, -0.2);
    const RdeSolution sol = solve_driftless(c, rp, xi);
    // Deterministic integrand a1(t) in row-major layout, Y' = 0.
    const long n = static_cast<long>(rp->size());
    Mat y(4, n);
    for (long i = 0; i < n; ++i) {
        const Mat m = a1(rp->grid()[static_cast<std::size_t>(i)]);
        y.col(i) << m(0, 0), m(0, 1), m(1, 0), m(1, 1);
    }
    const Mat integral = rough_integral_path(ControlledPath(rp, y, Mat::Zero(8, n)));
    double worst = 0.0;
    for (long i = 0; i < n; ++i) worst = std::max(worst, (sol.y.col(i) - xi - integral.col(i)).norm());
    EXPECT_LE(worst, 2e-3);
    const auto jac = flow_jacobian(c, rp, xi, FlowDirection::Forward);
    for (const auto& z : jac.zeta) EXPECT_EQ((z - Mat::Identity(2, 2)).norm(), 0.0);
}

TEST(SolveDriftless, SelfConsistencyRate) {
    const auto c = TrigField::make(2, 2, 0.6).field();
    std::vector<double> lh, ld;
    for (int level = 6; level <= 11; ++level) {
        std::vector<double> defects;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            auto rp = brownian(100 + seed, 2, level, 12);
            defects.push_back(solve_driftless(c, rp, vec2(0.1, 0.4)).diag.integral_defect);
        }
        std::sort(defects.begin(), defects.end());
        lh.push_back(std::log(std::ldexp(1.0, -level)));
        ld.push_back(std::log(defects[2]));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(lh.size());
    for (std::size_t i = 0; i < lh.size(); ++i) {
        sx += lh[i];
        sy += ld[i];
        sxx += lh[i] * lh[i];
        sxy += lh[i] * ld[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    EXPECT_GE(slope, 3 * 0.4 - 1.0 - 0.05);
}

TEST(SolveDriftless, BlowUpGuard) {
    auto rp = brownian(4, 1, 8, 10);
    CoefficientField c;
    c.dim = 1;
    c.noise_dim = 1;
    c.diffusion = [](double, const Vec& y, Mat& s) { s(0, 0) = y(0) * y(0); };
    c.diffusion_grad = [](double, const Vec& y, std::vector<Mat>& g) { g[0](0, 0) = 2 * y(0); };
    RdeConfig cfg;
    cfg.blowup = 1e3;
    auto big = std::make_shared<const RoughPath>(dilate(*rp, 40.0));
    EXPECT_THROW(solve_driftless(c, big, Vec::Constant(1, 5.0), cfg), SolverError);
}

TEST(SolveDriftless, BitIdentical) {
    auto rp1 = brownian(5, 2, 9, 11);
    auto rp2 = brownian(5, 2, 9, 11);
    const auto c = TrigField::make(2, 2, 0.8).field();
    const RdeSolution a = solve_driftless(c, rp1, vec2(0.2, 0.1));
    const RdeSolution b = solve_driftless(c, rp2, vec2(0.2, 0.1));
    EXPECT_TRUE((a.y.array() == b.y.array()).all());
    EXPECT_TRUE((a.yprime.array() == b.yprime.array()).all());
}

TEST(SolveBackward, InversionIdentity) {
    auto rp = brownian(6, 2, 12, 12);
    const auto c = TrigField::make(2, 2, 0.8).field();
    const Vec xi = vec2(0.4, -0.3);
    for (double t : {0.25, 0.5, 1.0}) {
        const RdeSolution fwd = solve_forward(c, rp, xi, 0.0, t);
        const RdeSolution back = solve_backward(c, rp, fwd.terminal(), 0.0, t);
        EXPECT_LE((back.y.col(0) - xi).norm(), 5e-3) << "t = " << t;
        EXPECT_LE(back.diag.integral_defect, 5e-2);
    }
}

TEST(SolveBackward, SmoothDriverMatchesBackwardOde) {
    auto rp = smooth_driver(1u << 12);
    const auto c = TrigField::make(2, 2, 0.8).field();
    const Vec delta = vec2(0.5, 0.1);
    const RdeSolution back = solve_backward(c, rp, delta, 0.0, 1.0);
    const Vec ref = integrate_ode(smooth_rhs(c), 1.0, 0.0, delta);
    EXPECT_LE((back.y.col(0) - ref).norm(), 1e-6);
}

TEST(FlowJacobian, ScalarGeometric) {
    auto rp = brownian(7, 1, 12, 12);
    const auto c = CoefficientField::scalar_linear(1.0);
    const auto jac = flow_jacobian(c, rp, Vec::Constant(1, 2.0), FlowDirection::Forward);
    double worst = 0.0;
    for (std::size_t i = 0; i < jac.zeta.size(); ++i) {
        const double exact = std::exp(rp->values()(0, static_cast<long>(i)) - rp->values()(0, 0));
        worst = std::max(worst, std::abs(jac.zeta[i](0, 0) - exact) / exact);
    }
    EXPECT_LE(worst, 1e-3);
}

TEST(FlowJacobian, FiniteDifferenceOracle) {
    auto rp = brownian(8, 2, 11, 12);
    const auto c = TrigField::make(3, 2, 0.7).field();
    const Vec xi = Vec::LinSpaced(3, -0.2, 0.4);
    const auto jac = flow_jacobian(c, rp, xi, FlowDirection::Forward);
    RdeConfig cfg;
    cfg.compute_defect = false;
    Mat fd(3, 3);
    for (int j = 0; j < 3; ++j) {
        Vec p = xi, m = xi;
        p(j) += 1e-4;
        m(j) -= 1e-4;
        fd.col(j) = (solve_driftless(c, rp, p, cfg).terminal() - solve_driftless(c, rp, m, cfg).terminal()) / 2e-4;
    }
    EXPECT_LE((jac.zeta.back() - fd).norm(), 1e-3);
    EXPECT_LE((jac.state.terminal() - solve_driftless(c, rp, xi, cfg).terminal()).norm(), 1e-12);
}

TEST(FlowJacobian, InverseFunctionIdentity) {
    auto rp = brownian(9, 2, 12, 12);
    const auto c = TrigField::make(2, 2, 0.8).field();
    const Vec delta = vec2(0.3, 0.6);
    const double t = 0.75;
    const auto back = flow_jacobian(c, rp, delta, FlowDirection::Backward, 0.0, t);
    const Vec psi = back.state.y.col(0);
    const auto fwd = flow_jacobian(c, rp, psi, FlowDirection::Forward, 0.0, t);
    EXPECT_LE((fwd.state.terminal() - delta).norm(), 5e-3);
    EXPECT_LE((fwd.zeta.back() * back.zeta.front() - Mat::Identity(2, 2)).norm(), 1e-2);
}

TEST(DossSussmann, NoDriftReducesToDriftless) {
    auto rp = brownian(10, 2, 9, 11);
    const auto c = TrigField::make(2, 2, 0.8).field();
    const auto ds = doss_sussmann_solve(c, rp, vec2(0.1, 0.2));
    const auto direct = solve_driftless(c, rp, vec2(0.1, 0.2));
    EXPECT_TRUE((ds.solution.y.array() == direct.y.array()).all());
    for (long i = 0; i < ds.z.cols(); ++i) EXPECT_EQ((ds.z.col(i) - vec2(0.1, 0.2)).norm(), 0.0);
}

TEST(DossSussmann, ZeroDiffusionIsClassicalOde) {
    auto rp = brownian(11, 1, 12, 12);
    CoefficientField c = CoefficientField::zero(2, 1);
    c.drift = [](double t, const Vec& y, Vec& b) {
        b(0) = -y(1) + 0.2 * std::sin(3 * t);
        b(1) = y(0) - 0.1 * y(1) * y(1);
    };
    c.drift_jacobian = [](double, const Vec& y, Mat& j) { j << 0, -1, 1, -0.2 * y(1); };
    const auto ds = doss_sussmann_solve(c, rp, vec2(1.0, 0.0));
    const Vec ref = integrate_ode([&c](double t, const Vec& y, Vec& dy) { c.drift(t, y, dy); }, 0.0, 1.0, vec2(1.0, 0.0));
    EXPECT_LE((ds.solution.terminal() - ref).norm(), 1e-6);
}

TEST(DossSussmann, ScalarClosedForm) {
    auto rp = brownian(12, 1, 12, 12);
    const auto c = CoefficientField::scalar_linear(1.0, -1.0);
    const auto ds = doss_sussmann_solve(c, rp, Vec::Constant(1, 0.8));
    double worst = 0.0;
    for (std::size_t i = 0; i < ds.solution.size(); i += 16) {
        const double t = rp->grid()[i];
        const double exact = 0.8 * std::exp(-t + rp->values()(0, static_cast<long>(i)));
        worst = std::max(worst, std::abs(ds.solution.y(0, static_cast<long>(i)) - exact) / exact);
    }
    EXPECT_LE(worst, 5e-3);
    EXPECT_GT(ds.ds.accepted, 0u);
    EXPECT_LT(ds.solution.diag.integral_defect, 5e-2);
}

TEST(DossSussmann, SmoothDriverMatchesDirectOde) {
    auto rp = smooth_driver(1u << 10);
    const auto c = with_linear_drift(TrigField::make(2, 2, 0.6).field(), 0.7);
    const auto ds = doss_sussmann_solve(c, rp, vec2(0.3, -0.4));
    const Vec ref = integrate_ode(smooth_rhs(c), 0.0, 1.0, vec2(0.3, -0.4));
    EXPECT_LE((ds.solution.terminal() - ref).norm(), 1e-5);
}

TEST(LinearSigma, TranslationCase) {
    auto rp = brownian(13, 2, 8, 10);
    LinearDiffusion lin{{Mat::Zero(2, 2), Mat::Zero(2, 2)}, [](double) { return Mat(Mat::Identity(2, 2)); }, {}};
    const Vec xi = vec2(1.0, 2.0);
    const RdeSolution sol = solve_linear_sigma({}, lin, rp, xi);
    for (std::size_t i = 0; i < sol.size(); ++i)
        EXPECT_LT((sol.y.col(static_cast<long>(i)) - xi - rp->increment(0, i)).norm(), 1e-13);
}

TEST(LinearSigma, ScalarGeometric) {
    auto rp = brownian(14, 1, 12, 12);
    LinearDiffusion lin{{Mat::Identity(1, 1)}, [](double) { return Mat(Mat::Zero(1, 1)); }, {}};
    const RdeSolution sol = solve_linear_sigma({}, lin, rp, Vec::Constant(1, 0.7));
    const double exact = 0.7 * std::exp(rp->values()(0, rp->values().cols() - 1));
    EXPECT_LE(std::abs(sol.terminal()(0) - exact) / exact, 1e-3);
}

TEST(LinearSigma, Superposition) {
    auto rp = brownian(15, 2, 10, 12);
    Mat bm(2, 2);
    bm << -0.5, 0.3, -0.2, -0.1;
    auto b = [bm](double, const Vec& y) { return Vec(bm * y); };
    Mat a00(2, 2), a01(2, 2);
    a00 << 0.3, 0.1, 0.0, -0.2;
    a01 << 0.0, 0.4, -0.3, 0.1;
    LinearDiffusion lin{{a00, a01}, [](double t) {
                            Mat m(2, 2);
                            m << std::cos(t), 0.1, t, 0.5;
                            return m;
                        },
                        {}};
    LinearDiffusion hom{{a00, a01}, [](double) { return Mat(Mat::Zero(2, 2)); }, {}};
    const Vec xi = vec2(0.2, 0.5), shift = vec2(-1.0, 0.7);
    const RdeSolution y1 = solve_linear_sigma(b, lin, rp, xi + shift);
    const RdeSolution y0 = solve_linear_sigma(b, lin, rp, xi);
    const RdeSolution h = solve_linear_sigma(b, hom, rp, shift);
    EXPECT_LT((y1.y - y0.y - h.y).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Picard, FixedPointMatchesStepper) {
    auto rp = brownian(16, 2, 5, 10);
    const auto c = with_linear_drift(TrigField::make(2, 2, 0.5).field(), 0.3);
    const auto res = picard_validate(c, rp, vec2(0.1, -0.1), 40);
    EXPECT_LT(res.distance_to_stepper, 1e-12);
    EXPECT_LT(res.increments.back(), 1e-12);
    EXPECT_GT(res.increments.front(), res.increments[5]);
}

TEST(Stability, IdenticalInputsGiveZero) {
    auto rp = brownian(17, 2, 9, 11);
    const auto c = TrigField::make(2, 2, 0.8).field();
    const auto a = solve_driftless(c, rp, vec2(0.1, 0.2));
    const auto r = stability_probe(a, a, {&c, &c});
    EXPECT_EQ(r.lhs, 0.0);
    EXPECT_EQ(r.rhs, 0.0);
}

TEST(Stability, InitialValuePerturbationIsLinear) {
    auto rp = brownian(18, 2, 9, 11);
    const auto c = TrigField::make(2, 2, 0.8).field();
    const Vec xi = vec2(0.1, 0.2), dir = vec2(0.6, 0.8);
    const auto base = solve_driftless(c, rp, xi);
    std::vector<double> le, ll;
    for (double eps : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4}) {
        const auto pert = solve_driftless(c, rp, xi + eps * dir);
        const auto r = stability_probe(base, pert, {&c, &c});
        EXPECT_NEAR(r.xi_term, eps, 1e-12);
        le.push_back(std::log(eps));
        ll.push_back(std::log(r.lhs));
    }
    const double n = static_cast<double>(le.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < le.size(); ++i) {
        sx += le[i];
        sy += ll[i];
        sxx += le[i] * le[i];
        sxy += le[i] * ll[i];
        syy += ll[i] * ll[i];
    }
    const double cov = n * sxy - sx * sy;
    const double slope = cov / (n * sxx - sx * sx);
    const double r2 = cov * cov / ((n * sxx - sx * sx) * (n * syy - sy * sy));
    EXPECT_NEAR(slope, 1.0, 0.05);
    EXPECT_GE(r2, 0.99);
}

TEST(Stability, DriverPerturbationVanishesAlongDyadics) {
    const NoisePath noise = NoisePath::generate(19, 2, 1.0, 12);
    const TimeGrid eval = TimeGrid::uniform_span(0.0, 1.0, 1024);
    auto lift = std::make_shared<const RoughPath>(brownian_lift(noise, eval, LiftMode::Stratonovich));
    const auto c = TrigField::make(2, 2, 0.8).field();
    RdeConfig cfg;
    cfg.compute_defect = false;
    const auto ref = solve_driftless(c, lift, vec2(0.1, 0.2), cfg);
    std::vector<double> lhs, rho;
    for (int level : {2, 4, 6, 8, 10}) {
        auto wn = std::make_shared<const RoughPath>(dyadic_approximation(noise, level, eval));
        const auto sol = solve_driftless(c, wn, vec2(0.1, 0.2), cfg);
        const auto r = stability_probe(ref, sol, {&c, &c});
        lhs.push_back(r.lhs);
        rho.push_back(r.rough_term);
        EXPECT_LT(r.ratio, 10.0);
    }
    EXPECT_LT(lhs.back(), 0.5 * lhs.front());
    EXPECT_LT(rho.back(), rho.front());
}

TEST(Export, ColumnarFormat) {
    auto rp = brownian(20, 1, 4, 6);
    const auto sol = solve_driftless(CoefficientField::scalar_linear(0.5), rp, Vec::Constant(1, 1.0));
    std::ostringstream os;
    write_rde_solution(os, sol);
    std::istringstream is(os.str());
    std::string line;
    int rows = 0;
    while (std::getline(is, line))
        if (!line.empty() && line[0] != '#') {
            std::istringstream ls(line);
            double v;
            int cols = 0;
            while (ls >> v) ++cols;
            EXPECT_EQ(cols, 1 + 1 + 1 + 1 + 1);
            ++rows;
        }
    EXPECT_EQ(rows, 17);
}
