#include "mvrds/models.hpp"
#include "mvrds/rng.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace mvrds;

namespace {

Mat cloud(std::uint64_t seed, int d, std::size_t n, double scale = 1.0, double shift = 0.0) {
    Mat x(d, static_cast<long>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (int r = 0; r < d; ++r)
            x(r, static_cast<long>(i)) = shift + scale * keyed_normal(seed, {i, 3u, static_cast<std::uint32_t>(r)});
    return x;
}

Vec point(std::uint64_t seed, int d, double scale = 1.0) { return scale * cloud(seed, d, 1).col(0); }

Mat random_psd(std::uint64_t seed, int d, int rank) {
    const Mat g = cloud(seed, d, static_cast<std::size_t>(rank));
    return g * g.transpose();
}

double trace_norm(const Mat& a) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
    return es.eigenvalues().cwiseAbs().sum();
}

}  // namespace

TEST(Covariance, Examples) {
    EXPECT_TRUE(covariance(EmpiricalMeasure::dirac(point(1, 3))).isZero(0.0));
    Mat x = Mat::Zero(3, 2);
    x(0, 0) = 1.0;
    x(0, 1) = -1.0;
    Mat expected = Mat::Zero(3, 3);
    expected(0, 0) = 1.0;
    EXPECT_TRUE(covariance(EmpiricalMeasure::uniform(x)).isApprox(expected, 1e-15));
}

TEST(Covariance, SymmetricAndBoundedByMoment) {
    for (std::uint64_t s = 0; s < 100; ++s) {
        const int d = 1 + static_cast<int>(s % 4);
        const auto mu = EmpiricalMeasure::uniform(cloud(100 + s, d, 20, 0.5 + 0.05 * s, 0.1 * s));
        const Mat c = covariance(mu);
        EXPECT_TRUE((c.array() == c.transpose().array()).all());
        EXPECT_LE(c.norm(), 2.0 * d * moment(mu, 2.0));
        Eigen::SelfAdjointEigenSolver<Mat> es(c);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * c.trace());
    }
}

TEST(PsdSqrt, Examples) {
    EXPECT_TRUE(psd_sqrt(Mat::Identity(4, 4)).isApprox(Mat::Identity(4, 4), 1e-15));
    Mat a = Mat::Zero(2, 2);
    a(0, 0) = 4.0;
    a(1, 1) = 9.0;
    const Mat r = psd_sqrt(a);
    EXPECT_NEAR(r(0, 0), 2.0, 1e-15);
    EXPECT_NEAR(r(1, 1), 3.0, 1e-15);
    EXPECT_NEAR(r(0, 1), 0.0, 1e-15);
    Mat bad = Mat::Identity(2, 2);
    bad(1, 1) = -0.5;
    EXPECT_THROW(psd_sqrt(bad), DomainError);
}

TEST(PsdSqrt, SquaresBackIncludingRankDeficient) {
    for (std::uint64_t s = 0; s < 50; ++s) {
        const int d = 2 + static_cast<int>(s % 4);
        const Mat a = random_psd(200 + s, d, 1 + static_cast<int>(s % static_cast<std::uint64_t>(d)));
        const Mat r = psd_sqrt(a);
        EXPECT_TRUE((r.array() == r.transpose().array()).all());
        EXPECT_LE((r * r - a).norm(), 1e-10 * a.norm());
    }
}

TEST(PsdSqrt, PowersStormerInequality) {
    for (std::uint64_t s = 0; s < 100; ++s) {
        const int d = 1 + static_cast<int>(s % 5);
        const Mat a = random_psd(300 + s, d, d), b = random_psd(500 + s, d, 1 + static_cast<int>(s % 2));
        const double lhs = (psd_sqrt(a) - psd_sqrt(b)).squaredNorm();
        EXPECT_LE(lhs, trace_norm(a - b) * (1.0 + 1e-10) + 1e-12) << "pair " << s;
    }
}

TEST(Eks, DiracLawFreezes) {
    const auto m = eks_gaussian_model(Mat::Identity(2, 2));
    const auto c = eks_coefficients(m, point(7, 2), EmpiricalMeasure::dirac(point(8, 2)));
    EXPECT_TRUE(c.b.isZero(0.0));
    EXPECT_TRUE(c.sigma.isZero(0.0));
}

TEST(Eks, QuadraticPotential) {
    Mat sigma(2, 2);
    sigma << 2.0, 0.5, 0.5, 1.0;
    const auto m = eks_gaussian_model(sigma);
    const auto mu = EmpiricalMeasure::uniform(cloud(9, 2, 50));
    const Vec y = point(10, 2);
    const auto c = eks_coefficients(m, y, mu);
    const Mat cov = covariance(mu);
    EXPECT_TRUE(c.b.isApprox(-cov * sigma.inverse() * y, 1e-12));
    EXPECT_TRUE((c.sigma * c.sigma).isApprox(2.0 * cov, 1e-12));
}

TEST(Eks, IsotropicCloudRoot) {
    const int d = 3;
    const std::size_t n = 100000;
    const double std_dev = 1.7;
    const auto c = eks_coefficients(eks_gaussian_model(Mat::Identity(d, d)), Vec::Zero(d),
                                    EmpiricalMeasure::uniform(cloud(11, d, n, std_dev)));
    // Sample variance has relative SE sqrt(2/N); the root halves it.
    const double tol = 3.0 * std::sqrt(2.0) * std_dev * std::sqrt(0.5 / n) + 3.0 * std::sqrt(2.0) * std_dev / std::sqrt(n);
    EXPECT_LE((c.sigma - std::sqrt(2.0) * std_dev * Mat::Identity(d, d)).cwiseAbs().maxCoeff(), tol);
}

TEST(Eks, DiffusionConstantInState) {
    const auto m = eks_model(log_cosh_potential(Mat::Identity(2, 2), Vec::Constant(2, 0.7), Vec::Constant(2, 0.3)), 2);
    const auto l = m.law(EmpiricalMeasure::uniform(cloud(12, 2, 40)));
    const Vec y = point(13, 2);
    for (int j = 0; j < 2; ++j) {
        const Vec yp = y + 1e-4 * Vec::Unit(2, j);
        EXPECT_LE((m.eval_diffusion(yp, l) - m.eval_diffusion(y, l)).norm() / 1e-4, 1e-10);
    }
}

TEST(Eks, CustomPotentialDerivatives) {
    const Vec w = (Vec(3) << 0.5, 1.0, 2.0).finished(), c = (Vec(3) << -0.2, 0.1, 0.4).finished();
    const auto v = log_cosh_potential(Mat::Identity(3, 3) * 2.0, w, c);
    const Vec y = point(14, 3);
    const double h = 1e-5;
    for (int j = 0; j < 3; ++j) {
        const Vec e = h * Vec::Unit(3, j);
        EXPECT_NEAR((v.value(y + e) - v.value(y - e)) / (2 * h), v.grad(y)(j), 1e-8);
        EXPECT_LE(((v.grad(y + e) - v.grad(y - e)) / (2 * h) - v.hess(y).col(j)).norm(), 1e-8);
        EXPECT_LE(((v.hess(y + e) - v.hess(y - e)) / (2 * h) - v.third(y)[static_cast<std::size_t>(j)]).norm(), 1e-8);
    }
    const auto m = eks_model(v, 3);
    const auto l = m.law(EmpiricalMeasure::uniform(cloud(15, 3, 30)));
    for (int j = 0; j < 3; ++j) {
        const Vec e = h * Vec::Unit(3, j);
        EXPECT_LE(((m.eval_drift(y + e, l) - m.eval_drift(y - e, l)) / (2 * h) - m.eval_drift_jacobian(y, l).col(j)).norm(),
                  1e-8);
    }
}

TEST(Landau, Examples) {
    const Vec e1 = Vec::Unit(3, 0);
    const auto c = landau_coefficients(e1, EmpiricalMeasure::dirac(Vec::Zero(3)));
    EXPECT_TRUE(c.b.isApprox((Vec(3) << -2, 0, 0).finished(), 0.0));
    Mat expected(3, 3);
    expected << 0, 0, 0, -1, 0, 0, 0, 0, -1;
    EXPECT_TRUE((c.sigma.array() == expected.array()).all());

    const auto mu = EmpiricalMeasure::uniform(cloud(16, 3, 25));
    const auto at_mean = landau_coefficients(mu.mean(), mu);
    EXPECT_LE(at_mean.b.norm(), 1e-15);
    EXPECT_LE(at_mean.sigma.norm(), 1e-15);
    EXPECT_THROW(landau_coefficients(Vec::Zero(2), EmpiricalMeasure::dirac(Vec::Zero(2))), DomainError);
}

TEST(Landau, SigmaFactorisesCollisionKernel) {
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto mu = EmpiricalMeasure::uniform(cloud(400 + s, 3, 10));
        const Vec y = point(600 + s, 3, 2.0);
        const Vec z = y - mu.mean();
        const Mat sig = landau_coefficients(y, mu).sigma;
        const Mat a = z.squaredNorm() * Mat::Identity(3, 3) - z * z.transpose();
        EXPECT_LE((sig * sig.transpose() - a).norm(), 1e-12 * (1.0 + a.norm()));
    }
}

TEST(Landau, SigmaIsLinear) {
    // Dyadic scalars and small-integer coordinates keep the arithmetic exact.
    const Vec y = (Vec(3) << 1.5, -2.0, 0.25).finished(), z = (Vec(3) << -3.0, 0.5, 4.0).finished();
    const double a = 0.75, b = -2.5;
    EXPECT_TRUE((landau_sigma0(a * y + b * z).array() == (a * landau_sigma0(y) + b * landau_sigma0(z)).array()).all());
}

TEST(Landau, DriftIsDivergenceOfKernel) {
    auto kernel = [](const Vec& x) { return Mat(x.squaredNorm() * Mat::Identity(3, 3) - x * x.transpose()); };
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Vec x = point(700 + s, 3, 1.5);
        Vec div = Vec::Zero(3);
        const double h = 1e-4;
        for (int j = 0; j < 3; ++j) {
            const Vec e = h * Vec::Unit(3, j);
            div += (kernel(x + e) - kernel(x - e)).col(j) / (2 * h);
        }
        EXPECT_LE((div - (-2.0 * x)).norm(), 1e-6);
    }
}

TEST(Landau, DerivativesAndCorrection) {
    const auto m = landau_maxwell_model();
    const auto l = m.law(EmpiricalMeasure::uniform(cloud(17, 3, 12)));
    const Vec y = point(18, 3);
    const auto g = m.eval_diffusion_grad(y, l);
    for (int j = 0; j < 3; ++j) {
        const Vec e = 1e-3 * Vec::Unit(3, j);
        EXPECT_LE(((m.eval_diffusion(y + e, l) - m.eval_diffusion(y - e, l)) / 2e-3 - g[static_cast<std::size_t>(j)]).norm(),
                  1e-12);
    }
    // Independent evaluation of sum_{j,k} sigma_jk d_j sigma_ik.
    const Mat s = m.eval_diffusion(y, l);
    Vec corr = Vec::Zero(3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) corr(i) += s(j, k) * g[static_cast<std::size_t>(j)](i, k);
    EXPECT_LE((m.ito_correction(y, l) - corr).norm(), 1e-13);
    EXPECT_TRUE(eks_gaussian_model(Mat::Identity(3, 3)).ito_correction(y, l).isZero(0.0));
}

TEST(Audit, ZeroModelPasses) {
    std::vector<AuditSample> corpus;
    for (std::uint64_t s = 0; s < 10; ++s)
        corpus.push_back({point(800 + s, 2), point(820 + s, 2), EmpiricalMeasure::uniform(cloud(840 + s, 2, 10)),
                          EmpiricalMeasure::uniform(cloud(860 + s, 2, 10, 1.5))});
    const auto rep = assumption_audit(zero_model(2), corpus);
    EXPECT_TRUE(rep.ok);
    EXPECT_EQ(rep.checks.size(), 7u);
    for (const auto& c : rep.checks) EXPECT_EQ(c.evaluations, 10u);
}

TEST(Audit, EksAndLandauPassOnGaussianCorpus) {
    for (const auto& [name, d] : {std::pair<std::string, int>{"eks-gaussian", 2}, {"eks-custom", 2}, {"landau-maxwell", 3}}) {
        ModelParameters p;
        p.dim = d;
        p.sigma_diag.assign(static_cast<std::size_t>(d), 1.0);
        p.sigma_diag[0] = 4.0;
        if (name == "eks-custom") {
            p.logcosh_weights = {0.5, 1.0};
            p.logcosh_centres = {0.3, -0.3};
        }
        const auto model = make_model(name, p);
        std::vector<AuditSample> corpus;
        for (std::uint64_t s = 0; s < 25; ++s)
            corpus.push_back({point(900 + s, d, 3.0), point(950 + s, d, 3.0),
                              EmpiricalMeasure::uniform(cloud(1000 + s, d, 30, 1.0 + 0.1 * s)),
                              EmpiricalMeasure::uniform(cloud(1100 + s, d, 30, 0.8, 0.05 * s))});
        const auto rep = assumption_audit(model, corpus);
        for (const auto& c : rep.checks)
            EXPECT_EQ(c.violations, 0u) << name << " " << c.name << " worst " << c.worst_ratio;
    }
}

TEST(Audit, AdversarialDriftFlagged) {
    MeanFieldModel m = zero_model(2);
    m.name = "adversarial";
    m.drift = [](const Vec& y, const LawContext&, Eigen::Ref<Vec> out) {
        out.setZero();
        out(0) = y.squaredNorm();
    };
    std::vector<AuditSample> corpus;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Vec y = point(1200 + s, 2, 5.0);
        y(0) = std::abs(y(0)) + 5.0;
        corpus.push_back({y, point(1220 + s, 2), EmpiricalMeasure::uniform(cloud(1240 + s, 2, 10)),
                          EmpiricalMeasure::uniform(cloud(1260 + s, 2, 10))});
    }
    const auto rep = assumption_audit(m, corpus);
    EXPECT_FALSE(rep.ok);
    EXPECT_GT(rep.check("coercivity").violations, 0u);
}

TEST(Registry, NamesAndErrors) {
    for (const auto& n : model_names()) {
        ModelParameters p;
        if (n == "landau-maxwell") p.dim = 3;
        EXPECT_EQ(make_model(n, p).name, n);
    }
    EXPECT_THROW(make_model("no-such-model", {}), DomainError);
    ModelParameters p;
    p.dim = 2;
    EXPECT_THROW(make_model("landau-maxwell", p), DomainError);
}
