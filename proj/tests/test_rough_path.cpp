#include "mvrds/rough_path.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace mvrds;

namespace {

RoughPath scalar_linear_path(std::size_t cells) {
    const TimeGrid g = TimeGrid::uniform_span(0.0, 1.0, cells);
    return smooth_rough_path(
        g, [](double t) { return Vec::Constant(1, t); }, [](double) { return Vec::Constant(1, 1.0); });
}

double max_chen(const RoughPath& rp, int samples, unsigned seed) {
    std::mt19937 gen(seed);
    std::uniform_int_distribution<std::size_t> pick(0, rp.size() - 1);
    double worst = 0.0;
    for (int k = 0; k < samples; ++k) {
        std::size_t a[3] = {pick(gen), pick(gen), pick(gen)};
        std::sort(a, a + 3);
        worst = std::max(worst, chen_defect_index(rp, a[0], a[1], a[2]).norm());
    }
    return worst;
}

}  // namespace

TEST(TimeGrid, Validation) {
    EXPECT_THROW(TimeGrid(std::vector<double>{0.0}), std::invalid_argument);
    EXPECT_THROW(TimeGrid(std::vector<double>{0.0, 0.0}), std::invalid_argument);
    const TimeGrid g = TimeGrid::uniform(0.0, 0.25, 4);
    EXPECT_TRUE(g.is_uniform());
    EXPECT_EQ(g.index_of(0.75), 3u);
    EXPECT_THROW(g.index_of(0.3), DomainError);
    const TimeGrid fine = TimeGrid::uniform(0.0, 0.125, 8);
    EXPECT_EQ(fine.embed(g)[2], 4u);
    EXPECT_THROW(g.embed(fine), DomainError);
}

TEST(HolderExponent, OpenInterval) {
    EXPECT_NO_THROW(HolderExponent(0.4));
    EXPECT_THROW(HolderExponent(1.0 / 3.0), std::invalid_argument);
    EXPECT_THROW(HolderExponent(0.5), std::invalid_argument);
}

TEST(Chen, ZeroForConstructedPaths) {
    const NoisePath noise = NoisePath::generate(17, 3, 1.0, 12);
    const TimeGrid coarse = dyadic_grid(-1.0, 1.0, 1.0, 8);
    for (auto mode : {LiftMode::Ito, LiftMode::Stratonovich}) {
        const RoughPath rp = brownian_lift(noise, coarse, mode);
        EXPECT_LE(max_chen(rp, 20000, 1), 1e-12);
    }
    EXPECT_LE(max_chen(dyadic_approximation(noise, 7), 20000, 2), 1e-12);
}

TEST(Chen, DegenerateTripleIsZero) {
    const NoisePath noise = NoisePath::generate(5, 2, 1.0, 8);
    const RoughPath rp = brownian_lift(noise, dyadic_grid(-1.0, 1.0, 1.0, 5), LiftMode::Stratonovich);
    EXPECT_EQ(chen_defect(rp, 0.25, 0.25, 0.25).norm(), 0.0);
}

TEST(Chen, OffGridTimeThrows) {
    const RoughPath rp = scalar_linear_path(8);
    EXPECT_THROW(chen_defect(rp, 0.0, 0.3, 1.0), DomainError);
}

TEST(Chen, CorruptedCellGivesMinusE) {
    const NoisePath noise = NoisePath::generate(8, 2, 1.0, 8);
    const RoughPath rp = brownian_lift(noise, dyadic_grid(0.0, 1.0, 1.0, 4), LiftMode::Stratonovich);
    PairTable table = PairTable::materialize(rp);
    Mat e(2, 2);
    e << 0.1, -0.2, 0.3, 0.05;
    const std::size_t c = 6;  // corrupted cell [t_6, t_7]
    table.at(c, c + 1) += e;
    const auto& g = rp.grid();
    // (s, c, c+1): the corrupted cell is the right leg.
    for (std::size_t s = 0; s <= c; ++s) {
        const Mat def = chen_defect(table, g[s], g[c], g[c + 1]);
        if (s == c) EXPECT_NEAR((def).norm(), 0.0, 1e-14);  // XX_{c,c+1} appears twice and cancels
        else EXPECT_NEAR((def + e).norm(), 0.0, 1e-13);
    }
    // (c, c+1, t): the corrupted cell is the left leg.
    for (std::size_t t = c + 2; t < g.size(); ++t) EXPECT_NEAR((chen_defect(table, g[c], g[c + 1], g[t]) + e).norm(), 0.0, 1e-13);
    // Triples not touching the corrupted entry stay consistent.
    EXPECT_NEAR(chen_defect(table, g[0], g[3], g[10]).norm(), 0.0, 1e-13);
}

TEST(HolderNorms, ConstantPathIsZero) {
    const TimeGrid g = TimeGrid::uniform_span(0.0, 1.0, 16);
    const RoughPath rp(g, Mat::Constant(2, 17, 3.0), Mat::Zero(4, 16), HolderExponent(0.4));
    const auto n = holder_norms(rp);
    EXPECT_EQ(n.norm_x, 0.0);
    EXPECT_EQ(n.norm_xx, 0.0);
}

TEST(HolderNorms, LinearPathFirstLevelIsOne) {
    const RoughPath rp = scalar_linear_path(64);
    const auto n = holder_norms(rp);
    EXPECT_NEAR(n.norm_x, 1.0, 1e-12);
    // XX_{s,t} = (t-s)^2 / 2, so the 2 alpha quotient peaks at the full interval.
    EXPECT_NEAR(n.norm_xx, 0.5, 1e-12);
    EXPECT_NEAR(n.homogeneous, 1.0 + std::sqrt(0.5), 1e-12);
}

TEST(HolderNorms, Homogeneity) {
    const NoisePath noise = NoisePath::generate(21, 2, 1.0, 10);
    const RoughPath rp = brownian_lift(noise, dyadic_grid(-1.0, 1.0, 1.0, 6), LiftMode::Stratonovich);
    const auto n = holder_norms(rp);
    const auto m = holder_norms(dilate(rp, 2.5));
    EXPECT_NEAR(m.norm_x, 2.5 * n.norm_x, 1e-12 * n.norm_x);
    EXPECT_NEAR(m.norm_xx, 6.25 * n.norm_xx, 1e-12 * n.norm_xx);
}

TEST(HolderNorms, SubsamplingAboveLimit) {
    EXPECT_FALSE(pairs_subsampled(2048));
    EXPECT_TRUE(pairs_subsampled(2049));
    std::size_t count = 0;
    for_each_pair(4096, [&](std::size_t i, std::size_t j) {
        EXPECT_EQ((j - i) & (j - i - 1), 0u);
        ++count;
    });
    EXPECT_GT(count, 4096u);
}

TEST(RoughDistance, MetricProperties) {
    const TimeGrid g = dyadic_grid(-1.0, 1.0, 1.0, 6);
    std::vector<RoughPath> paths;
    for (std::uint64_t s = 0; s < 5; ++s) paths.push_back(brownian_lift(NoisePath::generate(s, 2, 1.0, 10), g, LiftMode::Stratonovich));
    for (std::size_t a = 0; a < paths.size(); ++a) {
        EXPECT_EQ(rough_distance(paths[a], paths[a]), 0.0);
        for (std::size_t b = 0; b < paths.size(); ++b) {
            EXPECT_EQ(rough_distance(paths[a], paths[b]), rough_distance(paths[b], paths[a]));
            for (std::size_t c = 0; c < paths.size(); ++c)
                EXPECT_LE(rough_distance(paths[a], paths[c]),
                          rough_distance(paths[a], paths[b]) + rough_distance(paths[b], paths[c]) + 1e-12);
        }
    }
    const RoughPath other = brownian_lift(NoisePath::generate(0, 2, 1.0, 10), dyadic_grid(-1.0, 1.0, 1.0, 5), LiftMode::Stratonovich);
    EXPECT_THROW(rough_distance(paths[0], other), DomainError);
}

TEST(BrownianLift, StratMinusItoIsHalfIdentity) {
    const NoisePath noise = NoisePath::generate(4, 3, 1.0, 12);
    const TimeGrid coarse = dyadic_grid(-1.0, 1.0, 1.0, 6);
    const RoughPath s = brownian_lift(noise, coarse, LiftMode::Stratonovich);
    const RoughPath i = brownian_lift(noise, coarse, LiftMode::Ito);
    for (std::size_t k = 0; k < coarse.cells(); ++k) {
        const double h = coarse[k + 1] - coarse[k];
        EXPECT_LE((s.cell_second(k) - i.cell_second(k) - 0.5 * h * Mat::Identity(3, 3)).norm(), 1e-15);
    }
}

TEST(BrownianLift, ScalarStratIsHalfSquare) {
    const NoisePath noise = NoisePath::generate(6, 1, 1.0, 12);
    const RoughPath rp = brownian_lift(noise, dyadic_grid(-1.0, 1.0, 1.0, 5), LiftMode::Stratonovich);
    for (std::size_t i = 0; i < rp.size(); i += 3)
        for (std::size_t j = i; j < rp.size(); j += 5) {
            const double x = rp.increment(i, j)(0);
            EXPECT_NEAR(rp.second(i, j)(0, 0), 0.5 * x * x, 1e-12);
        }
}

TEST(BrownianLift, SymmetricPartIsHalfTensorSquare) {
    const NoisePath noise = NoisePath::generate(9, 2, 1.0, 12);
    const RoughPath rp = brownian_lift(noise, dyadic_grid(-1.0, 1.0, 1.0, 5), LiftMode::Stratonovich);
    for (std::size_t k = 0; k < rp.cells(); ++k) {
        const Mat a = rp.cell_second(k);
        const Vec x = rp.increment(k, k + 1);
        EXPECT_NEAR((0.5 * (a + a.transpose()) - 0.5 * x * x.transpose()).norm(), 0.0, 1e-13);
    }
}

TEST(BrownianLift, NotNestedThrows) {
    const NoisePath noise = NoisePath::generate(6, 1, 1.0, 6);
    EXPECT_THROW(brownian_lift(noise, TimeGrid::uniform_span(0.0, 1.0, 7), LiftMode::Ito), DomainError);
}

TEST(BrownianLift, LevyAreaMoments) {
    // Area A over [0, 1] with fine ratio 256: E A = 0, Var A = 1/4 and
    // E[A^2] - E|x|^2 / 12 = 1/12 (variance given the increment, averaged).
    const int n = 100000;
    const TimeGrid cell = TimeGrid::uniform(0.0, 1.0, 1);
    double s1 = 0, s2 = 0, sx = 0;
    for (int k = 0; k < n; ++k) {
        const NoisePath noise = NoisePath::generate(1000 + k, 2, 1.0, 8);
        const RoughPath rp = brownian_lift(noise, cell, LiftMode::Stratonovich);
        const Mat xx = rp.cell_second(0);
        const double a = 0.5 * (xx(0, 1) - xx(1, 0));
        s1 += a;
        s2 += a * a;
        sx += rp.increment(0, 1).squaredNorm();
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 4.0 * std::sqrt(0.25 / n));
    EXPECT_NEAR(var / 0.25, 1.0, 0.05);
    EXPECT_NEAR((s2 / n - sx / n / 12.0) / (1.0 / 12.0), 1.0, 0.05);
}

TEST(Dyadic, SingleCellIsHalfTensorSquare) {
    const NoisePath noise = NoisePath::generate(12, 2, 1.0, 10);
    const RoughPath w = dyadic_approximation(noise, 4);
    for (std::size_t k = 0; k < w.cells(); ++k) {
        const Vec x = w.increment(k, k + 1);
        EXPECT_LE((w.cell_second(k) - 0.5 * x * x.transpose()).norm(), 1e-15);
    }
    EXPECT_LE(max_chen(w, 5000, 3), 1e-12);
}

TEST(Dyadic, EvaluationGridMatchesOwnGrid) {
    const NoisePath noise = NoisePath::generate(13, 2, 1.0, 10);
    const RoughPath own = dyadic_approximation(noise, 3);
    const RoughPath sampled = dyadic_approximation(noise, 3, dyadic_grid(-1.0, 1.0, 1.0, 6));
    const auto idx = sampled.grid().embed(own.grid());
    for (std::size_t i = 0; i < own.size(); ++i)
        for (std::size_t j = i; j < own.size(); ++j) {
            EXPECT_LE((own.increment(i, j) - sampled.increment(idx[i], idx[j])).norm(), 1e-13);
            EXPECT_LE((own.second(i, j) - sampled.second(idx[i], idx[j])).norm(), 1e-12);
        }
    EXPECT_THROW(dyadic_approximation(noise, 6, dyadic_grid(-1.0, 1.0, 1.0, 3)), DomainError);
}

TEST(Dyadic, DistanceDecreasesWithLevel) {
    const NoisePath noise = NoisePath::generate(31, 2, 1.0, 14);
    const TimeGrid ref_grid = dyadic_grid(0.0, 1.0, 1.0, 8);
    const RoughPath ref = brownian_lift(noise, ref_grid, LiftMode::Stratonovich);
    double prev = 1e300;
    for (int n = 2; n <= 8; ++n) {
        const double d = rough_distance(dyadic_approximation(noise, n, ref_grid), ref);
        EXPECT_LT(d, prev) << "level " << n;
        prev = d;
    }
}

TEST(Shift, ZeroShiftIsIdentity) {
    const NoisePath noise = NoisePath::generate(14, 2, 1.0, 9);
    const RoughPath rp = brownian_lift(noise, dyadic_grid(-1.0, 1.0, 1.0, 6), LiftMode::Stratonovich);
    const RoughPath s = shift(rp, 0.0);
    EXPECT_EQ((s.values() - rp.values()).norm(), 0.0);
    EXPECT_EQ((s.cell_second_raw() - rp.cell_second_raw()).norm(), 0.0);
}

TEST(Shift, GroupPropertyAndOrigin) {
    const NoisePath noise = NoisePath::generate(15, 2, 1.0, 9);
    const RoughPath rp = brownian_lift(noise, dyadic_grid(-1.0, 1.0, 1.0, 6), LiftMode::Stratonovich);
    const RoughPath a = shift(shift(rp, 0.25), 0.125);
    const RoughPath b = shift(rp, 0.375);
    EXPECT_TRUE(a.grid().same_as(b.grid()));
    EXPECT_LE((a.values() - b.values()).norm(), 1e-13);
    EXPECT_EQ(shift(rp, 0.25).value(shift(rp, 0.25).grid().index_of(0.0)).norm(), 0.0);
    EXPECT_LE(max_chen(a, 5000, 4), 1e-12);
}

TEST(Shift, SecondLevelIdentity) {
    // XX_{s,t}(theta_r w) = XX_{s+r,t+r}(w).
    const NoisePath noise = NoisePath::generate(16, 2, 1.0, 10);
    const RoughPath rp = brownian_lift(noise, dyadic_grid(-1.0, 1.0, 1.0, 6), LiftMode::Stratonovich);
    const double r = 0.3125;
    const RoughPath sh = shift(rp, r);
    for (double s : {-0.5, 0.0, 0.25})
        for (double t : {0.25, 0.5, 0.6875}) {
            if (t < s) continue;
            EXPECT_LE((sh.second_at(s, t) - rp.second_at(s + r, t + r)).norm(), 1e-12);
            EXPECT_LE((sh.increment_at(s, t) - rp.increment_at(s + r, t + r)).norm(), 1e-14);
        }
}

TEST(Shift, PreservesNormsOnWindow) {
    const NoisePath noise = NoisePath::generate(18, 2, 1.0, 10);
    const RoughPath rp = brownian_lift(noise, dyadic_grid(-1.0, 1.0, 1.0, 6), LiftMode::Stratonovich);
    const RoughPath win = restrict_time(rp, 0.25, 1.0);
    const RoughPath sh = shift(rp, 0.25, 0.0, 0.75);
    const auto a = holder_norms(win), b = holder_norms(sh);
    EXPECT_NEAR(a.norm_x, b.norm_x, 1e-12);
    EXPECT_NEAR(a.norm_xx, b.norm_xx, 1e-12);
    EXPECT_THROW(shift(rp, 0.5, 0.0, 1.0), DomainError);
    EXPECT_THROW(shift(rp, 0.3), DomainError);
}

TEST(Serialization, RoundTripIsLossless) {
    const NoisePath noise = NoisePath::generate(19, 3, 1.0, 10);
    const RoughPath rp = brownian_lift(noise, dyadic_grid(-1.0, 1.0, 1.0, 6), LiftMode::Ito, HolderExponent(0.45));
    std::stringstream ss;
    write_rough_path(ss, rp);
    const RoughPath back = read_rough_path(ss);
    EXPECT_EQ(back.dim(), 3);
    EXPECT_EQ(back.alpha().value(), 0.45);
    EXPECT_EQ(back.info().seed, 19u);
    EXPECT_EQ(back.info().mode, LiftMode::Ito);
    EXPECT_EQ(back.info().fine_cells, noise.fine_grid().cells());
    EXPECT_EQ((back.values() - rp.values()).norm(), 0.0);
    EXPECT_EQ((back.cell_second_raw() - rp.cell_second_raw()).norm(), 0.0);
    for (std::size_t i = 0; i < rp.size(); ++i) EXPECT_EQ(back.grid()[i], rp.grid()[i]);
    std::stringstream bad("garbage\n");
    EXPECT_THROW(read_rough_path(bad), std::runtime_error);
}

TEST(NoisePath, TwoSidedWindow) {
    const NoisePath a = NoisePath::generate(20, 2, 1.0, 8);
    EXPECT_EQ(a.values().col(static_cast<long>(a.zero_index())).norm(), 0.0);
    // The positive side refines consistently.
    const NoisePath b = NoisePath::generate(20, 2, 1.0, 10);
    for (std::size_t i = 0; i < a.fine_grid().size(); ++i)
        EXPECT_EQ((a.values().col(static_cast<long>(i)) - b.values().col(static_cast<long>(4 * i))).norm(), 0.0);
}
