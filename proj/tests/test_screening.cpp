#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mk/errors.hpp"
#include "mk/screening.hpp"

using namespace mk;

namespace {

// Monotone slopes s_1 <= ... <= s_N on a level set; with u(0) = total negative
// slope the energy is the sum over intervals of h (s^2/2 + s^-) + s h (1 - 2 x_mid).
double one_d_dynamic_program(int intervals, int levels) {
    const double h = 1.0 / intervals;
    std::vector<double> slope(2 * levels + 1);
    for (int k = 0; k <= 2 * levels; ++k) slope[k] = -1.0 + double(k) / levels;
    std::vector<double> best(slope.size(), 0.0);
    for (int i = 0; i < intervals; ++i) {
        const double xm = (i + 0.5) * h;
        double run = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < slope.size(); ++k) {
            run = std::min(run, best[k]);
            const double s = slope[k];
            best[k] = run + h * (0.5 * s * s + std::max(-s, 0.0)) + s * h * (1.0 - 2.0 * xm);
        }
    }
    return *std::min_element(best.begin(), best.end());
}

// Piecewise-linear quadrature of |Du|^2/2 - x.Du + u, cell by cell over both diagonal splits.
double direct_energy(const PotentialField& u) {
    const GridGeometry& g = u.grid;
    const int nx = g.shape[0], ny = g.shape[1];
    const double hx = g.width(0), hy = g.width(1);
    const double x0 = g.lo[0] + 0.5 * hx, y0 = g.lo[1] + 0.5 * hy;
    auto at = [&](int i, int j) { return u.values[i * ny + j]; };
    double total = 0.0, area = 0.0;
    for (int i = 0; i + 1 < nx; ++i)
        for (int j = 0; j + 1 < ny; ++j) {
            const double a = at(i, j), b = at(i + 1, j), c = at(i, j + 1), d = at(i + 1, j + 1);
            const double xi = x0 + i * hx, yj = y0 + j * hy;
            struct Tri {
                double gx, gy, cx, cy, mean;
            };
            const Tri tris[4] = {
                {(b - a) / hx, (d - b) / hy, xi + 2 * hx / 3, yj + hy / 3, (a + b + d) / 3},
                {(d - c) / hx, (c - a) / hy, xi + hx / 3, yj + 2 * hy / 3, (a + d + c) / 3},
                {(b - a) / hx, (c - a) / hy, xi + hx / 3, yj + hy / 3, (a + b + c) / 3},
                {(d - c) / hx, (d - b) / hy, xi + 2 * hx / 3, yj + 2 * hy / 3, (b + d + c) / 3},
            };
            for (const Tri& t : tris)
                total += 0.25 * hx * hy *
                         (0.5 * (t.gx * t.gx + t.gy * t.gy) - t.cx * t.gx - t.cy * t.gy + t.mean);
            area += hx * hy;
        }
    return total / area;
}

PotentialField random_convex(std::mt19937_64& rng, int resolution) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PotentialField f;
    f.grid = screening_grid(ScreeningProblem::rochet_chone(), resolution);
    std::vector<Eigen::Vector3d> planes(3);
    for (auto& p : planes) p = Eigen::Vector3d(g(rng), g(rng), g(rng));
    const double q = u(rng);
    for (std::size_t k = 0; k < f.grid.size(); ++k) {
        Eigen::VectorXd x = f.grid.center(k);
        double v = 0.0;
        for (const auto& p : planes) v = std::max(v, p[0] * x[0] + p[1] * x[1] + p[2]);
        f.values.push_back(v + q * x.squaredNorm());
    }
    return f;
}

}  // namespace

TEST(Screening, NullProductDominates) {
    auto pb = ScreeningProblem::rochet_chone();
    pb.kappa = 10.0;
    ScreeningOptions opt;
    opt.resolution = 16;
    auto s = solve_rochet_chone(pb, opt);
    EXPECT_NEAR(s.f0, 1.0, 1e-12);
    for (std::size_t k = 0; k < s.u.values.size(); ++k) EXPECT_LE(s.u.values[k] - s.reservation[k], 1e-8);
    EXPECT_NEAR(s.energy, 0.0, 1e-8);
    EXPECT_NEAR(check_exclusion(s).excluded_fraction, 1.0, 1e-12);
}

TEST(Screening, OneDimensionalMatchesDynamicProgram) {
    const double oracle = one_d_dynamic_program(400, 800);
    EXPECT_NEAR(oracle, -1.0 / 12.0, 1e-3);
    ScreeningOptions opt;
    opt.resolution = 128;
    auto s = solve_rochet_chone(ScreeningProblem::one_dimensional(), opt);
    EXPECT_NEAR(s.energy, oracle, 1e-3);
    // the optimal menu sells y = 2x - 1 to types above one half
    for (std::size_t k = 0; k < s.u.values.size(); ++k) {
        const double x = s.u.grid.center(k)[0];
        EXPECT_NEAR(s.u.values[k], x > 0.5 ? (x - 0.5) * (x - 0.5) : 0.0, 5e-3);
    }
}

TEST(Screening, RochetChoneStrata) {
    ScreeningOptions opt;
    opt.resolution = 32;
    auto s = solve_rochet_chone(ScreeningProblem::rochet_chone(), opt);
    EXPECT_GT(s.f0, 0.0);
    EXPECT_GT(s.f1, 0.0);
    EXPECT_GT(s.f2, 0.0);
    EXPECT_NEAR(s.f0 + s.f1 + s.f2, 1.0, 1e-9);
    EXPECT_GE(s.min_slack, -1e-9);
    EXPECT_GE(s.min_convexity, -1e-12);
    EXPECT_GE(s.kkt_worst, -1e-8);
    EXPECT_LT(s.energy, 0.0);  // L(u0) = 0
    EXPECT_GT(s.diagonal_fraction, 0.5);
    EXPECT_TRUE(check_exclusion(s).positive);
    for (std::size_t i = 1; i < s.energy_trace.size(); ++i) EXPECT_LE(s.energy_trace[i], s.energy_trace[i - 1]);
    EXPECT_NEAR(s.energy, principal_losses(s.u, ScreeningProblem::rochet_chone()), 1e-10);
}

TEST(Screening, StrataStableUnderRefinement) {
    ScreeningOptions opt;
    opt.resolution = 32;
    auto a = solve_rochet_chone(ScreeningProblem::rochet_chone(), opt);
    opt.resolution = 64;
    auto b = solve_rochet_chone(ScreeningProblem::rochet_chone(), opt);
    EXPECT_NEAR(a.f0, b.f0, 0.25 * b.f0);
    EXPECT_NEAR(a.f1, b.f1, 0.25 * b.f1);
    EXPECT_NEAR(a.f2, b.f2, 0.25 * b.f2);
    EXPECT_LT(b.energy, a.energy);
}

TEST(PrincipalLosses, ZeroAndDirectQuadrature) {
    auto pb = ScreeningProblem::rochet_chone();
    PotentialField z;
    z.grid = screening_grid(pb, 16);
    z.values.assign(z.grid.size(), 0.0);
    EXPECT_EQ(principal_losses(z, pb), 0.0);
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        auto u = random_convex(rng, 24);
        EXPECT_NEAR(principal_losses(u, pb), direct_energy(u), 1e-10);
    }
}

TEST(PrincipalLosses, MidpointConvexity) {
    auto pb = ScreeningProblem::rochet_chone();
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        auto a = random_convex(rng, 20), b = random_convex(rng, 20);
        PotentialField m = a;
        for (std::size_t k = 0; k < m.values.size(); ++k) m.values[k] = 0.5 * (a.values[k] + b.values[k]);
        EXPECT_LE(principal_losses(m, pb), 0.5 * (principal_losses(a, pb) + principal_losses(b, pb)) + 1e-10);
    }
}

TEST(PrincipalLosses, ProductSpaceEnforced) {
    auto pb = ScreeningProblem::rochet_chone();
    pb.y_lo = {0.0, 0.0};
    pb.y_hi = {0.5, 0.5};
    PotentialField u;
    u.grid = screening_grid(pb, 8);
    for (std::size_t k = 0; k < u.grid.size(); ++k) u.values.push_back(u.grid.center(k)[0]);
    EXPECT_THROW(principal_losses(u, pb), DomainError);
}

TEST(Classify, SyntheticFields) {
    auto pb = ScreeningProblem::rochet_chone();
    ScreeningSolution s;
    s.u.grid = screening_grid(pb, 16);
    const std::size_t n = s.u.grid.size();
    s.reservation.assign(n, 0.0);
    s.node_mass.assign(n, 1.0 / n);
    s.y.assign(n, Eigen::VectorXd::Zero(2));
    s.u.values.assign(n, 0.0);
    classify_regions(s);
    EXPECT_NEAR(s.f0, 1.0, 1e-12);
    EXPECT_NEAR(check_exclusion(s).excluded_fraction, 1.0, 1e-12);

    for (std::size_t k = 0; k < n; ++k) {
        Eigen::VectorXd x = s.u.grid.center(k);
        s.u.values[k] = 0.5 * x.squaredNorm();
        s.y[k] = x;
    }
    classify_regions(s);
    for (std::size_t k = 0; k < n; ++k)
        if (s.u.interior(k)) EXPECT_EQ(s.labels[k], Region::full_rank);

    for (std::size_t k = 0; k < n; ++k) s.u.values[k] += 1.0;
    classify_regions(s);
    EXPECT_EQ(check_exclusion(s).excluded_fraction, 0.0);
    EXPECT_FALSE(check_exclusion(s).positive);
}

TEST(Welfare, LinearWithoutBudgetIsUnbounded) {
    ScreeningOptions opt;
    opt.resolution = 8;
    auto s = solve_welfare(ScreeningProblem::rochet_chone(), WelfareFunction::linear(), 0.0, opt);
    EXPECT_TRUE(s.unbounded);
}

TEST(Welfare, CappedBeatsReservation) {
    ScreeningOptions opt;
    opt.resolution = 16;
    auto pb = ScreeningProblem::rochet_chone();
    auto w = WelfareFunction::capped(0.1);
    auto s = solve_welfare(pb, w, 1.0, opt);
    EXPECT_FALSE(s.unbounded);
    // maximized value -lambda L + W; at u0 both terms vanish
    EXPECT_GE(-s.objective, 0.0);
    EXPECT_GE(s.min_slack, -1e-9);
}

TEST(Welfare, LargeBudgetWeightApproachesProfitMaximum) {
    ScreeningOptions opt;
    opt.resolution = 16;
    auto pb = ScreeningProblem::rochet_chone();
    const double target = solve_rochet_chone(pb, opt).energy;
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {2.0, 4.0, 8.0, 16.0, 64.0}) {
        auto s = solve_welfare(pb, WelfareFunction::linear(), lambda, opt);
        const double gap = s.energy - target;
        EXPECT_GE(gap, -1e-9);
        EXPECT_LT(gap, prev);
        prev = gap;
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(Welfare, RejectsConvexWelfare) {
    WelfareFunction w;
    w.kind = WelfareFunction::Kind::capped;
    w.cap = 0.0;
    EXPECT_NO_THROW(WelfareFunction::parse("capped:0.1"));
    EXPECT_THROW(WelfareFunction::parse("cubic"), ValidationError);
    EXPECT_THROW(solve_welfare(ScreeningProblem::rochet_chone(), w, -1.0), ValidationError);
}
