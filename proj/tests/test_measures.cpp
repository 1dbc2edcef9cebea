#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mk/cost.hpp"
#include "mk/errors.hpp"
#include "mk/measures.hpp"
#include "test_support.hpp"

using namespace mk;
using mk::test::random_point;

namespace {

const CostFunction kCatalogue[] = {
    CostFunction(CostKind::bilinear),       CostFunction(CostKind::quadratic),
    CostFunction(CostKind::log_distance),   CostFunction(CostKind::power_distance, 3.0),
    CostFunction(CostKind::sphere_sq),      CostFunction(CostKind::hyperbolic_sq),
};

Chart chart_for(const CostFunction& c) {
    if (c.kind == CostKind::sphere_sq) return Chart::sphere_embedded;
    if (c.kind == CostKind::hyperbolic_sq) return Chart::poincare_disk;
    return Chart::euclidean;
}

std::pair<Point, Point> random_pair(std::mt19937_64& rng, const CostFunction& c, int n) {
    for (;;) {
        Point x = random_point(rng, chart_for(c), n), y = random_point(rng, chart_for(c), n);
        if ((x.coords - y.coords).norm() > 0.2) return {x, y};
    }
}

}  // namespace

TEST(CostEval, CatalogueExamples) {
    EXPECT_EQ(cost_eval(CostFunction(CostKind::bilinear), Point{1.0, 0.0}, Point{0.0, 1.0}), 0.0);
    EXPECT_EQ(cost_eval(CostFunction(CostKind::quadratic), Point{0.3, -2.0}, Point{0.3, -2.0}), 0.0);
    EXPECT_DOUBLE_EQ(cost_eval(CostFunction(CostKind::quadratic), Point{0.0, 0.0}, Point{3.0, 4.0}), 12.5);
    EXPECT_NEAR(cost_eval(CostFunction(CostKind::log_distance), Point{0.0}, Point{std::exp(1.0)}), -1.0, 1e-15);
    EXPECT_NEAR(cost_eval(CostFunction(CostKind::power_distance, 0.5), Point{0.0}, Point{4.0}), 2.0, 1e-15);
}

TEST(CostEval, SphereAndHyperbolicDistances) {
    const double a = 1.1;
    Point x({0.0, 0.0, 1.0}, Chart::sphere_embedded);
    Point y({std::sin(a), 0.0, std::cos(a)}, Chart::sphere_embedded);
    EXPECT_NEAR(cost_eval(CostFunction(CostKind::sphere_sq), x, y), 0.5 * a * a, 1e-14);
    // origin to radius r in the Poincare disk: distance 2 atanh(r)
    const double r = 0.4;
    double d = 2.0 * std::atanh(r);
    EXPECT_NEAR(cost_eval(CostFunction(CostKind::hyperbolic_sq), Point({0.0, 0.0}, Chart::poincare_disk),
                          Point({0.0, r}, Chart::poincare_disk)),
                0.5 * d * d, 1e-14);
    // near-coincident points use the series branch
    Point z({0.0, 1e-9}, Chart::poincare_disk);
    EXPECT_NEAR(cost_eval(CostFunction(CostKind::hyperbolic_sq), Point({0.0, 0.0}, Chart::poincare_disk), z),
                0.5 * 4e-18, 1e-30);
}

TEST(CostEval, DomainErrors) {
    Point n({0.0, 0.0, 1.0}, Chart::sphere_embedded);
    const double a = std::numbers::pi - 0.1;
    Point far({std::sin(a), 0.0, std::cos(a)}, Chart::sphere_embedded);
    EXPECT_THROW(cost_eval(CostFunction(CostKind::sphere_sq), n, far), DomainError);
    EXPECT_THROW(cost_eval(CostFunction(CostKind::log_distance), Point{0.5}, Point{0.5}), DomainError);
    EXPECT_THROW(validate_point(Point({1.0, 0.0}, Chart::poincare_disk)), DomainError);
    EXPECT_THROW(validate_point(Point({1.0, 0.1}, Chart::sphere_embedded)), DomainError);
    EXPECT_THROW(cost_eval(CostFunction(CostKind::sphere_sq), Point{0.0, 1.0}, Point{1.0, 0.0}), DomainError);
}

TEST(CostFunctionSpec, ParseRoundTrip) {
    for (std::string s : {"bilinear", "quadratic", "log_distance", "power_distance:1.5", "sphere_sq", "hyperbolic_sq@fd",
                          "quadratic@fd:0.001"}) {
        EXPECT_EQ(CostFunction::parse(s).spec(), s);
    }
    EXPECT_THROW(CostFunction::parse("cubic"), ValidationError);
    EXPECT_THROW(CostFunction::parse("power_distance"), ValidationError);
    EXPECT_THROW(CostFunction::parse("quadratic:2"), ValidationError);
}

TEST(CostEval, SymmetryOfCatalogue) {
    std::mt19937_64 rng(11);
    for (const auto& c : kCatalogue) {
        for (int k = 0; k < 20; ++k) {
            auto [x, y] = random_pair(rng, c, 2);
            EXPECT_TRUE(c.is_symmetric());
            EXPECT_NEAR(cost_eval(c, x, y), cost_eval(c, y, x), 1e-13 * (1.0 + std::fabs(cost_eval(c, x, y))));
        }
    }
}

TEST(CostDerivatives, BilinearAndQuadraticClosedForms) {
    Point x{0.3, -0.7}, y{1.2, 0.4};
    auto dxy = cost_derivatives(CostFunction(CostKind::bilinear), x, y, DerivativeOrder::Dxy).matrix();
    EXPECT_TRUE(dxy.isApprox(-Eigen::Matrix2d::Identity(), 1e-15));
    auto dx = cost_derivatives(CostFunction(CostKind::quadratic), x, y, DerivativeOrder::Dx).vector();
    EXPECT_NEAR((dx - (x.coords - y.coords)).norm(), 0.0, 1e-15);
    auto c4 = cost_derivatives(CostFunction(CostKind::bilinear), x, y, DerivativeOrder::Cxxyy);
    for (double v : c4.data) EXPECT_EQ(v, 0.0);
}

TEST(CostDerivatives, SphereMixedHessianMatchesGeodesicFormula) {
    std::mt19937_64 rng(5);
    CostFunction c(CostKind::sphere_sq);
    CostFunction fd = c;
    fd.mode = DerivativeMode::finite_difference();
    for (int k = 0; k < 25; ++k) {
        auto [x, y] = random_pair(rng, c, 2);
        LocalChart cx = chart_at(x), cy = chart_at(y);
        // independent closed form in the orthonormal gnomonic frames
        double s = x.coords.dot(y.coords);
        double th = std::acos(s);
        double g = -th / std::sin(th);
        double gp = (std::sin(th) - th * std::cos(th)) / std::pow(std::sin(th), 3);
        Eigen::MatrixXd oracle = g * cx.frame.transpose() * cy.frame +
                                 gp * (cx.frame.transpose() * y.coords) * (x.coords.transpose() * cy.frame);
        Eigen::MatrixXd ad = mixed_hessian(c, cx, cy);
        Eigen::MatrixXd num = mixed_hessian(fd, cx, cy);
        EXPECT_LT((ad - oracle).norm(), 1e-12 * (1.0 + oracle.norm()));
        EXPECT_LT((num - oracle).norm() / oracle.norm(), 1e-5);
    }
}

TEST(CostDerivatives, FiniteDifferencesAgreeWithAnalytic) {
    std::mt19937_64 rng(21);
    for (const auto& c : kCatalogue) {
        CostFunction fd = c;
        fd.mode = DerivativeMode::finite_difference();
        for (int k = 0; k < 10; ++k) {
            auto [x, y] = random_pair(rng, c, 2);
            for (auto order : {DerivativeOrder::Dx, DerivativeOrder::Dy, DerivativeOrder::Dxy, DerivativeOrder::Dxx}) {
                auto a = cost_derivatives(c, x, y, order), b = cost_derivatives(fd, x, y, order);
                double scale = 0.0, err = 0.0;
                for (std::size_t i = 0; i < a.data.size(); ++i) {
                    scale = std::max(scale, std::fabs(a.data[i]));
                    err = std::max(err, std::fabs(a.data[i] - b.data[i]));
                }
                EXPECT_LE(err, 1e-5 * std::max(scale, 1.0)) << c.spec() << " " << int(order) << " " << err;
            }
        }
    }
}

TEST(CostDerivatives, FiniteDifferenceSecondOrderConvergence) {
    // centred stencils: error(1e-3) should be ~100x below error(1e-2)
    std::mt19937_64 rng(33);
    for (const auto& c : kCatalogue) {
        CostFunction coarse = c, fine = c;
        coarse.mode = DerivativeMode::finite_difference(1e-2);
        fine.mode = DerivativeMode::finite_difference(1e-3);
        double e_coarse = 0.0, e_fine = 0.0;
        for (int k = 0; k < 100; ++k) {
            auto [x, y] = random_pair(rng, c, 2);
            for (auto order : {DerivativeOrder::Dx, DerivativeOrder::Dxy}) {
                auto a = cost_derivatives(c, x, y, order);
                auto b1 = cost_derivatives(coarse, x, y, order);
                auto b2 = cost_derivatives(fine, x, y, order);
                for (std::size_t i = 0; i < a.data.size(); ++i) {
                    e_coarse = std::max(e_coarse, std::fabs(a.data[i] - b1.data[i]));
                    e_fine = std::max(e_fine, std::fabs(a.data[i] - b2.data[i]));
                }
            }
        }
        if (e_coarse < 1e-9) continue;  // polynomial costs are differenced exactly
        double observed = std::log10(e_coarse / e_fine);
        EXPECT_GT(observed, 1.7) << c.spec() << " coarse " << e_coarse << " fine " << e_fine;
    }
}

TEST(CostDerivatives, HigherOrderFiniteDifferencesWithRichardson) {
    std::mt19937_64 rng(8);
    for (const auto& c : {CostFunction(CostKind::sphere_sq), CostFunction(CostKind::hyperbolic_sq),
                          CostFunction(CostKind::log_distance)}) {
        CostFunction fd = c;
        fd.mode = DerivativeMode::finite_difference();
        auto [x, y] = random_pair(rng, c, 2);
        auto a = cost_derivatives(c, x, y, DerivativeOrder::Cxxyy);
        auto b = cost_derivatives(fd, x, y, DerivativeOrder::Cxxyy);
        double scale = 0.0, err = 0.0;
        for (std::size_t i = 0; i < a.data.size(); ++i) {
            scale = std::max(scale, std::fabs(a.data[i]));
            err = std::max(err, std::fabs(a.data[i] - b.data[i]));
        }
        EXPECT_LE(err, 1e-4 * std::max(1.0, scale)) << c.spec();
    }
}

TEST(CostDerivatives, MixedHessianNondegenerate) {
    std::mt19937_64 rng(99);
    for (const auto& c : kCatalogue) {
        for (int n = 1; n <= 3; ++n) {
            for (int k = 0; k < 30; ++k) {
                auto [x, y] = random_pair(rng, c, n);
                Eigen::MatrixXd C = mixed_hessian(c, chart_at(x), chart_at(y));
                EXPECT_GE(std::fabs(C.determinant()), 1e-8) << c.spec();
            }
        }
    }
}

TEST(CostDerivatives, StencilLeavingTheDiskThrows) {
    CostFunction c(CostKind::hyperbolic_sq);
    c.mode = DerivativeMode::finite_difference(1e-2);
    Point x({0.995, 0.0}, Chart::poincare_disk), y({0.0, 0.2}, Chart::poincare_disk);
    EXPECT_THROW(cost_derivatives(c, x, y, DerivativeOrder::Dx), StencilError);
}

TEST(CostDerivatives, PowerBelowOneHasNoDerivatives) {
    EXPECT_THROW(cost_derivatives(CostFunction(CostKind::power_distance, 0.5), Point{0.0}, Point{1.0},
                                  DerivativeOrder::Dx),
                 DomainError);
}

TEST(SpecialFunctions, SeriesAndClosedFormBranchesAgree) {
    AcosSqTable f;
    Acosh1pSqTable g;
    for (int k = 0; k <= 4; ++k) {
        double a = f(0.5 + 1e-12, k), b = f(0.5 - 1e-12, k);
        EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, std::fabs(a))) << k;
        double c = g(0.5 - 1e-12, k), d = g(0.5 + 1e-12, k);
        EXPECT_NEAR(c, d, 1e-9 * std::max(1.0, std::fabs(c))) << k;
    }
    EXPECT_NEAR(f(1.0, 0), 0.0, 0.0);
    EXPECT_NEAR(f(1.0, 1), -2.0, 1e-15);
    EXPECT_NEAR(g(0.0, 1), 2.0, 1e-15);
}

TEST(Measures, Validation) {
    EXPECT_THROW(DiscreteMeasure({Point{0.0}, Point{1.0}}, {0.5, 0.6}), ValidationError);
    EXPECT_THROW(DiscreteMeasure({Point{0.0}, Point{0.0}}, {0.5, 0.5}), ValidationError);
    EXPECT_THROW(DiscreteMeasure({Point{0.0}, Point({0.0, 1.0}, Chart::sphere_embedded)}, {0.5, 0.5}),
                 ValidationError);
    EXPECT_NO_THROW(DiscreteMeasure({Point{0.0}, Point{1.0}}, {0.0, 1.0}));
    auto u = DiscreteMeasure::uniform({Point{0.0}, Point{1.0}, Point{2.0}});
    EXPECT_EQ(u.size(), 3u);
}

TEST(Measures, GridMassInvariantUnderRefinement) {
    for (Chart chart : {Chart::euclidean, Chart::poincare_disk, Chart::sphere_embedded}) {
        for (int N : {8, 16, 32, 64}) {
            GridGeometry g{chart, {-0.5, -0.5}, {0.5, 0.5}, {N, N}};
            std::vector<double> dens(g.size());
            for (std::size_t k = 0; k < g.size(); ++k) {
                auto xi = g.center(k);
                dens[k] = 1.0 + xi[0] * xi[0] + 0.5 * xi[1];
            }
            GridMeasure m(g, dens, true);
            EXPECT_NEAR(m.total_mass(), 1.0, 1e-12);
            GridMeasure again(g, m.density());
            EXPECT_NEAR(again.total_mass(), 1.0, 1e-9);
        }
    }
}

TEST(Measures, GnomonicChartRoundTrip) {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 20; ++k) {
        Point x = random_point(rng, Chart::sphere_embedded, 2);
        Point y = random_point(rng, Chart::sphere_embedded, 2);
        LocalChart lc = chart_at(x);
        Eigen::VectorXd xi = lc.coordinates(y);
        EXPECT_LT((lc.point(xi).coords - y.coords).norm(), 1e-14);
    }
}
