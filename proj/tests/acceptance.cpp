// Acceptance gate: one line per criterion, nonzero exit if any fails.
// Usage: mk_acceptance [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mk/cconvex.hpp"
#include "mk/cli.hpp"
#include "mk/errors.hpp"
#include "mk/io.hpp"
#include "mk/kantorovich.hpp"
#include "mk/mtw.hpp"
#include "mk/screening.hpp"
#include "mk/semidiscrete.hpp"

using namespace mk;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::VectorXd random_unit(std::mt19937_64& rng, int m) {
    std::normal_distribution<double> g;
    Eigen::VectorXd v(m);
    for (int i = 0; i < m; ++i) v[i] = g(rng);
    return v / v.norm();
}

Point random_point(std::mt19937_64& rng, Chart chart) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (chart == Chart::sphere_embedded) {
        Eigen::VectorXd dir = random_unit(rng, 2);
        const double ang = 0.7 * std::sqrt(u(rng));
        return Point(Eigen::Vector3d(std::sin(ang) * dir[0], std::sin(ang) * dir[1], std::cos(ang)), chart);
    }
    if (chart == Chart::poincare_disk) return Point(0.7 * std::sqrt(u(rng)) * random_unit(rng, 2), chart);
    return Point(Eigen::Vector2d(2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0), chart);
}

struct CatalogueEntry {
    CostFunction cost;
    Chart chart;
};

std::vector<CatalogueEntry> catalogue() {
    return {{CostFunction(CostKind::quadratic), Chart::euclidean},
            {CostFunction(CostKind::bilinear), Chart::euclidean},
            {CostFunction(CostKind::log_distance), Chart::euclidean},
            {CostFunction(CostKind::power_distance, 0.5), Chart::euclidean},
            {CostFunction(CostKind::power_distance, 1.0), Chart::euclidean},
            {CostFunction(CostKind::power_distance, 1.5), Chart::euclidean},
            {CostFunction(CostKind::sphere_sq), Chart::sphere_embedded},
            {CostFunction(CostKind::hyperbolic_sq), Chart::poincare_disk}};
}

DiscreteMeasure random_measure(std::mt19937_64& rng, Chart chart, int n, bool equal_weights = false) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<Point> atoms;
    std::vector<double> w;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        atoms.push_back(random_point(rng, chart));
        w.push_back(equal_weights ? 1.0 : u(rng));
        total += w.back();
    }
    for (double& x : w) x /= total;
    return DiscreteMeasure(atoms, w);
}

// Criteria 1 and 5 share their instances.
std::vector<TransportSolution> g_plans;
std::vector<std::string> g_plan_costs;

Outcome criterion1() {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> size(2, 200);
    const auto cat = catalogue();
    double worst_gap = 0.0, worst_slack = 0.0;
    g_plans.clear();
    g_plan_costs.clear();
    double solve_time = 0.0;
    for (int t = 0; t < 100; ++t) {
        const auto& e = cat[t % cat.size()];
        auto mu = random_measure(rng, e.chart, size(rng));
        auto nu = random_measure(rng, e.chart, size(rng));
        const auto t0 = std::chrono::steady_clock::now();
        auto sol = solve_plan(mu, nu, e.cost);
        solve_time += seconds_since(t0);
        worst_gap = std::max(worst_gap, std::fabs(sol.relative_gap()));
        worst_slack = std::max(worst_slack, sol.slackness_defect());
        g_plans.push_back(std::move(sol));
        g_plan_costs.push_back(e.cost.spec());
    }
    const bool pass = worst_gap <= 1e-9 && worst_slack <= 1e-8 && solve_time <= 10.0;
    return {pass, fmt("100 instances, max |relative gap| %.2e (<= 1e-9), max slackness defect %.2e (<= 1e-8), "
                      "solve time %.2f s (<= 10 s)",
                      worst_gap, worst_slack, solve_time)};
}

Outcome criterion2() {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> size(1, 7);
    const auto cat = catalogue();
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const auto& e = cat[t % cat.size()];
        const int n = size(rng);
        auto mu = random_measure(rng, e.chart, n, true), nu = random_measure(rng, e.chart, n, true);
        auto sol = solve_plan(mu, nu, e.cost);
        const Eigen::MatrixXd C = cost_matrix(mu, nu, e.cost);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += C(i, perm[i]);
            best = std::min(best, s / n);
        } while (std::next_permutation(perm.begin(), perm.end()));
        worst = std::max(worst, std::fabs(sol.primal_cost - best));
    }
    return {worst <= 1e-12, fmt("50 instances with m = n <= 7, max |LP - permutation optimum| %.2e (<= 1e-12)", worst)};
}

Outcome criterion3() {
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<int> size(1, 12);
    double worst = -std::numeric_limits<double>::infinity();
    for (double p : {1.0, 2.0}) {
        for (int t = 0; t < 200; ++t) {
            const Chart chart = t % 2 ? Chart::euclidean : Chart::sphere_embedded;
            auto a = random_measure(rng, chart, size(rng));
            auto b = random_measure(rng, chart, size(rng));
            auto c = random_measure(rng, chart, size(rng));
            const double ab = wasserstein_p(a, b, p), bc = wasserstein_p(b, c, p), ac = wasserstein_p(a, c, p);
            worst = std::max({worst, ac - ab - bc, ab - ac - bc, bc - ab - ac});
        }
    }
    return {worst <= 1e-8, fmt("200 triples each for p = 1, 2, max triangle excess %.2e (<= 1e-8)", worst)};
}

// Dyadic atoms and values keep every sum in the transform exact in double
// precision, so exact arithmetic over the finite sets is what is computed.
Outcome criterion4() {
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> d(-64, 64), size(2, 40);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        CostFunction c(t % 2 ? CostKind::quadratic : CostKind::bilinear);
        std::vector<Point> xs, ys;
        const int m = size(rng), n = size(rng);
        for (int i = 0; i < m; ++i) xs.push_back(Point{d(rng) / 16.0, d(rng) / 16.0});
        for (int j = 0; j < n; ++j) ys.push_back(Point{d(rng) / 16.0, d(rng) / 16.0});
        AtomField v{ys, Eigen::VectorXd::NullaryExpr(n, [&] { return d(rng) / 32.0; })};
        auto vc = c_transform(v, xs, c, TransformDirection::y_to_x);
        auto vcc = c_transform(vc, ys, c, TransformDirection::x_to_y);
        auto vccc = c_transform(vcc, xs, c, TransformDirection::y_to_x);
        worst = std::max(worst, (vccc.values - vc.values).cwiseAbs().maxCoeff());
    }
    return {worst == 0.0, fmt("100 random dyadic fields, max |v^{cc~c} - v^c| = %.3g (== 0)", worst)};
}

Outcome criterion5() {
    if (g_plans.empty()) criterion1();
    std::uint64_t violations = 0, cycles = 0;
    double worst = -std::numeric_limits<double>::infinity();
    bool exhaustive = true;
    for (const auto& sol : g_plans) {
        CycleOptions opt;
        opt.k_max = 3;
        opt.exhaustive_cap = std::numeric_limits<std::uint64_t>::max();
        auto rep = check_cyclical_monotonicity(sol, opt);
        violations += rep.violations;
        cycles += rep.cycles_checked;
        if (rep.subsets_checked > 0) worst = std::max(worst, rep.worst_violation);
        for (bool e : rep.exhaustive) exhaustive = exhaustive && e;
    }
    return {violations == 0 && exhaustive,
            fmt("%zu plans, %llu cycles (all 2- and 3-cycles%s), violations %llu (== 0), worst excess %.2e",
                g_plans.size(), static_cast<unsigned long long>(cycles), exhaustive ? "" : ", NOT exhaustive",
                static_cast<unsigned long long>(violations), worst)};
}

Outcome criterion6() {
    const auto t0 = std::chrono::steady_clock::now();
    CertifyOptions opt;
    opt.samples = 5000;
    auto run = [&](CostKind k) {
        CostFunction c(k);
        return certify_conditions(c, DomainSampler::for_cost(c), opt);
    };
    auto bil = run(CostKind::bilinear), sph = run(CostKind::sphere_sq), hyp = run(CostKind::hyperbolic_sq);
    const double elapsed = seconds_since(t0);
    const bool b = bil.verdicts.at("B3").status == VerdictStatus::holds &&
                   bil.verdicts.at("A3s").status == VerdictStatus::violated;
    const bool s = sph.verdicts.at("A3s").status == VerdictStatus::holds && sph.verdicts.at("A3s").value > 0.0;
    const bool h = hyp.verdicts.at("A3").status == VerdictStatus::violated && hyp.verdicts.at("A3").witness >= 0;
    return {b && s && h && elapsed <= 60.0,
            fmt("bilinear B3 %s / A3s %s; sphere_sq A3s %s, margin %.4f; hyperbolic_sq A3 %s, witness #%d "
                "(cross %.3f); %.1f s (<= 60 s)",
                to_string(bil.verdicts.at("B3").status).c_str(), to_string(bil.verdicts.at("A3s").status).c_str(),
                to_string(sph.verdicts.at("A3s").status).c_str(), sph.verdicts.at("A3s").value,
                to_string(hyp.verdicts.at("A3").status).c_str(), hyp.verdicts.at("A3").witness,
                hyp.verdicts.at("A3").value, elapsed)};
}

Outcome criterion7() {
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst_inv = 0.0;
    for (CostKind k : {CostKind::sphere_sq, CostKind::hyperbolic_sq, CostKind::log_distance, CostKind::quadratic}) {
        CostFunction c(k);
        DomainSampler s = DomainSampler::for_cost(c);
        for (int t = 0; t < 50; ++t) {
            Point x = s.sample(rng, false), y = s.sample(rng, false);
            if ((x.coords - y.coords).norm() < 0.1) continue;
            const LocalChart cx = chart_at(x), cy = chart_at(y);
            Eigen::Matrix2d A;
            do {
                A << 1.0 + 0.5 * u(rng), 0.5 * u(rng), 0.5 * u(rng), 1.0 + 0.5 * u(rng);
            } while (std::fabs(A.determinant()) < 0.2);
            LocalChart cy2 = cy;
            cy2.frame = cy.frame * A;
            const Eigen::VectorXd p = random_unit(rng, 2), q = random_unit(rng, 2);
            const double a = cross_curvature(c, cx, cy, p, q);
            const double b = cross_curvature(c, cx, cy2, p, Eigen::VectorXd(A.inverse() * q));
            worst_inv = std::max(worst_inv, std::fabs(a - b) / std::max(1.0, std::fabs(a)));
        }
    }
    double worst_seg = 0.0;
    std::string worst_cost = "none";
    for (CostKind k : {CostKind::sphere_sq, CostKind::hyperbolic_sq, CostKind::log_distance}) {
        CostFunction c(k);
        DomainSampler s = DomainSampler::for_cost(c);
        s.radius = k == CostKind::log_distance ? 0.5 : 0.6;
        int done = 0;
        while (done < 10) {
            Point x = s.sample(rng, false), y = s.sample(rng, false);
            if ((x.coords - y.coords).norm() < 0.2) continue;
            const Eigen::VectorXd p = random_unit(rng, 2), q = random_unit(rng, 2);
            const double tensor = cross_curvature(c, x, y, p, q);
            const double fd = -cross_along_c_segment(c, x, y, p, q);
            const double err = std::fabs(tensor - fd) / std::max(1.0, std::fabs(tensor));
            if (err > worst_seg) {
                worst_seg = err;
                worst_cost = c.spec();
            }
            ++done;
        }
    }
    return {worst_inv <= 1e-6 && worst_seg <= 1e-4,
            fmt("reparametrization max rel. change %.2e (<= 1e-6); c-segment fourth derivative max rel. error %.2e "
                "(<= 1e-4, worst on %s)",
                worst_inv, worst_seg, worst_cost.c_str())};
}

Outcome criterion8() {
    std::mt19937_64 rng(808);
    CostFunction sphere(CostKind::sphere_sq);
    DomainSampler s = DomainSampler::for_cost(sphere);
    GridGeometry grid{Chart::sphere_embedded, {-0.4, -0.4}, {0.4, 0.4}, {24, 24}};
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        Point x0 = s.sample(rng, false), y0 = s.sample(rng, false), y1 = s.sample(rng, false);
        auto seg = trace_c_segment(sphere, x0, y0, y1, 33);
        worst = std::max(worst, loeper_max_principle_check(sphere, seg, grid).max_defect);
    }
    CostFunction hyp(CostKind::hyperbolic_sq);
    const double a = std::tanh(1.0), b = std::tanh(0.5);
    Point x0(Eigen::Vector2d(0.0, 0.0), Chart::poincare_disk);
    Point y0(Eigen::Vector2d(-a, 0.0), Chart::poincare_disk), y1(Eigen::Vector2d(a, 0.0), Chart::poincare_disk);
    auto seg = trace_c_segment(hyp, x0, y0, y1, 33);
    std::vector<Point> xs{x0, Point(Eigen::Vector2d(0.0, b), Chart::poincare_disk)};
    auto rep = loeper_max_principle_check(hyp, seg, xs);
    return {worst <= 1e-8 && rep.max_defect > 0.0,
            fmt("sphere_sq max defect %.2e over 10 configurations (<= 1e-8); hyperbolic_sq witness defect %.4f "
                "at t = %.3f (> 0)",
                worst, rep.max_defect, rep.witness_t)};
}

Outcome criterion9() {
    const auto t0 = std::chrono::steady_clock::now();
    auto scan = loeper_scan(LoeperGeometry::hyperbolic, 512, default_loeper_radii(), default_loeper_spacings());
    const auto& hs = scan.scenario;
    const int m512 = hs.middle_components();
    const int m1024 = loeper_demo(LoeperGeometry::hyperbolic, hs.ball_radius, hs.spacing, 1024).middle_components();
    auto eu = loeper_demo(LoeperGeometry::euclidean, 1.0, 0.4, 512);
    auto sp = loeper_demo(LoeperGeometry::sphere, 1.0, 0.4, 512);
    bool eu_convex = true, sp_connected = true;
    for (int i = 0; i < 3; ++i) {
        eu_convex = eu_convex && eu.convexity[i].convex && eu.components[i].count == 1;
        sp_connected = sp_connected && sp.components[i].count == 1;
    }
    const double elapsed = seconds_since(t0);
    return {m512 >= 2 && m1024 >= 2 && eu_convex && sp_connected && elapsed <= 300.0,
            fmt("hyperbolic (R %.1f, spacing %.1f) middle components %d at 512, %d at 1024 (>= 2); euclidean 3 "
                "convex cells %s; sphere 3 connected cells %s; %.0f s (<= 300 s)",
                hs.ball_radius, hs.spacing, m512, m1024, eu_convex ? "yes" : "no", sp_connected ? "yes" : "no",
                elapsed)};
}

// Smooth non-constant densities with the target sampled on an incommensurate
// grid, so the residual is a genuine discretization error.
double residual_1d(int N) {
    auto fplus = [](double x) { return 1.0 + 0.5 * std::sin(2.0 * x); };
    const double a = 2.0, b = 0.5;  // Y = a x + b
    GridGeometry g{Chart::euclidean, {0.0}, {1.0}, {N}};
    const int M = N * 3 / 2 + 1;
    GridGeometry gt{Chart::euclidean, {b}, {a + b}, {M}};
    std::vector<double> dp(g.size()), dm(gt.size());
    for (std::size_t k = 0; k < g.size(); ++k) dp[k] = fplus(g.center(k)[0]);
    for (std::size_t k = 0; k < gt.size(); ++k) dm[k] = fplus((gt.center(k)[0] - b) / a) / a;
    PotentialField u{g, {}};
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double x = g.center(k)[0];
        u.values.push_back(0.5 * a * x * x + b * x);
    }
    return monge_ampere_residual(u, CostFunction(CostKind::bilinear), GridMeasure(g, dp, true),
                                 GridMeasure(gt, dm, true))
        .median_abs;
}

double residual_2d(int N) {
    auto dens = [](const Eigen::VectorXd& x) { return 1.0 + 0.5 * std::sin(2.0 * x[0]) * std::cos(3.0 * x[1]); };
    GridGeometry g{Chart::euclidean, {0.0, 0.0}, {1.0, 1.0}, {N, N}};
    const int M = N * 3 / 2 + 1;
    GridGeometry gt{Chart::euclidean, {0.0, 0.0}, {1.0, 1.0}, {M, M}};
    std::vector<double> dp(g.size()), dm(gt.size());
    for (std::size_t k = 0; k < g.size(); ++k) dp[k] = dens(g.center(k));
    for (std::size_t k = 0; k < gt.size(); ++k) dm[k] = dens(gt.center(k));
    PotentialField u{g, {}};
    for (std::size_t k = 0; k < g.size(); ++k) u.values.push_back(0.5 * g.center(k).squaredNorm());
    return monge_ampere_residual(u, CostFunction(CostKind::bilinear), GridMeasure(g, dp, true),
                                 GridMeasure(gt, dm, true))
        .median_abs;
}

Outcome criterion10() {
    std::vector<double> r1, r2;
    for (int N : {64, 128, 256, 512}) r1.push_back(residual_1d(N));
    for (int N : {16, 32, 64, 128}) r2.push_back(residual_2d(N));
    double worst = std::numeric_limits<double>::infinity();
    std::string f1, f2;
    for (std::size_t i = 1; i < r1.size(); ++i) {
        worst = std::min(worst, r1[i - 1] / r1[i]);
        f1 += fmt("%s%.2f", i > 1 ? "," : "", r1[i - 1] / r1[i]);
    }
    for (std::size_t i = 1; i < r2.size(); ++i) {
        worst = std::min(worst, r2[i - 1] / r2[i]);
        f2 += fmt("%s%.2f", i > 1 ? "," : "", r2[i - 1] / r2[i]);
    }
    return {worst >= 1.5,
            fmt("median |r| reduction per halving: 1-D linear map [%s], 2-D identity [%s] (each >= 1.5)", f1.c_str(),
                f2.c_str())};
}

GridMeasure shape_raster(int N, double half, const std::function<bool(double, double)>& inside) {
    GridGeometry g{Chart::euclidean, {-half, -half}, {half, half}, {N, N}};
    std::vector<double> d(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) {
        auto c = g.center(k);
        if (inside(c[0], c[1])) d[k] = 1.0;
    }
    return GridMeasure(g, d, true);
}

Outcome criterion11() {
    IsoperimetricOptions opt;
    opt.resolution = 256;
    auto disk = isoperimetric_check(shape_raster(256, 1.1, [](double x, double y) { return x * x + y * y < 1.0; }),
                                    opt);
    const double a = std::sqrt(std::numbers::pi) / 2.0;
    auto square = isoperimetric_check(
        shape_raster(256, 1.3, [&](double x, double y) { return std::fabs(x) < a && std::fabs(y) < a; }), opt);
    const double lo = 2.0 * std::numbers::pi, hi = 4.0 * std::sqrt(std::numbers::pi);
    const bool pass = std::fabs(disk.ratio - 1.0) <= 0.03 && square.flux >= lo && square.flux <= hi;
    return {pass, fmt("disk ratio %.4f (1 +- 0.03); square transport bound %.4f in [2 pi, 4 sqrt(pi)] = [%.4f, %.4f]",
                      disk.ratio, square.flux, lo, hi)};
}

PotentialField random_feasible(std::mt19937_64& rng, const GridGeometry& grid) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PotentialField f;
    f.grid = grid;
    std::vector<Eigen::Vector3d> planes(3);
    for (auto& p : planes) p = Eigen::Vector3d(g(rng), g(rng), g(rng));
    const double q = u(rng);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        Eigen::VectorXd x = grid.center(k);
        double v = 0.0;  // u0 = 0 with the null product at the origin
        for (const auto& p : planes) v = std::max(v, p[0] * x[0] + p[1] * x[1] + p[2]);
        f.values.push_back(v + q * x.squaredNorm());
    }
    return f;
}

Outcome criterion12() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto pb = ScreeningProblem::rochet_chone();
    ScreeningOptions opt;
    opt.resolution = 128;
    auto s128 = solve_rochet_chone(pb, opt);
    opt.resolution = 64;
    auto s64 = solve_rochet_chone(pb, opt);
    std::mt19937_64 rng(1212);
    const GridGeometry grid = screening_grid(pb, 128);
    double worst = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < 50; ++t) {
        auto a = random_feasible(rng, grid), b = random_feasible(rng, grid);
        PotentialField m = a;
        for (std::size_t k = 0; k < m.values.size(); ++k) m.values[k] = 0.5 * (a.values[k] + b.values[k]);
        worst = std::max(worst, principal_losses(m, pb) -
                                    0.5 * (principal_losses(a, pb) + principal_losses(b, pb)));
    }
    auto rel = [](double x, double y) { return std::fabs(x - y) / std::fabs(y); };
    const double d0 = rel(s64.f0, s128.f0), d1 = rel(s64.f1, s128.f1), d2 = rel(s64.f2, s128.f2);
    const double elapsed = seconds_since(t0);
    const bool pass = s128.f0 > 0 && s128.f1 > 0 && s128.f2 > 0 && worst <= 1e-10 && d0 <= 0.25 && d1 <= 0.25 &&
                      d2 <= 0.25 && elapsed <= 600.0;
    return {pass, fmt("N=128 strata f0 %.4f f1 %.4f f2 %.4f (> 0); midpoint excess %.2e (<= 1e-10); 64 vs 128 "
                      "relative change %.3f/%.3f/%.3f (<= 0.25); %.0f s (<= 600 s)",
                      s128.f0, s128.f1, s128.f2, worst, d0, d1, d2, elapsed)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome criterion13() {
    const fs::path root = fs::temp_directory_path() / "mk_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root / "in");
    std::mt19937_64 rng(1313);
    auto put = [&](const std::string& name, const io::json& j) { io::write_json(root / "in" / name, j); };
    put("mu.json", io::to_json(random_measure(rng, Chart::euclidean, 40)));
    put("nu.json", io::to_json(random_measure(rng, Chart::euclidean, 30)));
    put("field.json", io::json{{"chart", "euclidean"},
                               {"atoms", {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}}},
                               {"values", {0.3, -0.2, 1.5, 0.1}}});
    GridGeometry g{Chart::euclidean, {0.0, 0.0}, {1.0, 1.0}, {32, 32}};
    std::vector<double> dens(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) dens[k] = 1.0 + 0.5 * std::sin(3.0 * g.center(k)[0]);
    put("f.json", io::to_json(GridMeasure(g, dens, true)));
    put("u.json", io::to_json(PotentialField{g, std::vector<double>(g.size(), 0.0)}));
    put("targets.json", io::to_json(random_measure(rng, Chart::euclidean, 5)));
    // every subcommand, driven by a config file
    const std::vector<io::json> configs{
        {{"command", "transport"}, {"mu", "mu.json"}, {"nu", "nu.json"}, {"cycle_k", 3}, {"out", "t.json"},
         {"plan_csv", "t.csv"}},
        {{"command", "wasserstein"}, {"mu", "mu.json"}, {"nu", "nu.json"}, {"p", 1}, {"out", "w.json"}},
        {{"command", "ctransform"}, {"field", "field.json"}, {"targets", "nu.json"}, {"out", "c.json"}},
        {{"command", "residual"}, {"u", "u.json"}, {"f_plus", "f.json"}, {"f_minus", "f.json"}, {"out", "r.json"},
         {"pgm", "r.pgm"}},
        {{"command", "isoperimetric"}, {"shape", "square"}, {"resolution", 64}, {"out", "i.json"}},
        {{"command", "curvature"}, {"cost", "hyperbolic_sq"}, {"samples", 500}, {"seed", 99}, {"out", "k.json"}},
        {{"command", "csegment"}, {"cost", "sphere_sq"}, {"x0", {0.0, 0.0}}, {"y0", {0.2, 0.0}},
         {"y1", {0.0, 0.3}}, {"out", "s.json"}},
        {{"command", "maxprinciple"}, {"cost", "sphere_sq"}, {"x0", {0.0, 0.0}}, {"y0", {0.2, 0.0}},
         {"y1", {0.0, 0.3}}, {"out", "mp.json"}},
        {{"command", "semidiscrete"}, {"source", "f.json"}, {"targets", "targets.json"}, {"out", "sd.json"},
         {"pgm", "sd.pgm"}},
        {{"command", "loeper"}, {"geometry", "sphere"}, {"resolution", 96}, {"out", "l.json"}, {"pgm", "l.pgm"}},
        {{"command", "screening"}, {"resolution", 16}, {"seed", 5}, {"out", "sc.json"}, {"pgm", "sc.pgm"}},
        {{"command", "welfare"}, {"resolution", 12}, {"welfare", "capped:0.1"}, {"lambda", 2}, {"out", "wf.json"}},
    };
    std::vector<std::string> failures;
    std::size_t files = 0;
    std::set<std::string> commands;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const fs::path cfg = root / "in" / ("cfg" + std::to_string(i) + ".json");
        io::write_json(cfg, configs[i]);
        std::ostringstream out, err;
        const std::string c = configs[i]["command"];
        for (const char* run : {"a", "b"}) {
            const int code =
                cli::run({"--config", cfg.string(), "--out-dir", (root / run).string()}, out, err);
            if (code != 0) failures.push_back(c + " exit " + std::to_string(code) + ": " + err.str());
        }
        commands.insert(c);
        // the map command reads the first run's transport solution in both runs
        if (c == "transport") {
            for (const char* run : {"a", "b"}) {
                const int code = cli::run({"map", "--solution", (root / "a" / "t.json").string(), "--out",
                                           (root / run / "map.json").string(), "--csv",
                                           (root / run / "map.csv").string()},
                                          out, err);
                if (code != 0) failures.push_back("map exit " + std::to_string(code));
            }
            commands.insert("map");
        }
    }
    for (const auto& e : fs::directory_iterator(root / "a")) {
        ++files;
        const fs::path other = root / "b" / e.path().filename();
        if (!fs::exists(other) || slurp(e.path()) != slurp(other)) failures.push_back(e.path().filename().string());
    }
    std::string detail = fmt("%zu subcommands, %zu output files compared byte for byte", commands.size(), files);
    if (!failures.empty()) detail += "; differing or failed: " + failures.front();
    return {failures.empty() && commands.size() == cli::subcommands().size(), detail};
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*fn)();
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "duality certificate", criterion1},       {2, "brute-force equivalence", criterion2},
        {3, "metric axioms", criterion3},             {4, "c-transform idempotence", criterion4},
        {5, "cyclical monotonicity", criterion5},     {6, "curvature verdicts", criterion6},
        {7, "cross-curvature correctness", criterion7}, {8, "maximum principle", criterion8},
        {9, "Loeper counterexample", criterion9},     {10, "Monge-Ampere residual convergence", criterion10},
        {11, "isoperimetric chain", criterion11},     {12, "screening", criterion12},
        {13, "determinism", criterion13},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
