#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "mk/errors.hpp"
#include "mk/io.hpp"
#include "test_support.hpp"

using namespace mk;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("mk_io_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

DiscreteMeasure random_measure(std::mt19937_64& rng, Chart chart, int n) {
    std::vector<Point> atoms;
    std::vector<double> w;
    std::uniform_real_distribution<double> u(0.1, 1.0);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        atoms.push_back(test::random_point(rng, chart, 2));
        w.push_back(u(rng));
        total += w.back();
    }
    for (double& x : w) x /= total;
    return DiscreteMeasure(atoms, w);
}

}  // namespace

TEST(Io, DiscreteMeasureRoundTripIsExact) {
    std::mt19937_64 rng(3);
    for (Chart chart : {Chart::euclidean, Chart::sphere_embedded, Chart::poincare_disk}) {
        auto m = random_measure(rng, chart, 9);
        auto j = io::to_json(m);
        auto back = io::discrete_measure_from_json(io::json::parse(j.dump()));
        ASSERT_EQ(back.size(), m.size());
        EXPECT_EQ(back.chart(), chart);
        for (std::size_t i = 0; i < m.size(); ++i) {
            EXPECT_EQ(back.weight(i), m.weight(i));
            EXPECT_EQ(back.atom(i).coords, m.atom(i).coords);
        }
        EXPECT_EQ(io::to_json(back).dump(), j.dump());
    }
}

TEST(Io, GridMeasureAndPotentialRoundTrip) {
    GridGeometry g{Chart::euclidean, {-1.0, 0.0}, {1.0, 0.5}, {5, 3}};
    std::vector<double> d(g.size());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = 1.0 + 0.1 * k;
    GridMeasure m(g, d, true);
    auto back = io::grid_measure_from_json(io::json::parse(io::to_json(m).dump()));
    EXPECT_EQ(back.density(), m.density());
    EXPECT_EQ(back.geometry().shape, g.shape);
    EXPECT_EQ(back.geometry().lo, g.lo);

    PotentialField u{g, d};
    auto ub = io::potential_field_from_json(io::to_json(u));
    EXPECT_EQ(ub.values, u.values);
    EXPECT_EQ(io::to_json(ub), io::to_json(u));
}

TEST(Io, RejectsMalformedDocuments) {
    EXPECT_THROW(io::discrete_measure_from_json(io::json{{"chart", "euclidean"}}), ValidationError);
    io::json j{{"chart", "euclidean"}, {"box", {{0.0, 1.0}}}, {"shape", {4}}, {"density", {1.0, 1.0}}};
    EXPECT_THROW(io::grid_measure_from_json(j), ValidationError);
    io::json bad{{"chart", "torus"}, {"atoms", {{0.0}}}, {"weights", {1.0}}};
    EXPECT_THROW(io::discrete_measure_from_json(bad), Error);
    io::json outside{{"chart", "poincare_disk"}, {"atoms", {{1.5, 0.0}}}, {"weights", {1.0}}};
    EXPECT_THROW(io::discrete_measure_from_json(outside), DomainError);
    auto dir = scratch_dir("bad");
    std::ofstream(dir / "x.json") << "{ not json";
    EXPECT_THROW(io::read_json(dir / "x.json"), ValidationError);
    std::ofstream(dir / "x.pgm") << "P5\n2 2\n255\n";
    EXPECT_THROW(io::read_pgm(dir / "x.pgm"), ValidationError);
}

TEST(Io, TransportSolutionAndPlanCsv) {
    std::mt19937_64 rng(5);
    auto mu = random_measure(rng, Chart::euclidean, 7);
    auto nu = random_measure(rng, Chart::euclidean, 5);
    auto sol = solve_plan(mu, nu, CostFunction(CostKind::quadratic));
    const auto j = io::to_json(sol);
    auto back = io::transport_solution_from_json(io::json::parse(j.dump()));
    EXPECT_EQ(io::to_json(back).dump(), j.dump());
    EXPECT_EQ(back.cost, sol.cost);
    EXPECT_EQ(back.slackness_defect(), sol.slackness_defect());

    auto dir = scratch_dir("plan");
    io::write_plan_csv(dir / "plan.csv", sol.plan);
    auto plan = io::read_plan_csv(dir / "plan.csv");
    ASSERT_EQ(plan.size(), sol.plan.size());
    for (std::size_t k = 0; k < plan.size(); ++k) {
        EXPECT_EQ(plan[k].source, sol.plan[k].source);
        EXPECT_EQ(plan[k].target, sol.plan[k].target);
        EXPECT_EQ(plan[k].mass, sol.plan[k].mass);
    }
    std::ofstream(dir / "bad.csv") << "0;1;0.5\n";
    EXPECT_THROW(io::read_plan_csv(dir / "bad.csv"), ValidationError);
}

TEST(Io, NaNWrittenAsNull) {
    ResidualField r;
    r.grid = GridGeometry{Chart::euclidean, {0.0, 0.0}, {1.0, 1.0}, {2, 2}};
    r.values = {1.0, std::nan(""), -2.0, 0.5};
    r.masked = {0, 1, 0, 0};
    r.evaluated = 3;
    r.masked_count = 1;
    const auto j = io::to_json(r);
    EXPECT_TRUE(j["values"][1].is_null());
    EXPECT_NE(j.dump().find("null"), std::string::npos);
    auto back = io::residual_from_json(io::json::parse(j.dump()));
    EXPECT_TRUE(std::isnan(back.values[1]));
    EXPECT_EQ(back.values[2], -2.0);
    EXPECT_EQ(io::to_json(back).dump(), j.dump());
}

TEST(Io, PgmRoundTripAndAffineEncoding) {
    auto dir = scratch_dir("pgm");
    std::vector<double> v{0.0, 1.0, 0.25, std::nan(""), -1.0, 3.0};
    io::AffineEncoding enc;
    auto r = io::encode_affine(v, 2, 3, enc);
    EXPECT_TRUE(enc.has_missing);
    EXPECT_EQ(enc.lo, -1.0);
    EXPECT_EQ(enc.hi, 3.0);
    EXPECT_EQ(r.pixels[3], 0);
    EXPECT_EQ(r.pixels[4], 1);
    EXPECT_EQ(r.pixels[5], 255);
    io::write_pgm(dir / "a.pgm", r);
    io::write_json(io::sidecar_path(dir / "a.pgm"), io::to_json(enc));
    auto rb = io::read_pgm(dir / "a.pgm");
    EXPECT_EQ(rb.pixels, r.pixels);
    EXPECT_EQ(rb.rows, 2);
    EXPECT_EQ(rb.cols, 3);
    auto eb = io::affine_encoding_from_json(io::read_json(dir / "a.pgm.json"));
    auto dec = io::decode_affine(rb, eb);
    const double step = (enc.hi - enc.lo) / 254.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (std::isnan(v[k]))
            EXPECT_TRUE(std::isnan(dec[k]));
        else
            EXPECT_LE(std::fabs(dec[k] - v[k]), 0.5 * step + 1e-12);
    }
    // comments are allowed anywhere in the header
    std::ofstream(dir / "c.pgm") << "P2\n# made by hand\n2 1\n# max\n9\n3 9\n";
    auto c = io::read_pgm(dir / "c.pgm");
    EXPECT_EQ(c.pixels, (std::vector<int>{3, 9}));
    EXPECT_EQ(c.maxval, 9);
}

TEST(Io, LabelRasterUsesOffsetLevels) {
    auto r = io::encode_labels({-1, 0, 2, 1}, 2, 2, -1);
    EXPECT_EQ(r.pixels, (std::vector<int>{0, 1, 3, 2}));
    EXPECT_EQ(r.maxval, 3);
    EXPECT_THROW(io::encode_labels({-2}, 1, 1, -1), ValidationError);
    auto p = io::palette_json({{0, "outside"}, {1, "a"}});
    EXPECT_EQ(p["palette"][1]["name"], "a");
}

TEST(Io, CurvatureReportRoundTrip) {
    CertifyOptions opt;
    opt.samples = 20;
    auto rep = certify_conditions(CostFunction(CostKind::hyperbolic_sq), DomainSampler::for_cost(CostFunction(CostKind::hyperbolic_sq)), opt);
    const auto j = io::to_json(rep);
    auto back = io::curvature_report_from_json(io::json::parse(j.dump()));
    EXPECT_EQ(io::to_json(back).dump(), j.dump());
    EXPECT_EQ(back.verdicts.at("A3").status, VerdictStatus::violated);
    EXPECT_EQ(back.samples.size(), rep.samples.size());
}

TEST(Io, ScreeningAndSemiDiscreteRoundTrip) {
    ScreeningOptions opt;
    opt.resolution = 8;
    auto s = solve_rochet_chone(ScreeningProblem::rochet_chone(), opt);
    const auto j = io::to_json(s);
    auto back = io::screening_solution_from_json(io::json::parse(j.dump()));
    EXPECT_EQ(io::to_json(back).dump(), j.dump());
    EXPECT_EQ(back.labels, s.labels);

    auto sc = loeper_demo(LoeperGeometry::euclidean, 1.0, 0.4, 32);
    const auto sj = io::to_json(sc.solution);
    auto sb = io::semidiscrete_from_json(io::json::parse(sj.dump()));
    EXPECT_EQ(io::to_json(sb).dump(), sj.dump());
    EXPECT_EQ(assign_labels(sb, sb.weights), sc.solution.labels);

    const auto lj = io::to_json(io::loeper_report(sc));
    EXPECT_EQ(io::to_json(io::loeper_report_from_json(io::json::parse(lj.dump()))).dump(), lj.dump());
}

TEST(Io, WriteJsonIsStable) {
    auto dir = scratch_dir("stable");
    io::json j{{"b", 0.1}, {"a", {1, 2, 3}}, {"c", 1e-300}};
    io::write_json(dir / "1.json", j);
    io::write_json(dir / "2.json", io::read_json(dir / "1.json"));
    EXPECT_EQ(slurp(dir / "1.json"), slurp(dir / "2.json"));
    EXPECT_EQ(slurp(dir / "1.json").back(), '\n');
}
