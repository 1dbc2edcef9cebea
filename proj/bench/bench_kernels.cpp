#include <benchmark/benchmark.h>

#include <random>

#include "mk/cconvex.hpp"
#include "mk/kantorovich.hpp"
#include "mk/mtw.hpp"
#include "mk/semidiscrete.hpp"

using namespace mk;

namespace {

DiscreteMeasure cloud(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Point> atoms;
    for (int i = 0; i < n; ++i) atoms.push_back(Point{u(rng), u(rng)});
    return DiscreteMeasure::uniform(atoms);
}

template <bool Parallel>
void BM_CostMatrix(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    auto mu = cloud(n, 1), nu = cloud(n, 2);
    CostFunction c(CostKind::power_distance, 1.5);
    for (auto _ : state) {
        auto m = Parallel ? cost_matrix(mu, nu, c) : cost_matrix_serial(mu, nu, c);
        benchmark::DoNotOptimize(m.data());
    }
    state.SetItemsProcessed(state.iterations() * n * n);
}

template <bool Parallel>
void BM_CTransform(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    Eigen::MatrixXd C = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return g(rng); });
    Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); });
    for (auto _ : state) {
        auto out = Parallel ? c_transform(C, v, TransformDirection::y_to_x)
                            : c_transform_serial(C, v, TransformDirection::y_to_x);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * n * n);
}

template <bool Parallel>
void BM_CycleCheck(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    auto mu = cloud(n, 4), nu = cloud(n, 5);
    auto sol = solve_plan(mu, nu, CostFunction(CostKind::quadratic));
    const Eigen::MatrixXd pc = support_pair_cost(sol);
    CycleOptions opt;
    opt.k_max = 3;
    for (auto _ : state) {
        auto rep = Parallel ? check_cyclical_monotonicity(pc, opt) : check_cyclical_monotonicity_serial(pc, opt);
        benchmark::DoNotOptimize(rep.worst_violation);
    }
}

template <bool Parallel>
void BM_SemiDiscreteEvaluate(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    GridGeometry g{Chart::euclidean, {0.0, 0.0}, {1.0, 1.0}, {n, n}};
    GridMeasure src(g, std::vector<double>(g.size(), 1.0), true);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> ys;
    for (int i = 0; i < 16; ++i) ys.push_back(Point{u(rng), u(rng)});
    SemiDiscreteProblem pb(src, DiscreteMeasure::uniform(ys), CostFunction(CostKind::power_distance, 1.5));
    Eigen::VectorXd v = Eigen::VectorXd::Zero(16);
    for (auto _ : state) {
        auto e = Parallel ? pb.evaluate(v, true, true) : pb.evaluate_serial(v, true, true);
        benchmark::DoNotOptimize(e.integral_u);
    }
    state.SetItemsProcessed(state.iterations() * n * n);
}

template <bool Parallel>
void BM_Certify(benchmark::State& state) {
    CostFunction c(CostKind::sphere_sq);
    CertifyOptions opt;
    opt.samples = static_cast<int>(state.range(0));
    opt.parallel = Parallel;
    for (auto _ : state) {
        auto r = certify_conditions(c, DomainSampler::for_cost(c), opt);
        benchmark::DoNotOptimize(r.min_general);
    }
}

}  // namespace

BENCHMARK(BM_CostMatrix<false>)->Name("cost_matrix/serial")->Arg(200)->Arg(800);
BENCHMARK(BM_CostMatrix<true>)->Name("cost_matrix/parallel")->Arg(200)->Arg(800);
BENCHMARK(BM_CTransform<false>)->Name("c_transform/serial")->Arg(500)->Arg(2000);
BENCHMARK(BM_CTransform<true>)->Name("c_transform/parallel")->Arg(500)->Arg(2000);
BENCHMARK(BM_CycleCheck<false>)->Name("cycle_check/serial")->Arg(60);
BENCHMARK(BM_CycleCheck<true>)->Name("cycle_check/parallel")->Arg(60);
BENCHMARK(BM_SemiDiscreteEvaluate<false>)->Name("semidiscrete_evaluate/serial")->Arg(128)->Arg(256);
BENCHMARK(BM_SemiDiscreteEvaluate<true>)->Name("semidiscrete_evaluate/parallel")->Arg(128)->Arg(256);
BENCHMARK(BM_Certify<false>)->Name("certify/serial")->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Certify<true>)->Name("certify/parallel")->Arg(500)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
