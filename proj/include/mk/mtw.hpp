#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mk/cost.hpp"
#include "mk/measures.hpp"

namespace mk {

/// Cross-curvature (-c_{ij,kl} + c_{ij,r} c^{r,m} c_{m,kl}) p^i p^j q^k q^l
/// with p in the x-chart and q in the y-chart.
double cross_curvature(const CostFunction& c, const LocalChart& cx, const LocalChart& cy, const Eigen::VectorXd& p,
                       const Eigen::VectorXd& q);
double cross_curvature(const CostFunction& c, const Point& x, const Point& y, const Eigen::VectorXd& p,
                       const Eigen::VectorXd& q);

/// Samples points in a geodesic ball around a centre: Euclidean balls,
/// sphere caps (gnomonic about the centre) and hyperbolic balls in the disk.
struct DomainSampler {
    Chart chart = Chart::euclidean;
    int dim = 2;
    double radius = 1.0;          // geodesic radius
    double boundary_fraction = 0.25;

    Point sample(std::mt19937_64& rng, bool on_boundary) const;
    static DomainSampler for_cost(const CostFunction& c, int dim = 2);
};

struct CrossSample {
    Point x, y;
    Eigen::VectorXd p, q;
    double cross = 0.0;
    double orthogonality_defect = 0.0;  // p^i c_{i,j} q^j
    double det = 0.0;                   // det c_{i,j}
    bool orthogonal = false;
    bool degenerate = false;
};

enum class VerdictStatus { holds, violated, inconclusive };
std::string to_string(VerdictStatus s);

struct Verdict {
    VerdictStatus status = VerdictStatus::inconclusive;
    double value = 0.0;  // A2: min |det|; A3, B3: min cross; A3s: achieved margin
    int witness = -1;    // sample index, -1 when none
};

struct CrossCurvatureReport {
    std::string cost;
    std::uint64_t seed = 0;
    double margin = 0.0;
    double tol = 0.0;
    std::vector<CrossSample> samples;
    std::map<std::string, Verdict> verdicts;  // A2, A3, A3s, B3
    double min_orthogonal = 0.0, max_orthogonal = 0.0;
    double min_general = 0.0, max_general = 0.0;
    int degenerate = 0;
};

struct CertifyOptions {
    int samples = 1000;        // of each kind, orthogonal and general
    double margin = 1e-4;      // A3s threshold for unit p, q
    double tol = 1e-8;         // slack for A3 and B3
    std::uint64_t seed = 7;
    bool parallel = true;  // false runs the serial reference loop
};

CrossCurvatureReport certify_conditions(const CostFunction& c, const DomainSampler& sampler,
                                        const CertifyOptions& opt = {});

struct MetricTensor {
    Eigen::MatrixXd h;  // 2n x 2n, x coordinates first
    Eigen::VectorXd eigenvalues;
    int positive = 0, negative = 0, zero = 0;
};

MetricTensor metric_tensor_h(const CostFunction& c, const Point& x, const Point& y);

struct CSegment {
    Point x0, y0, y1;
    std::vector<double> t;
    std::vector<Point> y;
    std::vector<double> residual;
    double max_residual = 0.0;
};

/// Points y_t with D_x c(x0, y_t) = (1 - t) D_x c(x0, y0) + t D_x c(x0, y1).
CSegment trace_c_segment(const CostFunction& c, const Point& x0, const Point& y0, const Point& y1, int n_t);

struct MaxPrincipleReport {
    int points = 0;
    int t_samples = 0;
    double max_defect = 0.0;         // max f(x,t) - max(f(x,0), f(x,1))
    int witness_x = -1;
    double witness_t = 0.0;
    double convexity_defect = 0.0;   // max f(x,t_k) - (f(x,t_{k-1}) + f(x,t_{k+1})) / 2
    int convexity_witness = -1;
    bool passed = false;             // max_defect <= 1e-8
};

MaxPrincipleReport loeper_max_principle_check(const CostFunction& c, const CSegment& seg,
                                              const std::vector<Point>& xs);
MaxPrincipleReport loeper_max_principle_check(const CostFunction& c, const CSegment& seg, const GridGeometry& grid);

/// Fourth mixed derivative d^4/ds^2 dt^2 c(x0 + s p, y(t)) at s = t = 0
/// along the c-segment through y0 with initial velocity q, by central
/// differences with two Richardson steps.
double cross_along_c_segment(const CostFunction& c, const Point& x0, const Point& y0, const Eigen::VectorXd& p,
                             const Eigen::VectorXd& q, double h = 0.02);

}  // namespace mk
