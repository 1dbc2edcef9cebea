#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mk/cconvex.hpp"
#include "mk/measures.hpp"

namespace mk {

/// Agents x in a box with benefit b(x, y) = x . y, manufacturing cost
/// a(y) = |y|^2 / 2 + kappa |y| and a null product y0.
struct ScreeningProblem {
    std::vector<double> lo{0.0, 0.0}, hi{1.0, 1.0};
    /// Agent density; uniform when absent. Evaluated cell-wise.
    std::optional<GridMeasure> agents;
    double kappa = 0.0;
    Eigen::VectorXd null_product;  // empty means the origin
    /// Optional product box; empty means unbounded.
    std::vector<double> y_lo, y_hi;

    int dim() const { return static_cast<int>(lo.size()); }
    Eigen::VectorXd null_y() const;
    double manufacturing_cost(const Eigen::VectorXd& y) const;
    double benefit(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const { return x.dot(y); }
    /// u0(x) = b(x, y0) - a(y0).
    double reservation(const Eigen::VectorXd& x) const;
    double density(const Eigen::VectorXd& x) const;
    void validate() const;

    static ScreeningProblem rochet_chone();
    static ScreeningProblem one_dimensional();
};

enum class Region { exclusion = 0, bunching = 1, full_rank = 2 };
std::string to_string(Region r);

struct WelfareFunction {
    enum class Kind { linear, capped };
    Kind kind = Kind::linear;
    double cap = 0.0;

    double operator()(double s) const { return kind == Kind::linear ? s : std::min(s, cap); }
    static WelfareFunction linear() { return {}; }
    static WelfareFunction capped(double c) { return {Kind::capped, c}; }
    static WelfareFunction parse(const std::string& spec);
    std::string spec() const;
};

struct ScreeningOptions {
    int resolution = 64;
    /// Stop once the barrier gap bound falls below tol * max(1, |objective|).
    double tol = 1e-9;
    std::vector<std::array<int, 2>> directions{{1, 0}, {0, 1}, {1, 1}, {1, -1}};
    int max_newton = 3000;
    double eps_u = -1.0;     // negative selects 1e-6 max(max u - min u, 1e-3)
    double eps_rank = -1.0;  // negative selects 0.05 median largest singular value
    int kkt_trials = 100;
    std::uint64_t seed = 1;
};

struct ScreeningSolution {
    PotentialField u;                     // nodal values; grid cell centres are the nodes
    std::vector<double> reservation;      // u0 at the nodes
    std::vector<Eigen::VectorXd> y;       // Du at the nodes
    std::vector<double> node_mass;        // agent mass lumped to nodes, sums to 1
    std::vector<Region> labels;
    std::vector<bool> boundary;           // labels computed with shifted stencils
    double f0 = 0.0, f1 = 0.0, f2 = 0.0;  // exclusion, bunching, full rank
    double eps_u = 0.0, eps_rank = 0.0;
    int hessian_step = 1;                 // stencil spacing in nodes used for the labels
    double diagonal_fraction = 0.0;       // bunched nodes with |y1 - y2| within grid tolerance
    double energy = 0.0;                  // principal's losses L(u)
    double objective = 0.0;               // the minimized objective (L, or the welfare form)
    double welfare = 0.0;                 // integral of w(u) for welfare runs
    double min_convexity = 0.0;           // smallest enforced second difference
    double min_slack = 0.0;               // smallest u - u0
    int active_constraints = 0;           // constraints with slack <= 1e-7
    double kkt_worst = 0.0;               // min energy change over feasible perturbations
    double gap_bound = 0.0;
    std::vector<double> energy_trace;
    int iterations = 0;
    int newton_steps = 0;
    bool unbounded = false;
    std::uint64_t seed = 0;
};

ScreeningSolution solve_rochet_chone(const ScreeningProblem& problem, const ScreeningOptions& opt = {});
ScreeningSolution solve_rochet_chone(const ScreeningProblem& problem, int resolution, double tol);

/// max -lambda L(u) + integral w(u) over the same cone.
ScreeningSolution solve_welfare(const ScreeningProblem& problem, const WelfareFunction& w, double lambda,
                                const ScreeningOptions& opt = {});

/// Labels nodes; eps values <= 0 select the defaults.
void classify_regions(ScreeningSolution& s, double eps_u = -1.0, double eps_rank = -1.0);

/// L(u) = integral of a(Du) - b(x, Du) + u, piecewise-linear quadrature on the
/// triangulated node grid (both diagonals averaged).
double principal_losses(const PotentialField& u, const ScreeningProblem& problem);

struct ExclusionReport {
    double excluded_fraction = 0.0;
    bool positive = false;  // more than a boundary layer, f0 > 2 / resolution
};
ExclusionReport check_exclusion(const ScreeningSolution& s);

/// Node grid with resolution intervals per axis over the problem box.
GridGeometry screening_grid(const ScreeningProblem& problem, int resolution);

}  // namespace mk
