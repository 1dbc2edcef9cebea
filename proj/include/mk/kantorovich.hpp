#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mk/cost.hpp"
#include "mk/measures.hpp"
#include "mk/parallel.hpp"

namespace mk {

struct PlanEntry {
    int source;
    int target;
    double mass;
};

/// Optimal plan with dual certificate. Duals follow the convention
/// c(x_i, y_j) + u_i + v_j >= 0 with equality on the support.
struct TransportSolution {
    std::vector<PlanEntry> plan;
    Eigen::VectorXd dual_u;
    Eigen::VectorXd dual_v;
    double primal_cost = 0.0;
    double dual_value = 0.0;
    double gap = 0.0;
    std::vector<int> dropped_sources;
    std::vector<int> dropped_targets;
    Eigen::MatrixXd cost;  // c(x_i, y_j) for all pairs
    long iterations = 0;
    long degenerate_pivots = 0;

    /// max over the support of |c + u + v|
    double slackness_defect() const;
    /// max over all pairs of -(c + u + v), clipped at 0
    double feasibility_defect() const;
    double relative_gap() const;
    Eigen::VectorXd row_sums() const;
    Eigen::VectorXd column_sums() const;
};

/// Cost matrix c(x_i, y_j); parallel over rows.
Eigen::MatrixXd cost_matrix(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostFunction& c);
Eigen::MatrixXd cost_matrix_serial(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostFunction& c);

/// Transportation LP by network simplex on an explicit cost matrix.
TransportSolution solve_transport(const Eigen::VectorXd& supply, const Eigen::VectorXd& demand,
                                  const Eigen::MatrixXd& cost);

TransportSolution solve_plan(const DiscreteMeasure& mu_plus, const DiscreteMeasure& mu_minus, const CostFunction& c);

/// d_p for p >= 1 (W^{1/p}) and W itself for 0 < p < 1, with c = d^p in
/// the measures' chart metric.
double wasserstein_p(const DiscreteMeasure& mu_plus, const DiscreteMeasure& mu_minus, double p);

struct CycleOptions {
    int k_max = 3;
    /// Exhaustive enumeration while C(s, k) stays at or below this cap.
    std::uint64_t exhaustive_cap = 5000;
    /// Random subsets drawn per k beyond the cap.
    std::uint64_t trials = 10000;
    std::uint64_t seed = 1;
    double tol = 1e-8;
};

struct CycleReport {
    std::uint64_t subsets_checked = 0;
    std::uint64_t cycles_checked = 0;
    std::uint64_t violations = 0;
    std::vector<bool> exhaustive;  // per k = 2..k_max
    double worst_violation = -std::numeric_limits<double>::infinity();
    std::vector<int> witness;      // support indices of the worst subset
    std::vector<int> witness_perm; // sigma on the witness
    bool passed = true;
    std::uint64_t seed = 0;
};

/// pair_cost(a, b) = c(x_a, y_b) over support pairs (x_a, y_a). Reports the
/// worst sum_i c(x_i,y_i) - sum_i c(x_i,y_sigma(i)) over checked cycles.
CycleReport check_cyclical_monotonicity(const Eigen::MatrixXd& pair_cost, const CycleOptions& opt = {});
CycleReport check_cyclical_monotonicity_serial(const Eigen::MatrixXd& pair_cost, const CycleOptions& opt = {});
CycleReport check_cyclical_monotonicity(const TransportSolution& sol, const CycleOptions& opt = {});

/// Support cost matrix of a solution: entry (a, b) = c(x_{i_a}, y_{j_b}).
Eigen::MatrixXd support_pair_cost(const TransportSolution& sol);
Eigen::MatrixXd support_pair_cost(std::span<const Point> xs, std::span<const Point> ys, const CostFunction& c);

struct SpacelikeReport {
    std::uint64_t pairs = 0;
    /// max of c(x0,y0) + c(x1,y1) - c(x0,y1) - c(x1,y0)
    double worst_excess = -std::numeric_limits<double>::infinity();
    /// bilinear only: min <dx, dy> and max |dw| - |dz| in rotated coordinates
    double min_inner = std::numeric_limits<double>::quiet_NaN();
    double worst_lipschitz_excess = std::numeric_limits<double>::quiet_NaN();
    int witness_a = -1, witness_b = -1;
    bool passed = true;
};

SpacelikeReport minty_spacelike_check(std::span<const Point> xs, std::span<const Point> ys, const CostFunction& c,
                                      double tol = 1e-8);
SpacelikeReport minty_spacelike_check(const TransportSolution& sol, const DiscreteMeasure& mu,
                                      const DiscreteMeasure& nu, const CostFunction& c, double tol = 1e-8);

}  // namespace mk
