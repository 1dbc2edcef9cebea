#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mk/cost.hpp"
#include "mk/measures.hpp"

namespace mk {

struct SemiDiscreteOptions {
    double mass_tol = 1e-6;
    int max_iterations = 200;
};

/// Precomputed costs and chart gradients of c(., y_i) at every source cell
/// with positive mass. Cell masses are integrated exactly for the model in
/// which each score -c(x, y_i) - v_i is affine across a grid cell.
class SemiDiscreteProblem {
public:
    SemiDiscreteProblem(const GridMeasure& source, const DiscreteMeasure& targets, const CostFunction& c);

    struct Evaluation {
        Eigen::VectorXd masses;
        Eigen::MatrixXd jacobian;  // d masses / d v, filled when requested
        double integral_u = 0.0;   // integral of max_i (-c - v_i)
        double cost = 0.0;         // transport cost of the induced assignment
        std::vector<int> labels;   // per grid cell, -1 where the source has no mass
        std::size_t ties = 0;
    };

    Evaluation evaluate(const Eigen::VectorXd& v, bool jacobian, bool labels) const;
    Evaluation evaluate_serial(const Eigen::VectorXd& v, bool jacobian, bool labels) const;

    /// Weights giving every target a cell of positive mass (closed-form costs);
    /// zero otherwise.
    Eigen::VectorXd initial_weights() const;

    /// Per target, the smallest amount by which its score trails the best
    /// score at a cell centre (zero for targets that win somewhere).
    Eigen::VectorXd score_gaps(const Eigen::VectorXd& v) const;

    /// Kantorovich dual -integral(u) - v . nu.
    double dual(const Evaluation& e, const Eigen::VectorXd& v) const;

    std::size_t targets() const { return n_; }
    const Eigen::VectorXd& target_weights() const { return nu_; }
    const GridMeasure& source() const { return source_; }

private:
    friend struct SemiDiscreteKernel;
    GridMeasure source_;
    std::size_t n_ = 0;
    int dim_ = 0;
    Eigen::VectorXd nu_;
    std::vector<std::size_t> support_;  // grid cells with positive mass
    std::vector<double> cost_;          // support.size() x n
    std::vector<double> grad_;          // support.size() x n x dim
    // flat quadratic and bilinear costs are evaluated on the fly
    int closed_form_ = 0;               // 0 none, 1 quadratic, 2 bilinear
    std::vector<double> centers_;       // support.size() x dim
    std::vector<double> ys_;            // n x dim
    std::vector<double> half_;          // half cell widths
    double scale_ = 1.0;
};

struct SemiDiscreteSolution {
    GridMeasure source;
    DiscreteMeasure targets;
    CostFunction cost;
    Eigen::VectorXd weights;  // v, normalized so that v_0 = 0
    std::vector<int> labels;
    std::size_t ties = 0;
    double tie_fraction = 0.0;
    bool tie_warning = false;
    Eigen::VectorXd cell_masses;
    Eigen::VectorXd mass_errors;
    double max_mass_error = 0.0;
    double transport_cost = 0.0;
    double dual_value = 0.0;
    int iterations = 0;
    std::vector<double> dual_trace;
    std::vector<double> error_trace;
};

SemiDiscreteSolution solve_semidiscrete(const GridMeasure& source, const DiscreteMeasure& targets,
                                        const CostFunction& c, const SemiDiscreteOptions& opt = {});
SemiDiscreteSolution solve_semidiscrete(const GridMeasure& source, const DiscreteMeasure& targets,
                                        const CostFunction& c, double mass_tol);

/// Labels of every grid cell for given weights; ties go to the lowest index.
std::vector<int> assign_labels(const SemiDiscreteSolution& s, const Eigen::VectorXd& v);

struct ComponentReport {
    int target = 0;
    int count = 0;
    std::vector<double> masses;  // in discovery order (row-major scan)
    std::vector<std::size_t> sizes;
};

ComponentReport cell_connectivity(const GridGeometry& grid, const std::vector<int>& labels,
                                  const std::vector<double>& masses, int target);
ComponentReport cell_connectivity(const SemiDiscreteSolution& s, int target);

/// Samples pairs of cell centres in the target's cell and checks that the
/// segment between them stays inside the cell (scores compared exactly).
struct ConvexityReport {
    int target = 0;
    int pairs = 0;
    int failures = 0;
    bool convex = true;
};
ConvexityReport cell_convexity(const SemiDiscreteSolution& s, int target, int pairs = 2000,
                               std::uint64_t seed = 1);

enum class LoeperGeometry { euclidean, sphere, hyperbolic };
std::string to_string(LoeperGeometry g);
LoeperGeometry parse_loeper_geometry(const std::string& name);

struct LoeperScenario {
    LoeperGeometry geometry = LoeperGeometry::euclidean;
    double ball_radius = 0.0;
    double spacing = 0.0;
    int resolution = 0;
    SemiDiscreteSolution solution;
    std::vector<ComponentReport> components;
    std::vector<ConvexityReport> convexity;
    int middle_components() const { return components.at(1).count; }
};

/// Uniform measure on a geodesic ball centred at y2, three targets of mass
/// 1/3 on a geodesic through the centre with consecutive distance `spacing`.
LoeperScenario loeper_demo(LoeperGeometry g, double ball_radius, double spacing, int resolution,
                           double mass_tol = 1e-6);

struct LoeperScanEntry {
    double ball_radius;
    double spacing;
    int middle_components;
};

struct LoeperScan {
    std::vector<LoeperScanEntry> tried;
    int first_disconnecting = -1;
    LoeperScenario scenario;  // first disconnecting configuration, else the last one tried
};

std::vector<double> default_loeper_radii();
std::vector<double> default_loeper_spacings();

LoeperScan loeper_scan(LoeperGeometry g, int resolution, const std::vector<double>& radii,
                       const std::vector<double>& spacings, double mass_tol = 1e-6);

}  // namespace mk
