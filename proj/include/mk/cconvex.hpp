#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "mk/cost.hpp"
#include "mk/kantorovich.hpp"
#include "mk/measures.hpp"

namespace mk {

enum class TransformDirection { x_to_y, y_to_x };

/// Values attached to a finite atom set.
struct AtomField {
    std::vector<Point> atoms;
    Eigen::VectorXd values;
};

/// Values on the cell centres of a grid.
struct PotentialField {
    GridGeometry grid;
    std::vector<double> values;

    double at(const std::vector<int>& idx) const { return values[grid.flat(idx)]; }
    /// Centred-difference gradient at interior cell k (one-sided at edges).
    Eigen::VectorXd gradient(std::size_t k) const;
    /// Centred second differences (9-point stencil in 2-D); interior cells only.
    Eigen::MatrixXd hessian(std::size_t k) const;
    bool interior(std::size_t k, int layer = 1) const;
};

/// cost(i, j) = c(x_i, y_j). x_to_y: out_j = max_i -cost(i,j) - values_i;
/// y_to_x: out_i = max_j -cost(i,j) - values_j.
Eigen::VectorXd c_transform(const Eigen::MatrixXd& cost, const Eigen::VectorXd& values, TransformDirection dir);
Eigen::VectorXd c_transform_serial(const Eigen::MatrixXd& cost, const Eigen::VectorXd& values, TransformDirection dir);

/// Transform of a field on its atoms onto the target atoms.
AtomField c_transform(const AtomField& field, std::span<const Point> targets, const CostFunction& c,
                      TransformDirection dir);
/// Grid version: values of v^c (dir y_to_x) or u^c~ at the grid cell centres.
PotentialField c_transform_to_grid(const AtomField& field, const GridGeometry& grid, const CostFunction& c,
                                   TransformDirection dir);

/// sup-norm of u - (u^c~)^c for u on the x atoms, transforms taken through
/// the y atoms.
double c_convexity_defect(const Eigen::MatrixXd& cost, const Eigen::VectorXd& u);
bool is_c_convex(const Eigen::MatrixXd& cost, const Eigen::VectorXd& u, double tol);
bool is_c_convex(const AtomField& u, std::span<const Point> dual_atoms, const CostFunction& c, double tol);

struct CExpOptions {
    int max_iter = 60;
    double tol = 1e-10;
};

/// Y(x, p): the solution y of D_x c(x, y) + p = 0, with p in the chart at x.
Point c_exponential(const CostFunction& c, const Point& x, const Eigen::VectorXd& p, const CExpOptions& opt = {});
/// Same, starting Newton from a given guess.
Point c_exponential(const CostFunction& c, const Point& x, const Eigen::VectorXd& p, const Point& guess,
                    const CExpOptions& opt = {});

struct MapRow {
    int source;
    int target;          // target carrying the largest mass
    double mass;         // total row mass
    double fraction;     // share of the row mass sent to target
    bool split;
};

struct MapTable {
    std::vector<MapRow> rows;
    std::vector<int> split_rows;
    bool is_monge() const { return split_rows.empty(); }
};

MapTable extract_map(const TransportSolution& sol, double split_threshold = 1e-6);

struct ResidualField {
    GridGeometry grid;
    std::vector<double> values;  // NaN where not evaluated
    std::vector<char> masked;    // Y undefined
    std::size_t evaluated = 0;
    std::size_t masked_count = 0;
    double median_abs = 0.0;
    double max_abs = 0.0;
};

/// r = det(D^2u + D^2_xx c(x,Y)) f-(Y) / |det D^2_xy c(x,Y)| - f+(x) at
/// interior cells, Y = Y(x, Du(x)). u must live on f+'s grid.
ResidualField monge_ampere_residual(const PotentialField& u, const CostFunction& c, const GridMeasure& f_plus,
                                    const GridMeasure& f_minus);

struct IsoperimetricOptions {
    int resolution = 256;      // shape raster is expected at this resolution
    double ring_outer = 0.01;  // thickness of the outermost ring of the disk partition
    double ring_ratio = 1.3;
    int max_sectors = 64;
    double mass_tol = 1e-7;
    double chain_tol = 0.03;   // relative slack in lhs <= flux <= perimeter
};

struct IsoperimetricReport {
    double area = 0.0;            // before rescaling
    double scale = 1.0;           // linear rescaling applied to reach area pi
    double lhs = 0.0;             // n * Vol(M+)
    double flux = 0.0;            // boundary integral of Du . normal
    double perimeter = 0.0;       // H^1(boundary M+)
    double ratio = 0.0;           // flux / lhs
    double perimeter_ratio = 0.0; // perimeter / lhs = perimeter / (2 pi)
    double max_mass_error = 0.0;
    int targets = 0;
    bool chain_holds = false;     // lhs <= flux <= perimeter within tolerance
};

/// Transport argument for the isoperimetric inequality on a planar shape
/// given as an indicator density.
IsoperimetricReport isoperimetric_check(const GridMeasure& shape, const IsoperimetricOptions& opt = {});

}  // namespace mk
