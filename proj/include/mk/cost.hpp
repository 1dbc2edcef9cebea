#pragma once

#include <Eigen/Dense>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mk/dual.hpp"
#include "mk/measures.hpp"

namespace mk {

enum class CostKind { bilinear, quadratic, log_distance, power_distance, sphere_sq, hyperbolic_sq };

struct DerivativeMode {
    enum class Kind { analytic, finite_difference };
    Kind kind = Kind::analytic;
    /// Finite-difference step; 0 selects 1e-3 for orders <= 2 and 1e-2 with
    /// one Richardson halving for orders 3 and 4.
    double step = 0.0;

    static DerivativeMode analytic() { return {}; }
    static DerivativeMode finite_difference(double h = 0.0) { return {Kind::finite_difference, h}; }
};

struct CostFunction {
    CostKind kind = CostKind::quadratic;
    double power = 2.0;  // power_distance exponent
    DerivativeMode mode;
    double cut_margin = std::numbers::pi / 20.0;
    double exclusion_radius = 1e-6;

    CostFunction() = default;
    CostFunction(CostKind k, double p = 2.0) : kind(k), power(p) {}

    /// Parses "quadratic", "power_distance:1.5", "sphere_sq@fd:1e-3", ...
    static CostFunction parse(const std::string& spec);
    std::string spec() const;
    bool is_symmetric() const;
    /// Chart the cost lives on; power_distance accepts every chart.
    bool accepts(Chart chart) const;
    bool differentiable() const { return kind != CostKind::power_distance || power >= 1.0; }
};

std::string to_string(CostKind kind);

/// Squared chart distance (Euclidean, great-circle or hyperbolic).
template <class T>
T chart_sq_distance(Chart chart, const T* x, const T* y, int m) {
    switch (chart) {
        case Chart::euclidean: {
            T s = (x[0] - y[0]) * (x[0] - y[0]);
            for (int a = 1; a < m; ++a) s = s + (x[a] - y[a]) * (x[a] - y[a]);
            return s;
        }
        case Chart::sphere_embedded: {
            T s = x[0] * y[0];
            for (int a = 1; a < m; ++a) s = s + x[a] * y[a];
            return acos_sq(s);
        }
        case Chart::poincare_disk: {
            T d2 = (x[0] - y[0]) * (x[0] - y[0]);
            T nx = x[0] * x[0], ny = y[0] * y[0];
            for (int a = 1; a < m; ++a) {
                d2 = d2 + (x[a] - y[a]) * (x[a] - y[a]);
                nx = nx + x[a] * x[a];
                ny = ny + y[a] * y[a];
            }
            return acosh1p_sq(2.0 * d2 / ((1.0 - nx) * (1.0 - ny)));
        }
    }
    return T(0.0);
}

/// Cost in ambient coordinates; no admissibility checks.
template <class T>
T cost_kernel(const CostFunction& c, Chart chart, const T* x, const T* y, int m) {
    switch (c.kind) {
        case CostKind::bilinear: {
            T s = x[0] * y[0];
            for (int a = 1; a < m; ++a) s = s + x[a] * y[a];
            return -s;
        }
        case CostKind::quadratic: return 0.5 * chart_sq_distance(Chart::euclidean, x, y, m);
        case CostKind::log_distance: return -0.5 * log_(chart_sq_distance(Chart::euclidean, x, y, m));
        case CostKind::power_distance: return pow_(chart_sq_distance(chart, x, y, m), 0.5 * c.power);
        case CostKind::sphere_sq: return 0.5 * chart_sq_distance(Chart::sphere_embedded, x, y, m);
        case CostKind::hyperbolic_sq: return 0.5 * chart_sq_distance(Chart::poincare_disk, x, y, m);
    }
    return T(0.0);
}

/// Throws DomainError when (x, y) lies outside the cost's admissible domain.
void check_admissible(const CostFunction& c, Chart chart, const double* x, const double* y, int m);

/// Validated evaluation c(x, y).
double cost_eval(const CostFunction& c, const Point& x, const Point& y);
/// Unvalidated evaluation on ambient coordinates.
inline double cost_eval_raw(const CostFunction& c, Chart chart, const double* x, const double* y, int m) {
    return cost_kernel<double>(c, chart, x, y, m);
}

enum class Side { x, y };

struct Direction {
    Side side;
    Eigen::VectorXd v;
};

/// Mixed directional derivative of (xi, eta) -> c(x(xi), y(eta)) at the chart
/// origins, one derivative per direction (1 to 4 directions).
double directional_derivative(const CostFunction& c, const LocalChart& cx, const LocalChart& cy,
                              std::span<const Direction> dirs);

enum class DerivativeOrder { Dx, Dy, Dxy, Dxx, Dyy, Cxxyy, Cxxy, Cxyy };

/// Dense derivative tensor. Index order follows the order name: Cxxy has
/// shape (n, n, n) with entries c_{ij,r}; Cxyy has entries c_{m,kl}.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    double& at(std::initializer_list<int> idx);
    double at(std::initializer_list<int> idx) const;
    Eigen::VectorXd vector() const;
    Eigen::MatrixXd matrix() const;
};

Tensor cost_derivatives(const CostFunction& c, const LocalChart& cx, const LocalChart& cy, DerivativeOrder order);
Tensor cost_derivatives(const CostFunction& c, const Point& x, const Point& y, DerivativeOrder order);

Eigen::VectorXd grad_x(const CostFunction& c, const LocalChart& cx, const LocalChart& cy);
/// Mixed Hessian C(i, j) = d^2 c / dx^i dy^j.
Eigen::MatrixXd mixed_hessian(const CostFunction& c, const LocalChart& cx, const LocalChart& cy);
Eigen::MatrixXd hessian_xx(const CostFunction& c, const LocalChart& cx, const LocalChart& cy);

}  // namespace mk
