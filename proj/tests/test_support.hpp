#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "mk/measures.hpp"

namespace mk::test {

inline Eigen::VectorXd random_unit(std::mt19937_64& rng, int m) {
    std::normal_distribution<double> g;
    Eigen::VectorXd v(m);
    for (int i = 0; i < m; ++i) v[i] = g(rng);
    return v / v.norm();
}

inline Eigen::VectorXd random_box(std::mt19937_64& rng, int n, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = u(rng);
    return v;
}

/// Random point of the given chart; sphere points stay in a cap of angular
/// radius cap around the north pole, disk points within Euclidean radius r.
inline Point random_point(std::mt19937_64& rng, Chart chart, int n, double r = 0.6) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (chart == Chart::sphere_embedded) {
        Eigen::VectorXd dir = random_unit(rng, n);
        double ang = r * std::sqrt(u(rng));
        Eigen::VectorXd x(n + 1);
        x.head(n) = std::sin(ang) * dir;
        x[n] = std::cos(ang);
        return Point(x / x.norm(), chart);
    }
    if (chart == Chart::poincare_disk) {
        Eigen::VectorXd dir = random_unit(rng, n);
        return Point(r * std::pow(u(rng), 1.0 / n) * dir, chart);
    }
    return Point(random_box(rng, n, -1.0, 1.0), chart);
}

inline double rel_err(double a, double b) { return std::fabs(a - b) / std::max(1.0, std::fabs(b)); }

}  // namespace mk::test
