#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "mk/dual.hpp"

namespace mk {

enum class Chart { euclidean, sphere_embedded, poincare_disk };

std::string to_string(Chart chart);
Chart parse_chart(const std::string& name);

/// A point in one of the three supported charts. Sphere points are stored
/// in embedded coordinates, so their coordinate vector has length n + 1.
struct Point {
    Eigen::VectorXd coords;
    Chart chart = Chart::euclidean;

    Point() = default;
    Point(Eigen::VectorXd c, Chart ch = Chart::euclidean);
    Point(std::initializer_list<double> c, Chart ch = Chart::euclidean);

    /// Intrinsic dimension.
    int dim() const;
    int ambient_dim() const { return static_cast<int>(coords.size()); }
};

/// Checks chart membership, throws DomainError otherwise.
void validate_point(const Point& p);

/// Local coordinates around a base point. Euclidean and Poincare charts are
/// affine (base + F xi); sphere charts are gnomonic ((base + F xi) normalized).
struct LocalChart {
    Chart chart = Chart::euclidean;
    Eigen::VectorXd base;
    Eigen::MatrixXd frame;  // ambient_dim x dim

    int dim() const { return static_cast<int>(frame.cols()); }
    int ambient_dim() const { return static_cast<int>(frame.rows()); }

    template <class T>
    void embed(const T* xi, T* out) const {
        const int m = ambient_dim(), n = dim();
        for (int a = 0; a < m; ++a) {
            T v = T(base[a]);
            for (int i = 0; i < n; ++i) v = v + xi[i] * frame(a, i);
            out[a] = v;
        }
        if (chart == Chart::sphere_embedded) {
            T r2 = out[0] * out[0];
            for (int a = 1; a < m; ++a) r2 = r2 + out[a] * out[a];
            T inv = 1.0 / sqrt_(r2);
            for (int a = 0; a < m; ++a) out[a] = out[a] * inv;
        }
    }

    Point point(const Eigen::VectorXd& xi) const;
    /// Chart coordinates of a point (inverse of point()).
    Eigen::VectorXd coordinates(const Point& p) const;
};

/// Chart centred at p with an orthonormal frame (identity for flat charts).
LocalChart chart_at(const Point& p);
/// Orthonormal basis of the tangent space of the unit sphere at x.
Eigen::MatrixXd tangent_frame(const Eigen::VectorXd& x);

class DiscreteMeasure {
public:
    DiscreteMeasure() = default;
    DiscreteMeasure(std::vector<Point> atoms, std::vector<double> weights);
    static DiscreteMeasure uniform(std::vector<Point> atoms);

    std::size_t size() const { return atoms_.size(); }
    const std::vector<Point>& atoms() const { return atoms_; }
    const std::vector<double>& weights() const { return weights_; }
    const Point& atom(std::size_t i) const { return atoms_[i]; }
    double weight(std::size_t i) const { return weights_[i]; }
    Chart chart() const { return atoms_.front().chart; }
    int dim() const { return atoms_.front().dim(); }

private:
    std::vector<Point> atoms_;
    std::vector<double> weights_;
};

/// Regular cell-centred grid on a box in chart coordinates. Sphere grids use
/// gnomonic coordinates around the north pole (0,...,0,1).
struct GridGeometry {
    Chart chart = Chart::euclidean;
    std::vector<double> lo, hi;
    std::vector<int> shape;

    int dim() const { return static_cast<int>(shape.size()); }
    std::size_t size() const;
    double width(int axis) const { return (hi[axis] - lo[axis]) / shape[axis]; }
    double cell_volume() const;
    /// Row-major flat index; the last axis varies fastest.
    std::size_t flat(const std::vector<int>& idx) const;
    std::vector<int> unflat(std::size_t k) const;
    Eigen::VectorXd center(std::size_t k) const;
    /// Chart volume element at chart coordinates xi.
    double volume_element(const Eigen::VectorXd& xi) const;
    Point point(const Eigen::VectorXd& xi) const;
    Point point(std::size_t k) const { return point(center(k)); }
    LocalChart local_chart() const;
    bool contains(const Eigen::VectorXd& xi) const;
    void validate() const;
};

class GridMeasure {
public:
    GridMeasure() = default;
    /// Validates total mass 1 +- 1e-9 unless normalize is set, in which case
    /// the density is rescaled.
    GridMeasure(GridGeometry geometry, std::vector<double> density, bool normalize = false);

    const GridGeometry& geometry() const { return geom_; }
    const std::vector<double>& density() const { return density_; }
    const std::vector<double>& masses() const { return masses_; }
    std::size_t size() const { return density_.size(); }
    double total_mass() const;
    /// Multilinear interpolation of cell-centre density values; 0 outside.
    double density_at(const Eigen::VectorXd& xi) const;
    /// Point masses at cell centres, zero-mass cells omitted.
    DiscreteMeasure atomize() const;

private:
    GridGeometry geom_;
    std::vector<double> density_;
    std::vector<double> masses_;
};

}  // namespace mk

