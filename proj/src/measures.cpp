#include "mk/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mk/errors.hpp"
#include "mk/grid_charts.hpp"

namespace mk {

std::string to_string(Chart chart) {
    switch (chart) {
        case Chart::euclidean: return "euclidean";
        case Chart::sphere_embedded: return "sphere_embedded";
        case Chart::poincare_disk: return "poincare_disk";
    }
    return "euclidean";
}

Chart parse_chart(const std::string& name) {
    if (name == "euclidean") return Chart::euclidean;
    if (name == "sphere_embedded" || name == "sphere") return Chart::sphere_embedded;
    if (name == "poincare_disk" || name == "hyperbolic") return Chart::poincare_disk;
    throw ValidationError("unknown chart '" + name + "'");
}

Point::Point(Eigen::VectorXd c, Chart ch) : coords(std::move(c)), chart(ch) {}

Point::Point(std::initializer_list<double> c, Chart ch) : coords(static_cast<Eigen::Index>(c.size())), chart(ch) {
    Eigen::Index i = 0;
    for (double v : c) coords[i++] = v;
}

int Point::dim() const {
    return chart == Chart::sphere_embedded ? ambient_dim() - 1 : ambient_dim();
}

void validate_point(const Point& p) {
    if (!p.coords.allFinite()) throw DomainError("point has non-finite coordinates");
    const int n = p.dim();
    if (n < 1 || n > 3) throw DomainError("point dimension must be 1, 2 or 3");
    if (p.chart == Chart::sphere_embedded && std::fabs(p.coords.norm() - 1.0) > 1e-12)
        throw DomainError("sphere point is not on the unit sphere");
    if (p.chart == Chart::poincare_disk && p.coords.norm() >= 1.0)
        throw DomainError("Poincare disk point outside the unit ball");
}

Eigen::MatrixXd tangent_frame(const Eigen::VectorXd& x) {
    const int m = static_cast<int>(x.size());
    Eigen::MatrixXd F(m, m - 1);
    int found = 0;
    for (int a = 0; a < m && found < m - 1; ++a) {
        Eigen::VectorXd e = Eigen::VectorXd::Unit(m, a);
        e -= e.dot(x) * x;
        for (int j = 0; j < found; ++j) e -= e.dot(F.col(j)) * F.col(j);
        double nrm = e.norm();
        if (nrm < 1e-3) continue;
        F.col(found++) = e / nrm;
    }
    return F;
}

LocalChart chart_at(const Point& p) {
    LocalChart lc;
    lc.chart = p.chart;
    lc.base = p.coords;
    if (p.chart == Chart::sphere_embedded)
        lc.frame = tangent_frame(p.coords);
    else
        lc.frame = Eigen::MatrixXd::Identity(p.ambient_dim(), p.ambient_dim());
    return lc;
}

Point LocalChart::point(const Eigen::VectorXd& xi) const {
    Eigen::VectorXd out(ambient_dim());
    embed(xi.data(), out.data());
    return Point(out, chart);
}

Eigen::VectorXd LocalChart::coordinates(const Point& p) const {
    Eigen::VectorXd target;
    if (chart == Chart::sphere_embedded) {
        // b + F xi is proportional to p; frame columns are orthogonal to b
        double s = base.dot(p.coords) / base.squaredNorm();
        if (s <= 0.0) throw DomainError("point outside the gnomonic chart");
        target = p.coords / s - base;
    } else {
        target = p.coords - base;
    }
    return frame.colPivHouseholderQr().solve(target);
}

DiscreteMeasure::DiscreteMeasure(std::vector<Point> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
    if (atoms_.empty()) throw ValidationError("measure has no atoms");
    if (atoms_.size() != weights_.size()) throw ValidationError("atoms and weights differ in length");
    const Chart ch = atoms_.front().chart;
    const int m = atoms_.front().ambient_dim();
    double total = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        if (atoms_[i].chart != ch) throw ValidationError("atoms do not share one chart");
        if (atoms_[i].ambient_dim() != m) throw ValidationError("atoms differ in dimension");
        validate_point(atoms_[i]);
        if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) throw ValidationError("negative or non-finite weight");
        total += weights_[i];
    }
    if (std::fabs(total - 1.0) > 1e-12) throw ValidationError("weights do not sum to 1");
    std::vector<std::size_t> order(atoms_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return atoms_[a].coords[0] < atoms_[b].coords[0];
    });
    for (std::size_t s = 0; s < order.size(); ++s) {
        const auto& a = atoms_[order[s]].coords;
        for (std::size_t t = s + 1; t < order.size(); ++t) {
            const auto& b = atoms_[order[t]].coords;
            if (b[0] - a[0] > 1e-12) break;
            if ((a - b).cwiseAbs().maxCoeff() <= 1e-12) throw ValidationError("atoms are not distinct");
        }
    }
}

DiscreteMeasure DiscreteMeasure::uniform(std::vector<Point> atoms) {
    const std::size_t n = atoms.size();
    if (n == 0) throw ValidationError("measure has no atoms");
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    // absorb rounding into the last weight so the sum is 1 to the last bit
    double partial = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) partial += w[i];
    w[n - 1] = 1.0 - partial;
    return DiscreteMeasure(std::move(atoms), std::move(w));
}

std::size_t GridGeometry::size() const {
    std::size_t s = 1;
    for (int v : shape) s *= static_cast<std::size_t>(v);
    return s;
}

double GridGeometry::cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= width(a);
    return v;
}

std::size_t GridGeometry::flat(const std::vector<int>& idx) const {
    std::size_t k = 0;
    for (int a = 0; a < dim(); ++a) k = k * shape[a] + idx[a];
    return k;
}

std::vector<int> GridGeometry::unflat(std::size_t k) const {
    std::vector<int> idx(dim());
    for (int a = dim() - 1; a >= 0; --a) {
        idx[a] = static_cast<int>(k % shape[a]);
        k /= shape[a];
    }
    return idx;
}

Eigen::VectorXd GridGeometry::center(std::size_t k) const {
    Eigen::VectorXd xi(dim());
    for (int a = dim() - 1; a >= 0; --a) {
        int i = static_cast<int>(k % shape[a]);
        k /= shape[a];
        xi[a] = lo[a] + (i + 0.5) * width(a);
    }
    return xi;
}

double GridGeometry::volume_element(const Eigen::VectorXd& xi) const {
    const int n = dim();
    switch (chart) {
        case Chart::euclidean: return 1.0;
        case Chart::poincare_disk: return std::pow(2.0 / (1.0 - xi.squaredNorm()), n);
        case Chart::sphere_embedded: return std::pow(1.0 + xi.squaredNorm(), -0.5 * (n + 1));
    }
    return 1.0;
}

LocalChart GridGeometry::local_chart() const {
    LocalChart lc;
    lc.chart = chart;
    const int n = dim();
    if (chart == Chart::sphere_embedded) {
        lc.base = Eigen::VectorXd::Unit(n + 1, n);
        lc.frame = Eigen::MatrixXd::Identity(n + 1, n);
    } else {
        lc.base = Eigen::VectorXd::Zero(n);
        lc.frame = Eigen::MatrixXd::Identity(n, n);
    }
    return lc;
}

Point GridGeometry::point(const Eigen::VectorXd& xi) const { return local_chart().point(xi); }

bool GridGeometry::contains(const Eigen::VectorXd& xi) const {
    for (int a = 0; a < dim(); ++a)
        if (xi[a] < lo[a] || xi[a] > hi[a]) return false;
    return true;
}

void GridGeometry::validate() const {
    const int n = dim();
    if (n < 1 || n > 3) throw ValidationError("grid dimension must be 1, 2 or 3");
    if (static_cast<int>(lo.size()) != n || static_cast<int>(hi.size()) != n)
        throw ValidationError("grid box does not match shape");
    for (int a = 0; a < n; ++a) {
        if (shape[a] < 1) throw ValidationError("grid shape must be positive");
        if (!(hi[a] > lo[a])) throw ValidationError("grid box is empty");
    }
}

GridMeasure::GridMeasure(GridGeometry geometry, std::vector<double> density, bool normalize)
    : geom_(std::move(geometry)), density_(std::move(density)) {
    geom_.validate();
    if (density_.size() != geom_.size()) throw ValidationError("density length does not match grid shape");
    masses_.resize(density_.size());
    const double cv = geom_.cell_volume();
    double total = 0.0;
    for (std::size_t k = 0; k < density_.size(); ++k) {
        if (!(density_[k] >= 0.0) || !std::isfinite(density_[k])) throw ValidationError("negative or non-finite density");
        if (density_[k] == 0.0) {
            masses_[k] = 0.0;
            continue;
        }
        Eigen::VectorXd xi = geom_.center(k);
        if (geom_.chart == Chart::poincare_disk && xi.squaredNorm() >= 1.0)
            throw ValidationError("positive density outside the Poincare disk");
        masses_[k] = density_[k] * cv * geom_.volume_element(xi);
        total += masses_[k];
    }
    if (!(total > 0.0)) throw ValidationError("grid measure has zero mass");
    if (normalize) {
        for (auto& d : density_) d /= total;
        for (auto& m : masses_) m /= total;
    } else if (std::fabs(total - 1.0) > 1e-9) {
        throw ValidationError("grid cell masses do not sum to 1");
    }
}

double GridMeasure::total_mass() const {
    double s = 0.0;
    for (double m : masses_) s += m;
    return s;
}

double GridMeasure::density_at(const Eigen::VectorXd& xi) const {
    const int n = geom_.dim();
    if (!geom_.contains(xi)) return 0.0;
    std::vector<int> i0(n);
    std::vector<double> frac(n);
    for (int a = 0; a < n; ++a) {
        double s = (xi[a] - geom_.lo[a]) / geom_.width(a) - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(geom_.shape[a] - 1));
        int i = std::min(static_cast<int>(std::floor(s)), std::max(geom_.shape[a] - 2, 0));
        i0[a] = i;
        frac[a] = geom_.shape[a] > 1 ? s - i : 0.0;
    }
    double acc = 0.0;
    std::vector<int> idx(n);
    for (int corner = 0; corner < (1 << n); ++corner) {
        double w = 1.0;
        for (int a = 0; a < n; ++a) {
            int bit = (corner >> a) & 1;
            if (bit && geom_.shape[a] == 1) { w = 0.0; break; }
            idx[a] = i0[a] + bit;
            w *= bit ? frac[a] : 1.0 - frac[a];
        }
        if (w != 0.0) acc += w * density_[geom_.flat(idx)];
    }
    return acc;
}

DiscreteMeasure GridMeasure::atomize() const {
    std::vector<Point> atoms;
    std::vector<double> w;
    double total = 0.0;
    for (std::size_t k = 0; k < size(); ++k) {
        if (masses_[k] <= 0.0) continue;
        atoms.push_back(geom_.point(k));
        w.push_back(masses_[k]);
        total += masses_[k];
    }
    for (auto& v : w) v /= total;
    double partial = 0.0;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) partial += w[i];
    w.back() = 1.0 - partial;
    return DiscreteMeasure(std::move(atoms), std::move(w));
}

}  // namespace mk

namespace mk {

LocalChart grid_chart_at(const GridGeometry& grid, const Eigen::VectorXd& xi) {
    LocalChart lc = grid.local_chart();
    lc.base = lc.base + lc.frame * xi;
    return lc;
}

Eigen::VectorXd grid_coordinates(const GridGeometry& grid, const Point& p) {
    if (p.chart != grid.chart) throw DomainError("point and grid charts differ");
    if (grid.chart == Chart::sphere_embedded) {
        const int n = grid.dim();
        double z = p.coords[n];
        if (z <= 0.0) throw DomainError("point outside the gnomonic grid chart");
        return p.coords.head(n) / z;
    }
    return p.coords;
}

}  // namespace mk
