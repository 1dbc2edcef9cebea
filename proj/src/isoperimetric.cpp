#include <algorithm>
#include <cmath>
#include <numbers>

#include "mk/cconvex.hpp"
#include "mk/errors.hpp"
#include "mk/semidiscrete.hpp"

namespace mk {

namespace {

using std::numbers::pi;

// Annular sectors of the unit disk; thin rings near the rim, coarser inside.
DiscreteMeasure disk_partition(const IsoperimetricOptions& opt) {
    std::vector<double> radii{1.0};
    double t = opt.ring_outer;
    while (radii.back() - t > t) {
        radii.push_back(radii.back() - t);
        t *= opt.ring_ratio;
    }
    radii.push_back(0.0);
    std::vector<Point> atoms;
    std::vector<double> weights;
    for (std::size_t k = 0; k + 1 < radii.size(); ++k) {
        double r2 = radii[k], r1 = radii[k + 1];
        if (r1 == 0.0) {
            atoms.push_back(Point{0.0, 0.0});
            weights.push_back(r2 * r2);
            continue;
        }
        double mid = 0.5 * (r1 + r2), width = r2 - r1;
        int sectors = std::clamp(static_cast<int>(std::lround(2.0 * pi * mid / width)), 3, opt.max_sectors);
        double dth = 2.0 * pi / sectors;
        double rc = (2.0 / 3.0) * (r2 * r2 * r2 - r1 * r1 * r1) / (r2 * r2 - r1 * r1) * std::sin(0.5 * dth) /
                    (0.5 * dth);
        for (int s = 0; s < sectors; ++s) {
            double th = (s + 0.5) * dth;
            atoms.push_back(Point{rc * std::cos(th), rc * std::sin(th)});
            weights.push_back((r2 * r2 - r1 * r1) / sectors);
        }
    }
    // weights are area / pi; absorb rounding in the core
    double sum = 0.0;
    for (double w : weights) sum += w;
    for (double& w : weights) w /= sum;
    return DiscreteMeasure(std::move(atoms), std::move(weights));
}

std::vector<double> gaussian_blur(const std::vector<double>& f, int nx, int ny, double sigma) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double s = 0.0;
    for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& w : k) w /= s;
    std::vector<double> tmp(f.size(), 0.0), out(f.size(), 0.0);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j) {
            double acc = 0.0;
            for (int d = -r; d <= r; ++d)
                if (j + d >= 0 && j + d < ny) acc += k[d + r] * f[i * ny + j + d];
            tmp[i * ny + j] = acc;
        }
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j) {
            double acc = 0.0;
            for (int d = -r; d <= r; ++d)
                if (i + d >= 0 && i + d < nx) acc += k[d + r] * tmp[(i + d) * ny + j];
            out[i * ny + j] = acc;
        }
    return out;
}

struct Segment {
    Eigen::Vector2d a, b, normal;  // outward unit normal
};

// Level-1/2 contour of a cell-centred field by marching squares.
std::vector<Segment> contour(const std::vector<double>& f, const GridGeometry& g) {
    const int nx = g.shape[0], ny = g.shape[1];
    const double hx = g.width(0), hy = g.width(1);
    std::vector<Segment> segs;
    auto at = [&](int i, int j) { return f[i * ny + j] - 0.5; };
    for (int i = 0; i + 1 < nx; ++i)
        for (int j = 0; j + 1 < ny; ++j) {
            // corners counter-clockwise in the (i, j) plane
            const int ci[4] = {i, i + 1, i + 1, i};
            const int cj[4] = {j, j, j + 1, j + 1};
            double v[4];
            int mask = 0;
            for (int c = 0; c < 4; ++c) {
                v[c] = at(ci[c], cj[c]);
                if (v[c] > 0.0) mask |= 1 << c;
            }
            if (mask == 0 || mask == 15) continue;
            Eigen::Vector2d origin(g.lo[0] + (i + 0.5) * hx, g.lo[1] + (j + 0.5) * hy);
            auto corner = [&](int c) {
                return Eigen::Vector2d(origin[0] + (ci[c] - i) * hx, origin[1] + (cj[c] - j) * hy);
            };
            std::vector<Eigen::Vector2d> pts;
            for (int e = 0; e < 4; ++e) {
                int c0 = e, c1 = (e + 1) % 4;
                if ((v[c0] > 0.0) != (v[c1] > 0.0)) {
                    double t = v[c0] / (v[c0] - v[c1]);
                    pts.push_back(corner(c0) + t * (corner(c1) - corner(c0)));
                }
            }
            Eigen::Vector2d grad(((v[1] + v[2]) - (v[0] + v[3])) / (2.0 * hx),
                                 ((v[2] + v[3]) - (v[0] + v[1])) / (2.0 * hy));
            auto emit = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                Eigen::Vector2d d = b - a;
                if (d.norm() == 0.0) return;
                Eigen::Vector2d n(d[1], -d[0]);
                n.normalize();
                if (n.dot(grad) > 0.0) n = -n;
                segs.push_back({a, b, n});
            };
            if (pts.size() == 2) {
                emit(pts[0], pts[1]);
            } else if (pts.size() == 4) {
                double centre = 0.25 * (v[0] + v[1] + v[2] + v[3]);
                bool diag02 = (mask == 5) != (centre > 0.0);
                // pair crossings so that the centre's sign is respected
                if (diag02) {
                    emit(pts[0], pts[3]);
                    emit(pts[1], pts[2]);
                } else {
                    emit(pts[0], pts[1]);
                    emit(pts[2], pts[3]);
                }
            }
        }
    return segs;
}

}  // namespace

IsoperimetricReport isoperimetric_check(const GridMeasure& shape, const IsoperimetricOptions& opt) {
    const GridGeometry& g0 = shape.geometry();
    if (g0.dim() != 2 || g0.chart != Chart::euclidean)
        throw ValidationError("isoperimetric check expects a planar Euclidean shape");
    const int nx = g0.shape[0], ny = g0.shape[1];
    std::vector<double> ind(g0.size());
    std::size_t inside = 0;
    for (std::size_t k = 0; k < g0.size(); ++k) {
        ind[k] = shape.density()[k] > 0.0 ? 1.0 : 0.0;
        inside += ind[k] > 0.0;
    }
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            if ((i == 0 || j == 0 || i == nx - 1 || j == ny - 1) && ind[i * ny + j] > 0.0)
                throw ValidationError("shape touches the raster boundary; pad the grid");

    IsoperimetricReport rep;
    rep.area = double(inside) * g0.cell_volume();
    rep.scale = std::sqrt(pi / rep.area);
    GridGeometry g = g0;
    for (int a = 0; a < 2; ++a) {
        g.lo[a] *= rep.scale;
        g.hi[a] *= rep.scale;
    }
    GridMeasure mu(g, ind, true);
    DiscreteMeasure disk = disk_partition(opt);
    rep.targets = static_cast<int>(disk.size());
    SemiDiscreteOptions sopt;
    sopt.mass_tol = opt.mass_tol;
    auto sol = solve_semidiscrete(mu, disk, CostFunction(CostKind::quadratic), sopt);
    rep.max_mass_error = sol.max_mass_error;

    const double vol = double(inside) * g.cell_volume();
    rep.lhs = 2.0 * vol;
    auto blurred = gaussian_blur(ind, nx, ny, 1.0);
    auto segs = contour(blurred, g);
    for (const auto& s : segs) {
        double len = (s.b - s.a).norm();
        Eigen::Vector2d m = 0.5 * (s.a + s.b);
        // Brenier map at the boundary point: the target whose shifted score wins
        int best = 0;
        double top = -1e300;
        for (std::size_t i = 0; i < disk.size(); ++i) {
            Eigen::Vector2d y = disk.atom(i).coords;
            double sc = -0.5 * (m - y).squaredNorm() - sol.weights[i];
            if (sc > top) {
                top = sc;
                best = static_cast<int>(i);
            }
        }
        rep.flux += len * disk.atom(best).coords.dot(s.normal);
        rep.perimeter += len;
    }
    rep.ratio = rep.flux / rep.lhs;
    rep.perimeter_ratio = rep.perimeter / rep.lhs;
    rep.chain_holds = rep.flux >= rep.lhs * (1.0 - opt.chain_tol) && rep.flux <= rep.perimeter * (1.0 + opt.chain_tol);
    return rep;
}

}  // namespace mk
