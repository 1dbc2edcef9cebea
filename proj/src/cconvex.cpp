#include "mk/cconvex.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "mk/errors.hpp"
#include "mk/grid_charts.hpp"

namespace mk {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_transform_shapes(const Eigen::MatrixXd& cost, const Eigen::VectorXd& values, TransformDirection dir) {
    const Eigen::Index src = dir == TransformDirection::x_to_y ? cost.rows() : cost.cols();
    if (src == 0 || values.size() == 0) throw EmptyDomainError("c-transform over an empty set");
    if (values.size() != src) throw ValidationError("field length does not match the cost matrix");
}

}  // namespace

Eigen::VectorXd c_transform_serial(const Eigen::MatrixXd& cost, const Eigen::VectorXd& values, TransformDirection dir) {
    check_transform_shapes(cost, values, dir);
    const Eigen::Index m = cost.rows(), n = cost.cols();
    if (dir == TransformDirection::x_to_y) {
        Eigen::VectorXd out = Eigen::VectorXd::Constant(n, kNegInf);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < m; ++i) out[j] = std::max(out[j], -cost(i, j) - values[i]);
        return out;
    }
    Eigen::VectorXd out = Eigen::VectorXd::Constant(m, kNegInf);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out[i] = std::max(out[i], -cost(i, j) - values[j]);
    return out;
}

Eigen::VectorXd c_transform(const Eigen::MatrixXd& cost, const Eigen::VectorXd& values, TransformDirection dir) {
    check_transform_shapes(cost, values, dir);
    const long m = static_cast<long>(cost.rows()), n = static_cast<long>(cost.cols());
    if (dir == TransformDirection::x_to_y) {
        Eigen::VectorXd out(n);
#pragma omp parallel for schedule(static)
        for (long j = 0; j < n; ++j) {
            double best = kNegInf;
            for (long i = 0; i < m; ++i) best = std::max(best, -cost(i, j) - values[i]);
            out[j] = best;
        }
        return out;
    }
    Eigen::VectorXd out(m);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < m; ++i) {
        double best = kNegInf;
        for (long j = 0; j < n; ++j) best = std::max(best, -cost(i, j) - values[j]);
        out[i] = best;
    }
    return out;
}

namespace {

Eigen::MatrixXd atom_cost(std::span<const Point> xs, std::span<const Point> ys, const CostFunction& c) {
    Eigen::MatrixXd C(xs.size(), ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = 0; j < ys.size(); ++j) C(i, j) = cost_eval(c, xs[i], ys[j]);
    return C;
}

}  // namespace

AtomField c_transform(const AtomField& field, std::span<const Point> targets, const CostFunction& c,
                      TransformDirection dir) {
    if (field.atoms.empty() || targets.empty()) throw EmptyDomainError("c-transform over an empty set");
    if (static_cast<std::size_t>(field.values.size()) != field.atoms.size())
        throw ValidationError("field values do not match its atoms");
    AtomField out;
    out.atoms.assign(targets.begin(), targets.end());
    if (dir == TransformDirection::x_to_y)
        out.values = c_transform(atom_cost(field.atoms, targets, c), field.values, dir);
    else
        out.values = c_transform(atom_cost(targets, field.atoms, c), field.values, dir);
    return out;
}

PotentialField c_transform_to_grid(const AtomField& field, const GridGeometry& grid, const CostFunction& c,
                                   TransformDirection dir) {
    std::vector<Point> pts;
    pts.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) pts.push_back(grid.point(k));
    AtomField t = c_transform(field, pts, c, dir);
    return {grid, std::vector<double>(t.values.data(), t.values.data() + t.values.size())};
}

double c_convexity_defect(const Eigen::MatrixXd& cost, const Eigen::VectorXd& u) {
    Eigen::VectorXd uc = c_transform(cost, u, TransformDirection::x_to_y);
    Eigen::VectorXd ucc = c_transform(cost, uc, TransformDirection::y_to_x);
    return (u - ucc).cwiseAbs().maxCoeff();
}

bool is_c_convex(const Eigen::MatrixXd& cost, const Eigen::VectorXd& u, double tol) {
    return c_convexity_defect(cost, u) <= tol;
}

bool is_c_convex(const AtomField& u, std::span<const Point> dual_atoms, const CostFunction& c, double tol) {
    if (u.atoms.empty() || dual_atoms.empty()) throw EmptyDomainError("c-convexity test over an empty set");
    return is_c_convex(atom_cost(u.atoms, dual_atoms, c), u.values, tol);
}

// ---------------------------------------------------------------------------
// c-exponential

namespace {

Point default_guess(const CostFunction& c, const Point& x, const Eigen::VectorXd& p) {
    const double np = p.norm();
    if (x.chart == Chart::euclidean) {
        switch (c.kind) {
            case CostKind::bilinear: return Point(p, x.chart);
            case CostKind::quadratic: return Point(x.coords + p, x.chart);
            case CostKind::log_distance:
                if (np == 0.0) throw NoConvergenceError("c-exponential: p = 0 is outside the range of D_x c");
                return Point(x.coords - p / (np * np), x.chart);
            case CostKind::power_distance:
                if (c.power > 1.0 && np > 0.0) {
                    double r = std::pow(np / c.power, 1.0 / (c.power - 1.0));
                    return Point(x.coords + r * p / np, x.chart);
                }
                break;
            default: break;
        }
    }
    if (c.kind == CostKind::power_distance && np > 0.0) return chart_at(x).point(0.1 * p / np);
    return x;
}

bool residual_at(const CostFunction& c, const LocalChart& cx, const Point& y, const Eigen::VectorXd& p,
                 Eigen::VectorXd& r) {
    try {
        validate_point(y);
        r = grad_x(c, cx, chart_at(y)) + p;
        return r.allFinite();
    } catch (const DomainError&) {
        return false;
    }
}

}  // namespace

Point c_exponential(const CostFunction& c, const Point& x, const Eigen::VectorXd& p, const CExpOptions& opt) {
    return c_exponential(c, x, p, default_guess(c, x, p), opt);
}

Point c_exponential(const CostFunction& c, const Point& x, const Eigen::VectorXd& p, const Point& guess,
                    const CExpOptions& opt) {
    validate_point(x);
    if (p.size() != x.dim()) throw ValidationError("momentum has the wrong dimension");
    if (!p.allFinite()) throw ValidationError("momentum is not finite");
    CostFunction exact = c;
    exact.mode = DerivativeMode::analytic();
    const LocalChart cx = chart_at(x);
    Point y = guess;
    Eigen::VectorXd r;
    if (!residual_at(exact, cx, y, p, r)) {
        y = x;
        if (!residual_at(exact, cx, y, p, r)) throw NoConvergenceError("c-exponential: no admissible starting point");
    }
    for (int it = 0; it < opt.max_iter; ++it) {
        if (r.norm() <= opt.tol) return y;
        const LocalChart cy = chart_at(y);
        Eigen::MatrixXd J;
        try {
            J = mixed_hessian(exact, cx, cy);
        } catch (const DomainError&) {
            throw NoConvergenceError("c-exponential: Jacobian undefined along the iteration");
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible()) throw NoConvergenceError("c-exponential: singular mixed Hessian");
        Eigen::VectorXd step = -lu.solve(r);
        double lambda = 1.0;
        bool accepted = false;
        for (int h = 0; h < 50; ++h, lambda *= 0.5) {
            Point trial = cy.point(lambda * step);
            if (trial.chart == Chart::sphere_embedded) trial.coords /= trial.coords.norm();
            Eigen::VectorXd rt;
            if (residual_at(exact, cx, trial, p, rt) && rt.norm() < r.norm()) {
                y = trial;
                r = rt;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    if (r.norm() <= opt.tol) return y;
    throw NoConvergenceError("c-exponential did not converge (residual " + std::to_string(r.norm()) + ")");
}

// ---------------------------------------------------------------------------
// map extraction

MapTable extract_map(const TransportSolution& sol, double split_threshold) {
    std::map<int, std::vector<const PlanEntry*>> rows;
    for (const auto& e : sol.plan) rows[e.source].push_back(&e);
    MapTable table;
    for (const auto& [src, entries] : rows) {
        double total = 0.0;
        const PlanEntry* best = entries.front();
        for (const auto* e : entries) {
            total += e->mass;
            if (e->mass > best->mass || (e->mass == best->mass && e->target < best->target)) best = e;
        }
        bool split = false;
        for (const auto* e : entries)
            if (e != best && e->mass > split_threshold * total) split = true;
        table.rows.push_back({src, best->target, total, best->mass / total, split});
        if (split) table.split_rows.push_back(src);
    }
    return table;
}

// ---------------------------------------------------------------------------
// grid potentials and the Monge-Ampere residual

bool PotentialField::interior(std::size_t k, int layer) const {
    auto idx = grid.unflat(k);
    for (int a = 0; a < grid.dim(); ++a)
        if (idx[a] < layer || idx[a] >= grid.shape[a] - layer) return false;
    return true;
}

Eigen::VectorXd PotentialField::gradient(std::size_t k) const {
    const int n = grid.dim();
    auto idx = grid.unflat(k);
    Eigen::VectorXd g(n);
    for (int a = 0; a < n; ++a) {
        auto lo = idx, hi = idx;
        double h = grid.width(a);
        if (idx[a] == 0) {
            hi[a] += 1;
            g[a] = (at(hi) - at(idx)) / h;
        } else if (idx[a] == grid.shape[a] - 1) {
            lo[a] -= 1;
            g[a] = (at(idx) - at(lo)) / h;
        } else {
            lo[a] -= 1;
            hi[a] += 1;
            g[a] = (at(hi) - at(lo)) / (2.0 * h);
        }
    }
    return g;
}

Eigen::MatrixXd PotentialField::hessian(std::size_t k) const {
    const int n = grid.dim();
    if (!interior(k)) throw DomainError("Hessian stencil needs an interior cell");
    auto idx = grid.unflat(k);
    Eigen::MatrixXd H(n, n);
    const double u0 = at(idx);
    for (int a = 0; a < n; ++a) {
        auto p = idx, m = idx;
        p[a] += 1;
        m[a] -= 1;
        double h = grid.width(a);
        H(a, a) = (at(p) - 2.0 * u0 + at(m)) / (h * h);
        for (int b = a + 1; b < n; ++b) {
            auto pp = idx, pm = idx, mp = idx, mm = idx;
            pp[a] += 1; pp[b] += 1;
            pm[a] += 1; pm[b] -= 1;
            mp[a] -= 1; mp[b] += 1;
            mm[a] -= 1; mm[b] -= 1;
            H(a, b) = H(b, a) = (at(pp) - at(pm) - at(mp) + at(mm)) / (4.0 * h * grid.width(b));
        }
    }
    return H;
}

ResidualField monge_ampere_residual(const PotentialField& u, const CostFunction& c, const GridMeasure& f_plus,
                                    const GridMeasure& f_minus) {
    const GridGeometry& g = u.grid;
    const GridGeometry& gp = f_plus.geometry();
    if (u.values.size() != g.size()) throw ValidationError("potential values do not match its grid");
    if (g.chart != gp.chart || g.shape != gp.shape) throw ValidationError("potential and f+ grids differ");
    for (int a = 0; a < g.dim(); ++a)
        if (std::fabs(g.lo[a] - gp.lo[a]) > 1e-12 || std::fabs(g.hi[a] - gp.hi[a]) > 1e-12)
            throw ValidationError("potential and f+ grids differ");
    if (f_minus.geometry().chart != g.chart || f_minus.geometry().dim() != g.dim())
        throw ValidationError("f- lives on a different chart");
    if (!c.accepts(g.chart)) throw DomainError("cost is not defined on the grid chart");

    CostFunction exact = c;
    exact.mode = DerivativeMode::analytic();
    ResidualField out;
    out.grid = g;
    const long N = static_cast<long>(g.size());
    out.values.assign(N, std::numeric_limits<double>::quiet_NaN());
    out.masked.assign(N, 0);
    std::vector<char> outside(N, 0);

#pragma omp parallel for schedule(dynamic, 64)
    for (long k = 0; k < N; ++k) {
        if (!u.interior(static_cast<std::size_t>(k))) continue;
        const Eigen::VectorXd xi = g.center(k);
        const LocalChart cx = grid_chart_at(g, xi);
        const Point x = cx.point(Eigen::VectorXd::Zero(g.dim()));
        Point Y;
        try {
            Y = c_exponential(exact, x, u.gradient(k));
        } catch (const NumericalFailure&) {
            out.masked[k] = 1;
            continue;
        } catch (const DomainError&) {
            out.masked[k] = 1;
            continue;
        }
        Eigen::VectorXd eta = grid_coordinates(f_minus.geometry(), Y);
        if (!f_minus.geometry().contains(eta)) {
            outside[k] = 1;
            continue;
        }
        const LocalChart cy = grid_chart_at(f_minus.geometry(), eta);
        Eigen::MatrixXd A = u.hessian(k) + hessian_xx(exact, cx, cy);
        double detC = std::fabs(mixed_hessian(exact, cx, cy).determinant());
        double rho_x = g.volume_element(xi), rho_y = f_minus.geometry().volume_element(eta);
        out.values[k] = A.determinant() * f_minus.density_at(eta) * rho_y / (detC * rho_x) - f_plus.density()[k];
    }
    for (long k = 0; k < N; ++k)
        if (outside[k]) throw DomainError("Y(x, Du(x)) leaves the target grid");

    std::vector<double> mags;
    for (long k = 0; k < N; ++k) {
        if (out.masked[k]) ++out.masked_count;
        if (std::isnan(out.values[k])) continue;
        mags.push_back(std::fabs(out.values[k]));
    }
    out.evaluated = mags.size();
    if (!mags.empty()) {
        out.max_abs = *std::max_element(mags.begin(), mags.end());
        std::size_t mid = mags.size() / 2;
        std::nth_element(mags.begin(), mags.begin() + mid, mags.end());
        double hi = mags[mid];
        if (mags.size() % 2 == 0) {
            double lo = *std::max_element(mags.begin(), mags.begin() + mid);
            out.median_abs = 0.5 * (lo + hi);
        } else {
            out.median_abs = hi;
        }
    }
    return out;
}

}  // namespace mk
