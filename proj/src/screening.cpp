#include "mk/screening.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <random>

#include "mk/errors.hpp"
#include "mk/parallel.hpp"

namespace mk {

// ---------------------------------------------------------------------------
// problem data

Eigen::VectorXd ScreeningProblem::null_y() const {
    return null_product.size() ? null_product : Eigen::VectorXd::Zero(dim());
}

double ScreeningProblem::manufacturing_cost(const Eigen::VectorXd& y) const {
    return 0.5 * y.squaredNorm() + kappa * y.norm();
}

double ScreeningProblem::reservation(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y0 = null_y();
    return benefit(x, y0) - manufacturing_cost(y0);
}

double ScreeningProblem::density(const Eigen::VectorXd& x) const {
    if (!agents) return 1.0;
    const GridGeometry& g = agents->geometry();
    std::vector<int> idx(g.dim());
    for (int a = 0; a < g.dim(); ++a) {
        int i = static_cast<int>(std::floor((x[a] - g.lo[a]) / g.width(a)));
        idx[a] = std::clamp(i, 0, g.shape[a] - 1);
    }
    return agents->density()[g.flat(idx)];
}

void ScreeningProblem::validate() const {
    const int n = dim();
    if (n < 1 || n > 2 || hi.size() != lo.size()) throw ValidationError("screening needs a 1-D or 2-D box");
    for (int a = 0; a < n; ++a)
        if (!(hi[a] > lo[a])) throw ValidationError("screening box is empty");
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ValidationError("kappa must be finite and nonnegative");
    if (null_product.size() && null_product.size() != n) throw ValidationError("null product has the wrong dimension");
    if (!std::isfinite(manufacturing_cost(null_y()))) throw ValidationError("a(y0) is not finite");
    if ((y_lo.size() && static_cast<int>(y_lo.size()) != n) || (y_hi.size() && static_cast<int>(y_hi.size()) != n))
        throw ValidationError("product box has the wrong dimension");
    if (agents) {
        const GridGeometry& g = agents->geometry();
        if (g.dim() != n || g.chart != Chart::euclidean) throw ValidationError("agent grid does not match the box");
        if (std::abs(agents->total_mass() - 1.0) > 1e-9) throw ValidationError("agent measure must have mass 1");
    }
}

ScreeningProblem ScreeningProblem::rochet_chone() { return {}; }

ScreeningProblem ScreeningProblem::one_dimensional() {
    ScreeningProblem p;
    p.lo = {0.0};
    p.hi = {1.0};
    return p;
}

std::string to_string(Region r) {
    switch (r) {
        case Region::exclusion: return "exclusion";
        case Region::bunching: return "bunching";
        case Region::full_rank: return "full_rank";
    }
    return "full_rank";
}

WelfareFunction WelfareFunction::parse(const std::string& spec) {
    if (spec == "linear") return linear();
    if (spec.rfind("capped:", 0) == 0) {
        try {
            std::size_t used = 0;
            double c = std::stod(spec.substr(7), &used);
            if (used == spec.size() - 7 && std::isfinite(c)) return capped(c);
        } catch (const std::exception&) {
        }
    }
    throw ValidationError("unknown welfare function '" + spec + "' (linear, capped:<level>)");
}

std::string WelfareFunction::spec() const {
    if (kind == Kind::linear) return "linear";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, cap);
    return "capped:" + std::string(buf, res.ptr);
}

GridGeometry screening_grid(const ScreeningProblem& problem, int resolution) {
    GridGeometry g;
    g.chart = Chart::euclidean;
    for (int a = 0; a < problem.dim(); ++a) {
        double h = (problem.hi[a] - problem.lo[a]) / resolution;
        g.lo.push_back(problem.lo[a] - 0.5 * h);
        g.hi.push_back(problem.hi[a] + 0.5 * h);
        g.shape.push_back(resolution + 1);
    }
    return g;
}

// ---------------------------------------------------------------------------
// discretization

namespace {

struct Mesh {
    int dim = 0;
    int nodes = 0;
    GridGeometry grid;
    std::vector<Eigen::VectorXd> x;  // node positions
    // simplices: vertices, weight (agent mass), centroid, gradient of each hat function
    struct Element {
        std::array<int, 3> v{};
        int nv = 0;
        double w = 0.0;
        Eigen::Vector2d xbar = Eigen::Vector2d::Zero();
        std::array<Eigen::Vector2d, 3> dphi;
    };
    std::vector<Element> elements;
    std::vector<double> mass;  // lumped node masses, exact for piecewise-linear u

    Eigen::Vector2d gradient(const Element& e, const double* u) const {
        Eigen::Vector2d g = Eigen::Vector2d::Zero();
        for (int k = 0; k < e.nv; ++k) g += u[e.v[k]] * e.dphi[k];
        return g;
    }
};

Mesh build_mesh(const GridGeometry& grid, const ScreeningProblem& problem) {
    Mesh m;
    m.dim = grid.dim();
    m.grid = grid;
    m.nodes = static_cast<int>(grid.size());
    m.x.resize(m.nodes);
    for (int k = 0; k < m.nodes; ++k) m.x[k] = grid.center(k);
    auto add = [&](std::initializer_list<int> verts, double factor) {
        Mesh::Element e;
        e.nv = static_cast<int>(verts.size());
        int k = 0;
        for (int v : verts) e.v[k++] = v;
        Eigen::VectorXd c = Eigen::VectorXd::Zero(m.dim);
        for (int i = 0; i < e.nv; ++i) c += m.x[e.v[i]];
        c /= e.nv;
        double vol;
        if (m.dim == 1) {
            double h = m.x[e.v[1]][0] - m.x[e.v[0]][0];
            vol = std::abs(h);
            e.dphi[0] = Eigen::Vector2d(-1.0 / h, 0.0);
            e.dphi[1] = Eigen::Vector2d(1.0 / h, 0.0);
            e.xbar = Eigen::Vector2d(c[0], 0.0);
        } else {
            Eigen::Matrix2d E;
            E.col(0) = m.x[e.v[1]] - m.x[e.v[0]];
            E.col(1) = m.x[e.v[2]] - m.x[e.v[0]];
            vol = 0.5 * std::abs(E.determinant());
            Eigen::Matrix2d Et = E.transpose().inverse();
            e.dphi[1] = Et.col(0);
            e.dphi[2] = Et.col(1);
            e.dphi[0] = -e.dphi[1] - e.dphi[2];
            e.xbar = c;
        }
        e.w = factor * vol * problem.density(c);
        m.elements.push_back(e);
    };
    if (m.dim == 1) {
        for (int i = 0; i + 1 < m.nodes; ++i) add({i, i + 1}, 1.0);
    } else {
        const int nx = grid.shape[0], ny = grid.shape[1];
        for (int i = 0; i + 1 < nx; ++i)
            for (int j = 0; j + 1 < ny; ++j) {
                int a = i * ny + j, b = (i + 1) * ny + j, c = i * ny + j + 1, d = (i + 1) * ny + j + 1;
                add({a, b, d}, 0.5);
                add({a, d, c}, 0.5);
                add({a, b, c}, 0.5);
                add({b, d, c}, 0.5);
            }
    }
    double total = 0.0;
    for (const auto& e : m.elements) total += e.w;
    if (!(total > 0.0)) throw ValidationError("agent density vanishes on the box");
    m.mass.assign(m.nodes, 0.0);
    for (auto& e : m.elements) {
        e.w /= total;
        for (int k = 0; k < e.nv; ++k) m.mass[e.v[k]] += e.w / e.nv;
    }
    return m;
}

// Second-difference rows (minus, centre, plus) for the enforced directions.
std::vector<std::array<int, 3>> convexity_rows(const GridGeometry& grid,
                                               const std::vector<std::array<int, 2>>& dirs) {
    std::vector<std::array<int, 3>> rows;
    const int n = grid.dim();
    std::vector<std::array<int, 2>> use;
    for (const auto& d : dirs) {
        if (d[0] == 0 && d[1] == 0) continue;
        if (n == 1 && d[1] != 0) continue;
        use.push_back(d);
    }
    if (n == 1 && use.empty()) use.push_back({1, 0});
    for (std::size_t k = 0; k < grid.size(); ++k) {
        auto idx = grid.unflat(k);
        for (const auto& d : use) {
            auto p = idx, q = idx;
            bool ok = true;
            for (int a = 0; a < n; ++a) {
                p[a] += d[a];
                q[a] -= d[a];
                ok = ok && p[a] >= 0 && p[a] < grid.shape[a] && q[a] >= 0 && q[a] < grid.shape[a];
            }
            if (ok) rows.push_back({static_cast<int>(grid.flat(q)), static_cast<int>(k), static_cast<int>(grid.flat(p))});
        }
    }
    return rows;
}

double element_cost(const ScreeningProblem& pb, const Mesh::Element& e, const Eigen::Vector2d& g, int dim) {
    const double gn2 = g.head(dim).squaredNorm();
    return 0.5 * gn2 + pb.kappa * std::sqrt(gn2) - e.xbar.head(dim).dot(g.head(dim));
}

double losses(const Mesh& m, const ScreeningProblem& pb, const std::vector<double>& u) {
    const std::size_t ne = m.elements.size(), nb = block_count(ne);
    std::vector<double> part(nb, 0.0);
#pragma omp parallel for schedule(static)
    for (std::size_t b = 0; b < nb; ++b) {
        double acc = 0.0;
        const std::size_t end = std::min(ne, (b + 1) * kReductionBlock);
        for (std::size_t k = b * kReductionBlock; k < end; ++k) {
            const auto& e = m.elements[k];
            acc += e.w * element_cost(pb, e, m.gradient(e, u.data()), m.dim);
        }
        part[b] = acc;
    }
    double total = 0.0;
    for (double p : part) total += p;
    for (int i = 0; i < m.nodes; ++i) total += m.mass[i] * u[i];
    return total;
}

struct Mode {
    double lambda = 1.0;
    const WelfareFunction* welfare = nullptr;
};

double welfare_integral(const Mesh& m, const Mode& mode, const std::vector<double>& u) {
    if (!mode.welfare) return 0.0;
    double s = 0.0;
    for (int i = 0; i < m.nodes; ++i) s += m.mass[i] * (*mode.welfare)(u[i]);
    return s;
}

double objective(const Mesh& m, const ScreeningProblem& pb, const Mode& mode, const std::vector<double>& u) {
    return mode.lambda * losses(m, pb, u) - welfare_integral(m, mode, u);
}

// Sparse symmetric matrix with a fixed pattern, filled by index.
struct PatternMatrix {
    Eigen::SparseMatrix<double> S;
    std::vector<int> slot;  // per contribution, index into S.valuePtr()

    void build(int n, const std::vector<std::pair<int, int>>& entries) {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(entries.size());
        for (const auto& [i, j] : entries) t.emplace_back(i, j, 1.0);
        S.resize(n, n);
        S.setFromTriplets(t.begin(), t.end());
        S.makeCompressed();
        slot.resize(entries.size());
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const auto [i, j] = entries[k];
            const int* begin = S.innerIndexPtr() + S.outerIndexPtr()[j];
            const int* end = S.innerIndexPtr() + S.outerIndexPtr()[j + 1];
            slot[k] = static_cast<int>(std::lower_bound(begin, end, i) - S.innerIndexPtr());
        }
    }
    void fill(const std::vector<double>& values) {
        double* v = S.valuePtr();
        std::fill(v, v + S.nonZeros(), 0.0);
        for (std::size_t k = 0; k < values.size(); ++k) v[slot[k]] += values[k];
    }
};

struct Barrier {
    const Mesh& m;
    const ScreeningProblem& pb;
    const Mode& mode;
    std::vector<std::array<int, 3>> rows;
    std::vector<double> u0;  // reservation at the nodes
    bool soc = false, capped = false;
    double cap = 0.0;
    int ne = 0, n = 0;
    double nu = 0.0;  // barrier parameter

    // state
    std::vector<double> u, t, r;

    Barrier(const Mesh& mesh, const ScreeningProblem& problem, const Mode& md,
            const std::vector<std::array<int, 2>>& dirs)
        : m(mesh), pb(problem), mode(md) {
        n = m.nodes;
        ne = static_cast<int>(m.elements.size());
        rows = convexity_rows(m.grid, dirs);
        u0.resize(n);
        for (int i = 0; i < n; ++i) u0[i] = pb.reservation(m.x[i]);
        soc = pb.kappa > 0.0;
        capped = md.welfare && md.welfare->kind == WelfareFunction::Kind::capped;
        if (capped) cap = md.welfare->cap;
        nu = double(rows.size()) + n + (soc ? 2.0 * ne : 0.0) + (capped ? 2.0 * n : 0.0);
        Eigen::VectorXd c = Eigen::VectorXd::Zero(m.dim);
        for (int a = 0; a < m.dim; ++a) c[a] = 0.5 * (pb.lo[a] + pb.hi[a]);
        u.resize(n);
        for (int i = 0; i < n; ++i) u[i] = u0[i] + 1.0 + 0.5 * (m.x[i] - c).squaredNorm();
        if (soc) {
            t.resize(ne);
            for (int e = 0; e < ne; ++e) t[e] = m.gradient(m.elements[e], u.data()).head(m.dim).norm() + 1.0;
        }
        if (capped) {
            r.resize(n);
            for (int i = 0; i < n; ++i) r[i] = std::min(u[i], cap) - 1.0;
        }
    }

    double row_value(const std::array<int, 3>& rw, const double* v) const { return v[rw[0]] + v[rw[2]] - 2.0 * v[rw[1]]; }

    // Contribution pattern: elements (nv x nv), rows (3 x 3), node diagonals.
    std::vector<std::pair<int, int>> pattern() const {
        std::vector<std::pair<int, int>> p;
        for (const auto& e : m.elements)
            for (int a = 0; a < e.nv; ++a)
                for (int b = 0; b < e.nv; ++b) p.emplace_back(e.v[a], e.v[b]);
        for (const auto& rw : rows)
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) p.emplace_back(rw[a], rw[b]);
        for (int i = 0; i < n; ++i) p.emplace_back(i, i);
        return p;
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// classification and reporting

namespace {

// Physical spacing of the Hessian stencil, so labels compare across resolutions.
constexpr double kHessianScale = 1.0 / 32.0;

// Centred second differences with a stencil of `step` nodes.
Eigen::MatrixXd hessian_at(const PotentialField& u, const std::vector<int>& idx, int step) {
    const GridGeometry& g = u.grid;
    const int n = g.dim();
    Eigen::MatrixXd H(n, n);
    const double u0 = u.at(idx);
    for (int a = 0; a < n; ++a) {
        const double ha = step * g.width(a);
        auto p = idx, m = idx;
        p[a] += step;
        m[a] -= step;
        H(a, a) = (u.at(p) - 2.0 * u0 + u.at(m)) / (ha * ha);
        for (int b = a + 1; b < n; ++b) {
            const double hb = step * g.width(b);
            auto pp = idx, pm = idx, mp = idx, mm = idx;
            pp[a] += step; pp[b] += step;
            pm[a] += step; pm[b] -= step;
            mp[a] -= step; mp[b] += step;
            mm[a] -= step; mm[b] -= step;
            H(a, b) = H(b, a) = (u.at(pp) - u.at(pm) - u.at(mp) + u.at(mm)) / (4.0 * ha * hb);
        }
    }
    return H;
}

}  // namespace

void classify_regions(ScreeningSolution& s, double eps_u, double eps_rank) {
    const GridGeometry& g = s.u.grid;
    const std::size_t n = g.size();
    const int dim = g.dim();
    double umax = -std::numeric_limits<double>::infinity(), umin = -umax;
    for (double v : s.u.values) {
        umax = std::max(umax, v);
        umin = std::min(umin, v);
    }
    s.eps_u = eps_u > 0.0 ? eps_u : 1e-6 * std::max(umax - umin, 1e-3);
    int step = 1;
    for (int a = 0; a < dim; ++a)
        step = std::max(step, static_cast<int>(std::lround(kHessianScale / g.width(a))));
    for (int a = 0; a < dim; ++a) step = std::min(step, (g.shape[a] - 1) / 2);
    s.hessian_step = step;
    s.labels.assign(n, Region::full_rank);
    s.boundary.assign(n, false);
    std::vector<double> smin(n, 0.0), smax(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        auto idx = g.unflat(k);
        bool edge = false;
        for (int a = 0; a < dim; ++a) {
            int c = std::clamp(idx[a], step, g.shape[a] - 1 - step);
            edge = edge || c != idx[a];
            idx[a] = c;
        }
        s.boundary[k] = edge;
        Eigen::MatrixXd H = hessian_at(s.u, idx, step);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        Eigen::VectorXd sv = es.eigenvalues().cwiseAbs();
        smin[k] = sv.minCoeff();
        smax[k] = sv.maxCoeff();
    }
    std::vector<double> big;
    for (std::size_t k = 0; k < n; ++k)
        if (s.u.values[k] - s.reservation[k] > s.eps_u) big.push_back(smax[k]);
    if (eps_rank > 0.0) {
        s.eps_rank = eps_rank;
    } else if (!big.empty()) {
        std::nth_element(big.begin(), big.begin() + big.size() / 2, big.end());
        s.eps_rank = 0.05 * big[big.size() / 2];
    } else {
        s.eps_rank = 0.0;
    }
    s.f0 = s.f1 = s.f2 = 0.0;
    double diag = 0.0, bunched = 0.0;
    const double tol = 4.0 * step * g.width(0);
    for (std::size_t k = 0; k < n; ++k) {
        double w = s.node_mass[k];
        if (s.u.values[k] - s.reservation[k] <= s.eps_u) {
            s.labels[k] = Region::exclusion;
            s.f0 += w;
        } else if (smin[k] <= s.eps_rank) {
            s.labels[k] = Region::bunching;
            s.f1 += w;
            bunched += w;
            if (dim == 2 && std::abs(s.y[k][0] - s.y[k][1]) <= tol) diag += w;
        } else {
            s.f2 += w;
        }
    }
    s.diagonal_fraction = bunched > 0.0 ? diag / bunched : 0.0;
}

ExclusionReport check_exclusion(const ScreeningSolution& s) {
    ExclusionReport r;
    double excluded = 0.0, total = 0.0;
    for (std::size_t k = 0; k < s.labels.size(); ++k) {
        total += s.node_mass[k];
        if (s.labels[k] == Region::exclusion) excluded += s.node_mass[k];
    }
    r.excluded_fraction = total > 0.0 ? excluded / total : 0.0;
    const int resolution = s.u.grid.shape[0] - 1;
    r.positive = r.excluded_fraction > 2.0 / resolution;
    return r;
}

double principal_losses(const PotentialField& u, const ScreeningProblem& problem) {
    problem.validate();
    if (u.grid.dim() != problem.dim() || u.values.size() != u.grid.size())
        throw ValidationError("potential does not match the screening problem");
    for (int a = 0; a < u.grid.dim(); ++a)
        if (u.grid.shape[a] < 2) throw ValidationError("potential grid needs two nodes per axis");
    Mesh m = build_mesh(u.grid, problem);
    if (!problem.y_lo.empty() || !problem.y_hi.empty()) {
        for (const auto& e : m.elements) {
            Eigen::Vector2d g = m.gradient(e, u.values.data());
            for (int a = 0; a < m.dim; ++a)
                if ((!problem.y_lo.empty() && g[a] < problem.y_lo[a] - 1e-12) ||
                    (!problem.y_hi.empty() && g[a] > problem.y_hi[a] + 1e-12))
                    throw DomainError("Du leaves the product space");
        }
    }
    return losses(m, problem, u.values);
}

// ---------------------------------------------------------------------------
// barrier solver

namespace {

ScreeningSolution finish(const Mesh& m, const ScreeningProblem& pb, const Mode& mode, const std::vector<double>& u,
                         const std::vector<double>& u0, const std::vector<std::array<int, 3>>& rows,
                         const ScreeningOptions& opt) {
    ScreeningSolution s;
    s.seed = opt.seed;
    s.u.grid = m.grid;
    s.u.values = u;
    s.reservation = u0;
    s.node_mass = m.mass;
    s.y.resize(m.nodes);
    for (int k = 0; k < m.nodes; ++k) s.y[k] = s.u.gradient(k);
    s.energy = losses(m, pb, u);
    s.welfare = welfare_integral(m, mode, u);
    s.objective = mode.lambda * s.energy - s.welfare;
    s.min_convexity = std::numeric_limits<double>::infinity();
    s.min_slack = std::numeric_limits<double>::infinity();
    for (const auto& rw : rows) {
        double d = u[rw[0]] + u[rw[2]] - 2.0 * u[rw[1]];
        s.min_convexity = std::min(s.min_convexity, d);
        s.active_constraints += d <= 1e-7;
    }
    for (int i = 0; i < m.nodes; ++i) {
        double d = u[i] - u0[i];
        s.min_slack = std::min(s.min_slack, d);
        s.active_constraints += d <= 1e-7;
    }
    if (rows.empty()) s.min_convexity = 0.0;
    classify_regions(s, opt.eps_u, opt.eps_rank);
    return s;
}

// Smallest objective change over random feasible perturbations of size 1e-4.
double kkt_probe(const Mesh& m, const ScreeningProblem& pb, const Mode& mode, const std::vector<double>& u,
                 const std::vector<double>& u0, int trials, std::uint64_t seed) {
    if (trials <= 0) return 0.0;
    const double base = objective(m, pb, mode, u);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double excess = 0.0;
    for (int i = 0; i < m.nodes; ++i) excess = std::max(excess, u[i] - u0[i]);
    double worst = std::numeric_limits<double>::infinity();
    std::vector<double> w(m.nodes), v(m.nodes);
    for (int k = 0; k < trials; ++k) {
        if (k % 4 == 0 && excess > 0.0) {
            // toward the reservation utility, a convex combination of feasible points
            const double theta = 1.0 - unif(rng);
            for (int i = 0; i < m.nodes; ++i) w[i] = -theta * (u[i] - u0[i]) / excess;
        } else {
            // a random nonnegative convex quadratic
            Eigen::Matrix2d B;
            B << g(rng), g(rng), g(rng), g(rng);
            Eigen::Matrix2d M = B * B.transpose();
            Eigen::Vector2d c(g(rng), g(rng));
            double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
            for (int i = 0; i < m.nodes; ++i) {
                Eigen::Vector2d x = Eigen::Vector2d::Zero();
                x.head(m.dim) = m.x[i];
                w[i] = c.dot(x) + 0.5 * x.dot(M * x);
                lo = std::min(lo, w[i]);
            }
            for (int i = 0; i < m.nodes; ++i) {
                w[i] -= lo;
                hi = std::max(hi, w[i]);
            }
            const double shift = unif(rng);
            for (int i = 0; i < m.nodes; ++i) w[i] = (w[i] + shift) / (hi + shift);
        }
        for (int i = 0; i < m.nodes; ++i) v[i] = u[i] + 1e-4 * w[i];
        worst = std::min(worst, objective(m, pb, mode, v) - base);
    }
    return worst;
}

ScreeningSolution solve_barrier(const ScreeningProblem& pb, const Mode& mode, const ScreeningOptions& opt) {
    pb.validate();
    if (opt.resolution < 2) throw ValidationError("resolution must be at least 2");
    if (!(opt.tol > 0.0)) throw ValidationError("tolerance must be positive");
    if (!pb.y_lo.empty() || !pb.y_hi.empty())
        throw ValidationError("the solver does not support a bounded product space");
    const GridGeometry grid = screening_grid(pb, opt.resolution);
    const Mesh m = build_mesh(grid, pb);
    Barrier bar(m, pb, mode, opt.directions);
    const int n = bar.n, ne = bar.ne;
    const double lam = mode.lambda;
    const bool linear_w = mode.welfare && mode.welfare->kind == WelfareFunction::Kind::linear;

    // raising u by a constant stays feasible; the objective slope along it is lambda - w'(+inf)
    if (linear_w && lam < 1.0) {
        ScreeningSolution s = finish(m, pb, mode, bar.u0, bar.u0, bar.rows, opt);
        s.unbounded = true;
        s.objective = -std::numeric_limits<double>::infinity();
        return s;
    }

    PatternMatrix H;
    H.build(n, bar.pattern());
    std::vector<double> contrib(H.slot.size());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.analyzePattern(H.S);

    const int nr = static_cast<int>(bar.rows.size());
    std::vector<double> slack(nr), gu(n), du(n), dt(bar.soc ? ne : 0), dr(bar.capped ? n : 0);
    std::vector<double> gt(bar.soc ? ne : 0), gr(bar.capped ? n : 0), htt(bar.soc ? ne : 0);
    std::vector<Eigen::Vector2d> hgt(bar.soc ? ne : 0), eg(ne);
    std::vector<double> esoc(bar.soc ? ne : 0);
    std::vector<double> s1(bar.capped ? n : 0), s2(bar.capped ? n : 0), hrr(bar.capped ? n : 0);

    ScreeningSolution out;
    double tau = 1.0;
    int newton = 0, outer = 0;
    std::vector<double> trace;
    const std::size_t elem_slots = [&] {
        std::size_t s = 0;
        for (const auto& e : m.elements) s += std::size_t(e.nv) * e.nv;
        return s;
    }();
    std::vector<std::size_t> elem_off(ne + 1, 0);
    for (int e = 0; e < ne; ++e) elem_off[e + 1] = elem_off[e] + std::size_t(m.elements[e].nv) * m.elements[e].nv;

    for (;;) {
        // centering
        for (int inner = 0;; ++inner) {
            if (++newton > opt.max_newton) throw NoConvergenceError("screening solver exceeded its Newton budget");
            double* u = bar.u.data();
            // slacks
#pragma omp parallel for schedule(static)
            for (int k = 0; k < nr; ++k) slack[k] = bar.row_value(bar.rows[k], u);
#pragma omp parallel for schedule(static)
            for (int e = 0; e < ne; ++e) eg[e] = m.gradient(m.elements[e], u);
            // element contributions
#pragma omp parallel for schedule(static)
            for (int e = 0; e < ne; ++e) {
                const auto& el = m.elements[e];
                Eigen::Matrix2d B = tau * lam * el.w * Eigen::Matrix2d::Identity();
                if (m.dim == 1) B(1, 1) = 0.0;
                if (bar.soc) {
                    const Eigen::Vector2d g = eg[e];
                    const double tt = bar.t[e];
                    const double s = tt * tt - g.squaredNorm();
                    esoc[e] = s;
                    const double h_tt = -2.0 / s + 4.0 * tt * tt / (s * s);
                    const Eigen::Vector2d h_gt = -4.0 * tt * g / (s * s);
                    Eigen::Matrix2d h_gg = (2.0 / s) * Eigen::Matrix2d::Identity() + (4.0 / (s * s)) * g * g.transpose();
                    if (m.dim == 1) {
                        h_gg(1, 1) = 0.0;
                        h_gg(0, 1) = h_gg(1, 0) = 0.0;
                    }
                    htt[e] = h_tt;
                    hgt[e] = h_gt;
                    gt[e] = tau * lam * bar.pb.kappa * el.w - 2.0 * tt / s;
                    B += h_gg - h_gt * h_gt.transpose() / h_tt;
                }
                std::size_t o = elem_off[e];
                for (int a = 0; a < el.nv; ++a)
                    for (int b = 0; b < el.nv; ++b) contrib[o++] = el.dphi[a].dot(B * el.dphi[b]);
            }
            // row contributions
            const std::size_t row_off = elem_slots;
#pragma omp parallel for schedule(static)
            for (int k = 0; k < nr; ++k) {
                const double d = 1.0 / (slack[k] * slack[k]);
                static constexpr double coef[3] = {1.0, -2.0, 1.0};
                std::size_t o = row_off + std::size_t(k) * 9;
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) contrib[o++] = coef[a] * coef[b] * d;
            }
            const std::size_t diag_off = row_off + std::size_t(nr) * 9;
            for (int i = 0; i < n; ++i) {
                const double s = u[i] - bar.u0[i];
                double d = 1.0 / (s * s);
                if (bar.capped) {
                    s1[i] = u[i] - bar.r[i];
                    s2[i] = bar.cap - bar.r[i];
                    const double h_uu = 1.0 / (s1[i] * s1[i]);
                    hrr[i] = h_uu + 1.0 / (s2[i] * s2[i]);
                    d += h_uu - h_uu * h_uu / hrr[i];
                }
                contrib[diag_off + i] = d;
            }
            // gradient of tau F + phi with respect to u
            for (int i = 0; i < n; ++i) {
                gu[i] = tau * lam * m.mass[i] - 1.0 / (u[i] - bar.u0[i]);
                if (linear_w) gu[i] -= tau * m.mass[i];
                if (bar.capped) {
                    gu[i] -= 1.0 / s1[i];
                    gr[i] = -tau * m.mass[i] + 1.0 / s1[i] + 1.0 / s2[i];
                }
            }
            for (int e = 0; e < ne; ++e) {
                const auto& el = m.elements[e];
                Eigen::Vector2d v = tau * lam * el.w * (eg[e] - el.xbar);
                if (bar.soc) v += 2.0 * eg[e] / esoc[e];
                if (m.dim == 1) v[1] = 0.0;
                for (int a = 0; a < el.nv; ++a) gu[el.v[a]] += el.dphi[a].dot(v);
            }
            for (int k = 0; k < nr; ++k) {
                const double d = 1.0 / slack[k];
                gu[bar.rows[k][0]] -= d;
                gu[bar.rows[k][2]] -= d;
                gu[bar.rows[k][1]] += 2.0 * d;
            }
            // reduced right-hand side
            Eigen::VectorXd rhs(n);
            for (int i = 0; i < n; ++i) rhs[i] = -gu[i];
            if (bar.soc)
                for (int e = 0; e < ne; ++e) {
                    const auto& el = m.elements[e];
                    const Eigen::Vector2d v = hgt[e] * (gt[e] / htt[e]);
                    for (int a = 0; a < el.nv; ++a) rhs[el.v[a]] += el.dphi[a].dot(v);
                }
            if (bar.capped)
                for (int i = 0; i < n; ++i) rhs[i] += (-1.0 / (s1[i] * s1[i])) * gr[i] / hrr[i];

            H.fill(contrib);
            ldlt.factorize(H.S);
            if (ldlt.info() != Eigen::Success) throw NumericalError("screening Newton system is not positive definite");
            Eigen::VectorXd step = ldlt.solve(rhs);
            if (!step.allFinite()) throw NumericalError("screening Newton step is not finite");
            for (int i = 0; i < n; ++i) du[i] = step[i];
            std::vector<Eigen::Vector2d> dg(ne);
            for (int e = 0; e < ne; ++e) dg[e] = m.gradient(m.elements[e], du.data());
            if (bar.soc)
                for (int e = 0; e < ne; ++e) dt[e] = (-gt[e] - hgt[e].dot(dg[e])) / htt[e];
            if (bar.capped)
                for (int i = 0; i < n; ++i) dr[i] = (-gr[i] + du[i] / (s1[i] * s1[i])) / hrr[i];

            // directional data for the exact line search
            double slope = 0.0;
            for (int i = 0; i < n; ++i) slope += gu[i] * du[i];
            for (std::size_t e = 0; e < gt.size(); ++e) slope += gt[e] * dt[e];
            for (std::size_t i = 0; i < gr.size(); ++i) slope += gr[i] * dr[i];
            double fslope = 0.0, fcurv = 0.0;  // F along the step: fslope a + fcurv a^2 / 2
            for (int i = 0; i < n; ++i) fslope += lam * m.mass[i] * du[i] - (linear_w ? m.mass[i] * du[i] : 0.0);
            for (int e = 0; e < ne; ++e) {
                const auto& el = m.elements[e];
                fslope += lam * el.w * (eg[e] - el.xbar).head(m.dim).dot(dg[e].head(m.dim));
                fcurv += lam * el.w * dg[e].head(m.dim).squaredNorm();
                if (bar.soc) fslope += lam * bar.pb.kappa * el.w * dt[e];
            }
            for (std::size_t i = 0; i < dr.size(); ++i) fslope -= m.mass[i] * dr[i];

            const double dec2 = -slope;
            if (!(dec2 >= -1e-9)) throw NumericalError("screening Newton step is not a descent direction");
            if (dec2 * 0.5 <= 1e-9) break;

            std::vector<double> drow(nr);
            for (int k = 0; k < nr; ++k) drow[k] = bar.row_value(bar.rows[k], du.data());
            auto delta = [&](double a) {
                double phi = 0.0;
                auto term = [&](double rel) {
                    if (!(rel > -1.0 + 1e-15)) return std::numeric_limits<double>::infinity();
                    return -std::log1p(rel);
                };
                for (int k = 0; k < nr; ++k) phi += term(a * drow[k] / slack[k]);
                for (int i = 0; i < n; ++i) phi += term(a * du[i] / (u[i] - bar.u0[i]));
                if (bar.soc)
                    for (int e = 0; e < ne; ++e) {
                        const double tt = bar.t[e];
                        const Eigen::Vector2d g = eg[e], d = dg[e];
                        double lin = 2.0 * (tt * dt[e] - g.head(m.dim).dot(d.head(m.dim)));
                        double quad = dt[e] * dt[e] - d.head(m.dim).squaredNorm();
                        const double nt = tt + a * dt[e];
                        if (!(nt > 0.0)) return std::numeric_limits<double>::infinity();
                        phi += term((a * lin + a * a * quad) / esoc[e]);
                    }
                if (bar.capped)
                    for (int i = 0; i < n; ++i) {
                        phi += term(a * (du[i] - dr[i]) / s1[i]);
                        phi += term(-a * dr[i] / s2[i]);
                    }
                return tau * (a * fslope + 0.5 * a * a * fcurv) + phi;
            };
            double a = 1.0;
            for (int k = 0; k < nr; ++k)
                if (drow[k] < 0.0) a = std::min(a, -0.99 * slack[k] / drow[k]);
            for (int i = 0; i < n; ++i)
                if (du[i] < 0.0) a = std::min(a, -0.99 * (u[i] - bar.u0[i]) / du[i]);
            bool ok = false;
            for (int h = 0; h < 60; ++h, a *= 0.5) {
                const double d = delta(a);
                if (std::isfinite(d) && d <= 0.01 * a * slope) {
                    ok = true;
                    break;
                }
            }
            if (!ok) {
                if (dec2 * 0.5 <= 1e-6) break;
                throw NoConvergenceError("screening line search failed");
            }
            for (int i = 0; i < n; ++i) bar.u[i] += a * du[i];
            for (std::size_t e = 0; e < bar.t.size(); ++e) bar.t[e] += a * dt[e];
            for (std::size_t i = 0; i < bar.r.size(); ++i) bar.r[i] += a * dr[i];
            double umax = 0.0;
            for (double v : bar.u) umax = std::max(umax, std::abs(v));
            if (umax > 1e8) {
                ScreeningSolution s = finish(m, pb, mode, bar.u, bar.u0, bar.rows, opt);
                s.unbounded = true;
                s.energy_trace = trace;
                s.newton_steps = newton;
                s.iterations = outer;
                return s;
            }
        }
        ++outer;
        const double obj = objective(m, pb, mode, bar.u);
        trace.push_back(obj);
        const double gap = bar.nu / tau;
        if (gap <= opt.tol * std::max(1.0, std::abs(obj))) {
            out = finish(m, pb, mode, bar.u, bar.u0, bar.rows, opt);
            out.gap_bound = gap;
            break;
        }
        tau *= 10.0;
    }
    out.energy_trace = trace;
    out.iterations = outer;
    out.newton_steps = newton;
    out.kkt_worst = kkt_probe(m, pb, mode, bar.u, bar.u0, opt.kkt_trials, opt.seed);
    return out;
}

}  // namespace

ScreeningSolution solve_rochet_chone(const ScreeningProblem& problem, const ScreeningOptions& opt) {
    return solve_barrier(problem, Mode{}, opt);
}

ScreeningSolution solve_rochet_chone(const ScreeningProblem& problem, int resolution, double tol) {
    ScreeningOptions opt;
    opt.resolution = resolution;
    opt.tol = tol;
    return solve_rochet_chone(problem, opt);
}

ScreeningSolution solve_welfare(const ScreeningProblem& problem, const WelfareFunction& w, double lambda,
                                const ScreeningOptions& opt) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and nonnegative");
    // sampled concavity and monotonicity
    for (int k = -20; k <= 20; ++k) {
        const double s = 0.25 * k, h = 0.1;
        if (w(s + h) < w(s) - 1e-12 || w(s + h) + w(s - h) - 2.0 * w(s) > 1e-12)
            throw ValidationError("welfare must be concave and nondecreasing");
    }
    Mode mode;
    mode.lambda = lambda;
    mode.welfare = &w;
    return solve_barrier(problem, mode, opt);
}

}  // namespace mk
