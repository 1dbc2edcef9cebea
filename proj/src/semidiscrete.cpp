#include "mk/semidiscrete.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <random>

#include "mk/errors.hpp"
#include "mk/parallel.hpp"

namespace mk {

namespace {

struct Vertex {
    double x, y;
    int tag;  // target index owning the edge that starts here, -1 for the cell boundary
};

// Keeps the part of poly where alpha + beta . xi >= 0. New edges along the
// clip line are tagged with `tag`.
void clip(const std::vector<Vertex>& in, std::vector<Vertex>& out, double alpha, double bx, double by, int tag) {
    out.clear();
    const std::size_t m = in.size();
    for (std::size_t i = 0; i < m; ++i) {
        const Vertex& p = in[i];
        const Vertex& q = in[(i + 1) % m];
        double fp = alpha + bx * p.x + by * p.y;
        double fq = alpha + bx * q.x + by * q.y;
        if (fp >= 0.0) {
            out.push_back(p);
            if (fq < 0.0) {
                double t = fp / (fp - fq);
                out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y), tag});
            }
        } else if (fq >= 0.0) {
            double t = fp / (fp - fq);
            out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y), p.tag});
        }
    }
}

}  // namespace

struct SemiDiscreteKernel {
    const SemiDiscreteProblem& P;
    const Eigen::VectorXd& v;
    bool want_jac;

    struct Accum {
        std::vector<double> masses;
        std::vector<double> jac;
        double u = 0.0;
        double cost = 0.0;
        std::size_t ties = 0;
        std::vector<int> cand;
        std::vector<double> score;
        std::vector<Vertex> a, b;
        std::vector<double> cbuf, gbuf;

        void reset(std::size_t n, bool jac_on) {
            masses.assign(n, 0.0);
            if (jac_on) jac.assign(n * n, 0.0);
            u = cost = 0.0;
            ties = 0;
        }
    };

    void load(std::size_t s, Accum& acc, const double*& cst, const double*& grd) const {
        const std::size_t n = P.n_;
        const int d = P.dim_;
        if (!P.closed_form_) {
            cst = &P.cost_[s * n];
            grd = &P.grad_[s * n * d];
            return;
        }
        acc.cbuf.resize(n);
        acc.gbuf.resize(n * d);
        const double* x = &P.centers_[s * d];
        for (std::size_t i = 0; i < n; ++i) {
            const double* y = &P.ys_[i * d];
            double c = 0.0;
            for (int a = 0; a < d; ++a) {
                if (P.closed_form_ == 1) {
                    double t = x[a] - y[a];
                    c += 0.5 * t * t;
                    acc.gbuf[i * d + a] = t;
                } else {
                    c -= x[a] * y[a];
                    acc.gbuf[i * d + a] = -y[a];
                }
            }
            acc.cbuf[i] = c;
        }
        cst = acc.cbuf.data();
        grd = acc.gbuf.data();
    }

    // Processes support cell s; returns the centre label.
    int cell(std::size_t s, Accum& acc) const {
        const std::size_t n = P.n_;
        const int d = P.dim_;
        const double* cst;
        const double* grd;
        load(s, acc, cst, grd);
        const double mass = P.source_.masses()[P.support_[s]];
        acc.score.resize(n);
        double best = -std::numeric_limits<double>::infinity(), second = best;
        int arg = 0;
        double rmax = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double sc = -cst[i] - v[i];
            acc.score[i] = sc;
            if (sc > best) {
                second = best;
                best = sc;
                arg = static_cast<int>(i);
            } else if (sc > second) {
                second = sc;
            }
            double r = 0.0;
            for (int a = 0; a < d; ++a) r += std::fabs(grd[i * d + a]) * P.half_[a];
            rmax = std::max(rmax, r);
        }
        if (n > 1 && best - second <= 1e-12 * (1.0 + std::fabs(best))) ++acc.ties;
        acc.cand.clear();
        if (n > 1 && best - second <= 2.0 * rmax) {
            for (std::size_t i = 0; i < n; ++i)
                if (acc.score[i] >= best - 2.0 * rmax) acc.cand.push_back(static_cast<int>(i));
        }
        if (acc.cand.size() <= 1) {
            acc.masses[arg] += mass;
            acc.u += mass * best;
            acc.cost += mass * cst[arg];
            return arg;
        }
        if (d == 1) {
            cell_1d(cst, grd, mass, acc);
        } else {
            cell_2d(cst, grd, mass, acc);
        }
        return arg;
    }

    void cell_1d(const double* cst, const double* grd, double mass, Accum& acc) const {
        const std::size_t n = P.n_;
        const double h = P.half_[0];
        const double rho = mass / (2.0 * h);
        for (int i : acc.cand) {
            double lo = -h, hi = h;
            int tlo = -1, thi = -1;
            double gi = -grd[i];
            for (int j : acc.cand) {
                if (j == i) continue;
                double alpha = acc.score[i] - acc.score[j];
                double beta = gi + grd[j];
                if (beta == 0.0) {
                    if (alpha < 0.0 || (alpha == 0.0 && j < i)) lo = hi;
                    continue;
                }
                double root = -alpha / beta;
                if (beta > 0.0) {
                    if (root > lo) { lo = root; tlo = j; }
                } else {
                    if (root < hi) { hi = root; thi = j; }
                }
            }
            if (hi <= lo) continue;
            double len = hi - lo, mid = 0.5 * (hi + lo);
            double m = rho * len;
            acc.masses[i] += m;
            acc.u += m * (acc.score[i] + gi * mid);
            acc.cost += m * (cst[i] + grd[i] * mid);
            if (want_jac) {
                for (int t : {tlo, thi}) {
                    if (t < 0) continue;
                    double beta = std::fabs(gi + grd[t]);
                    acc.jac[i * n + t] += rho / beta;
                }
            }
        }
    }

    void cell_2d(const double* cst, const double* grd, double mass, Accum& acc) const {
        const std::size_t n = P.n_;
        const double hx = P.half_[0], hy = P.half_[1];
        const double rho = mass / (4.0 * hx * hy);
        for (int i : acc.cand) {
            acc.a = {{-hx, -hy, -1}, {hx, -hy, -1}, {hx, hy, -1}, {-hx, hy, -1}};
            const double gix = -grd[i * 2], giy = -grd[i * 2 + 1];
            for (int j : acc.cand) {
                if (j == i) continue;
                double alpha = acc.score[i] - acc.score[j];
                double bx = gix + grd[j * 2], by = giy + grd[j * 2 + 1];
                // ties on a shared boundary go to the lower index
                if (j < i && alpha == 0.0 && bx == 0.0 && by == 0.0) alpha = -1.0;
                clip(acc.a, acc.b, alpha, bx, by, j);
                std::swap(acc.a, acc.b);
                if (acc.a.size() < 3) break;
            }
            if (acc.a.size() < 3) continue;
            double area = 0.0, cx = 0.0, cy = 0.0;
            const std::size_t m = acc.a.size();
            for (std::size_t k = 0; k < m; ++k) {
                const Vertex& p = acc.a[k];
                const Vertex& q = acc.a[(k + 1) % m];
                double cr = p.x * q.y - q.x * p.y;
                area += cr;
                cx += (p.x + q.x) * cr;
                cy += (p.y + q.y) * cr;
            }
            area *= 0.5;
            if (area <= 0.0) continue;
            cx /= 6.0 * area;
            cy /= 6.0 * area;
            double mm = rho * area;
            acc.masses[i] += mm;
            acc.u += mm * (acc.score[i] + gix * cx + giy * cy);
            acc.cost += mm * (cst[i] + grd[i * 2] * cx + grd[i * 2 + 1] * cy);
            if (want_jac) {
                for (std::size_t k = 0; k < m; ++k) {
                    const Vertex& p = acc.a[k];
                    if (p.tag < 0) continue;
                    const Vertex& q = acc.a[(k + 1) % m];
                    double len = std::hypot(q.x - p.x, q.y - p.y);
                    double bn = std::hypot(gix + grd[p.tag * 2], giy + grd[p.tag * 2 + 1]);
                    if (bn > 0.0) acc.jac[i * n + p.tag] += rho * len / bn;
                }
            }
        }
    }
};

SemiDiscreteProblem::SemiDiscreteProblem(const GridMeasure& source, const DiscreteMeasure& targets,
                                         const CostFunction& c)
    : source_(source) {
    const GridGeometry& g = source_.geometry();
    dim_ = g.dim();
    if (dim_ > 2) throw ValidationError("semi-discrete transport supports 1-D and 2-D source grids");
    if (targets.size() == 0) throw ValidationError("no targets");
    if (targets.chart() != g.chart) throw ValidationError("source grid and targets live on different charts");
    if (targets.dim() != dim_) throw ValidationError("source and target dimensions differ");
    if (!c.accepts(g.chart)) throw DomainError("cost " + c.spec() + " does not accept chart " + to_string(g.chart));
    n_ = targets.size();
    nu_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        nu_[i] = targets.weight(i);
        if (!(nu_[i] > 0.0)) throw ValidationError("semi-discrete targets must have positive weight");
    }
    const double total = source_.total_mass();
    if (std::fabs(total - nu_.sum()) > 1e-9) throw InfeasibleError("source and target masses differ");
    for (int a = 0; a < dim_; ++a) half_.push_back(0.5 * g.width(a));
    for (std::size_t k = 0; k < g.size(); ++k)
        if (source_.masses()[k] > 0.0) support_.push_back(k);

    const LocalChart lc = g.local_chart();
    const int m = lc.ambient_dim();
    const std::size_t S = support_.size();
    if (g.chart == Chart::euclidean && (c.kind == CostKind::quadratic || c.kind == CostKind::bilinear)) {
        closed_form_ = c.kind == CostKind::quadratic ? 1 : 2;
        centers_.resize(S * dim_);
        ys_.resize(n_ * dim_);
        double cmax = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (int a = 0; a < dim_; ++a) ys_[i * dim_ + a] = targets.atom(i).coords[a];
        for (std::size_t s = 0; s < S; ++s) {
            Eigen::VectorXd xi = g.center(support_[s]);
            for (int a = 0; a < dim_; ++a) centers_[s * dim_ + a] = xi[a];
            for (std::size_t i = 0; i < n_; ++i)
                cmax = std::max(cmax, std::fabs(cost_eval_raw(c, g.chart, xi.data(), &ys_[i * dim_], dim_)));
        }
        scale_ = 1.0 + cmax;
        return;
    }
    cost_.assign(S * n_, 0.0);
    grad_.assign(S * n_ * dim_, 0.0);
    std::vector<Eigen::VectorXd> ys;
    for (std::size_t i = 0; i < n_; ++i) ys.push_back(targets.atom(i).coords);

    auto fill = [&](std::size_t s) {
        using D = Dual<double>;
        Eigen::VectorXd xi = g.center(support_[s]);
        std::array<double, 3> xamb{};
        lc.embed(xi.data(), xamb.data());
        std::array<D, 2> xd{};
        std::array<D, 3> xe{}, yd{};
        for (std::size_t i = 0; i < n_; ++i) {
            check_admissible(c, g.chart, xamb.data(), ys[i].data(), m);
            for (int b = 0; b < m; ++b) yd[b] = D(ys[i][b]);
            for (int a = 0; a < dim_; ++a) {
                for (int b = 0; b < dim_; ++b) xd[b] = D(xi[b], a == b ? 1.0 : 0.0);
                lc.embed(xd.data(), xe.data());
                D val = cost_kernel<D>(c, g.chart, xe.data(), yd.data(), m);
                cost_[s * n_ + i] = val.re;
                grad_[(s * n_ + i) * dim_ + a] = val.eps;
            }
        }
    };

    bool failed = false;
#pragma omp parallel for schedule(static)
    for (std::size_t s = 0; s < S; ++s) {
        try {
            fill(s);
        } catch (...) {
#pragma omp atomic write
            failed = true;
        }
    }
    if (failed)
        for (std::size_t s = 0; s < S; ++s) fill(s);  // rethrows the first failure in order

    double cmax = 0.0;
    for (double x : cost_) cmax = std::max(cmax, std::fabs(x));
    scale_ = 1.0 + cmax;
}

SemiDiscreteProblem::Evaluation SemiDiscreteProblem::evaluate(const Eigen::VectorXd& v, bool jac,
                                                              bool labels) const {
    const std::size_t S = support_.size();
    const std::size_t B = block_count(S);
    std::vector<SemiDiscreteKernel::Accum> parts(B);
    Evaluation e;
    if (labels) e.labels.assign(source_.size(), -1);
    SemiDiscreteKernel K{*this, v, jac};
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t b = 0; b < B; ++b) {
        auto& acc = parts[b];
        acc.reset(n_, jac);
        const std::size_t end = std::min(S, (b + 1) * kReductionBlock);
        for (std::size_t s = b * kReductionBlock; s < end; ++s) {
            int l = K.cell(s, acc);
            if (labels) e.labels[support_[s]] = l;
        }
    }
    e.masses = Eigen::VectorXd::Zero(n_);
    if (jac) e.jacobian = Eigen::MatrixXd::Zero(n_, n_);
    for (const auto& acc : parts) {
        for (std::size_t i = 0; i < n_; ++i) e.masses[i] += acc.masses[i];
        if (jac)
            for (std::size_t i = 0; i < n_; ++i)
                for (std::size_t j = 0; j < n_; ++j) e.jacobian(i, j) += acc.jac[i * n_ + j];
        e.integral_u += acc.u;
        e.cost += acc.cost;
        e.ties += acc.ties;
    }
    if (jac)
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n_; ++j)
                if (j != i) s += e.jacobian(i, j);
            e.jacobian(i, i) = -s;
        }
    return e;
}

SemiDiscreteProblem::Evaluation SemiDiscreteProblem::evaluate_serial(const Eigen::VectorXd& v, bool jac,
                                                                     bool labels) const {
    SemiDiscreteKernel K{*this, v, jac};
    SemiDiscreteKernel::Accum acc;
    acc.reset(n_, jac);
    Evaluation e;
    if (labels) e.labels.assign(source_.size(), -1);
    for (std::size_t s = 0; s < support_.size(); ++s) {
        int l = K.cell(s, acc);
        if (labels) e.labels[support_[s]] = l;
    }
    e.masses = Eigen::Map<Eigen::VectorXd>(acc.masses.data(), n_);
    if (jac) {
        e.jacobian = Eigen::Map<Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(acc.jac.data(), n_, n_);
        for (std::size_t i = 0; i < n_; ++i) {
            e.jacobian(i, i) = 0.0;
            e.jacobian(i, i) = -e.jacobian.row(i).sum();
        }
    }
    e.integral_u = acc.u;
    e.cost = acc.cost;
    e.ties = acc.ties;
    return e;
}

Eigen::VectorXd SemiDiscreteProblem::initial_weights() const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n_);
    if (!closed_form_) return v;
    // shrink the targets into one source cell near the barycentre; the
    // Laguerre diagram is then the Voronoi diagram of the shrunken copies
    const int d = dim_;
    Eigen::VectorXd bar = Eigen::VectorXd::Zero(d), ybar = Eigen::VectorXd::Zero(d);
    double total = 0.0;
    for (std::size_t s = 0; s < support_.size(); ++s) {
        double m = source_.masses()[support_[s]];
        for (int a = 0; a < d; ++a) bar[a] += m * centers_[s * d + a];
        total += m;
    }
    bar /= total;
    std::size_t near = 0;
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < support_.size(); ++s) {
        double dist = 0.0;
        for (int a = 0; a < d; ++a) dist += std::pow(centers_[s * d + a] - bar[a], 2);
        if (dist < dmin) {
            dmin = dist;
            near = s;
        }
    }
    for (std::size_t i = 0; i < n_; ++i)
        for (int a = 0; a < d; ++a) ybar[a] += ys_[i * d + a] / double(n_);
    double spread = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
        double r = 0.0;
        for (int a = 0; a < d; ++a) r += std::pow(ys_[i * d + a] - ybar[a], 2);
        spread = std::max(spread, std::sqrt(r));
    }
    double hmin = *std::min_element(half_.begin(), half_.end());
    double lambda = spread > 0.0 ? 0.5 * hmin / spread : 1.0;
    for (std::size_t i = 0; i < n_; ++i) {
        double z2 = 0.0, y2 = 0.0;
        for (int a = 0; a < d; ++a) {
            double y = ys_[i * d + a];
            double z = centers_[near * d + a] + lambda * (y - ybar[a]);
            z2 += z * z;
            y2 += y * y;
        }
        v[i] = 0.5 * z2 / lambda - (closed_form_ == 1 ? 0.5 * y2 : 0.0);
    }
    return v;
}

Eigen::VectorXd SemiDiscreteProblem::score_gaps(const Eigen::VectorXd& v) const {
    const std::size_t S = support_.size();
    const std::size_t B = block_count(S);
    std::vector<std::vector<double>> parts(B, std::vector<double>(n_, std::numeric_limits<double>::infinity()));
    SemiDiscreteKernel K{*this, v, false};
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t b = 0; b < B; ++b) {
        SemiDiscreteKernel::Accum acc;
        auto& gap = parts[b];
        const std::size_t end = std::min(S, (b + 1) * kReductionBlock);
        for (std::size_t s = b * kReductionBlock; s < end; ++s) {
            const double *cst, *grd;
            K.load(s, acc, cst, grd);
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n_; ++i) best = std::max(best, -cst[i] - v[i]);
            for (std::size_t i = 0; i < n_; ++i) gap[i] = std::min(gap[i], best - (-cst[i] - v[i]));
        }
    }
    Eigen::VectorXd out = Eigen::VectorXd::Constant(n_, std::numeric_limits<double>::infinity());
    for (const auto& g : parts)
        for (std::size_t i = 0; i < n_; ++i) out[i] = std::min(out[i], g[i]);
    return out;
}

double SemiDiscreteProblem::dual(const Evaluation& e, const Eigen::VectorXd& v) const {
    return -e.integral_u - v.dot(nu_);
}

SemiDiscreteSolution solve_semidiscrete(const GridMeasure& source, const DiscreteMeasure& targets,
                                        const CostFunction& c, double mass_tol) {
    SemiDiscreteOptions opt;
    opt.mass_tol = mass_tol;
    return solve_semidiscrete(source, targets, c, opt);
}


SemiDiscreteSolution solve_semidiscrete(const GridMeasure& source, const DiscreteMeasure& targets,
                                        const CostFunction& c, const SemiDiscreteOptions& opt) {
    SemiDiscreteProblem P(source, targets, c);
    const std::size_t n = P.targets();
    const Eigen::VectorXd& nu = P.target_weights();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    auto e = P.evaluate(v, true, false);

    // give every target a nonempty cell before Newton starts
    if (e.masses.minCoeff() <= 0.0) {
        v = P.initial_weights();
        e = P.evaluate(v, true, false);
    }
    for (int round = 0; round < static_cast<int>(4 * n) && e.masses.minCoeff() <= 0.0; ++round) {
        Eigen::Index i;
        e.masses.minCoeff(&i);
        v[i] -= P.score_gaps(v)[i];
        e = P.evaluate(v, true, false);
    }
    if (e.masses.minCoeff() <= 0.0) throw NoConvergenceError("could not give every target a nonempty cell");

    const double eps = 0.5 * std::min(nu.minCoeff(), e.masses.minCoeff());
    SemiDiscreteSolution sol;
    double phi = P.dual(e, v);
    Eigen::VectorXd G = e.masses - nu;
    int it = 0;
    for (;; ++it) {
        sol.dual_trace.push_back(phi);
        sol.error_trace.push_back(G.cwiseAbs().maxCoeff());
        if (G.cwiseAbs().maxCoeff() <= opt.mass_tol || n == 1) break;
        if (it >= opt.max_iterations)
            throw NoConvergenceError("semi-discrete Newton iteration cap reached; max mass error " +
                                     std::to_string(G.cwiseAbs().maxCoeff()));
        const Eigen::Index r = static_cast<Eigen::Index>(n) - 1;
        Eigen::MatrixXd L = -e.jacobian.bottomRightCorner(r, r);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(L);
        Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
        d.tail(r) = ldlt.solve(G.tail(r));
        if (ldlt.info() != Eigen::Success || !d.allFinite()) {
            L.diagonal().array() += 1e-12 * (1.0 + L.diagonal().cwiseAbs().maxCoeff());
            d.tail(r) = L.ldlt().solve(G.tail(r));
        }
        const double gnorm = G.norm();
        double tau = 1.0;
        for (;;) {
            Eigen::VectorXd vt = v + tau * d;
            auto et = P.evaluate(vt, true, false);
            double pt = P.dual(et, vt);
            Eigen::VectorXd Gt = et.masses - nu;
            if (et.masses.minCoeff() >= eps && Gt.norm() <= (1.0 - 0.5 * tau) * gnorm &&
                pt >= phi - 1e-14 * (1.0 + std::fabs(phi))) {
                v = vt;
                e = std::move(et);
                phi = pt;
                G = Gt;
                break;
            }
            tau *= 0.5;
            if (tau < 1e-12)
                throw NoConvergenceError("semi-discrete line search failed; max mass error " +
                                         std::to_string(G.cwiseAbs().maxCoeff()));
        }
    }

    v.array() -= v[0];
    auto fin = P.evaluate(v, false, true);
    sol.source = source;
    sol.targets = targets;
    sol.cost = c;
    sol.weights = v;
    sol.labels = std::move(fin.labels);
    sol.ties = fin.ties;
    std::size_t support = 0;
    for (int l : sol.labels) support += l >= 0;
    sol.tie_fraction = support ? double(sol.ties) / double(support) : 0.0;
    sol.tie_warning = sol.tie_fraction > 1e-3;
    sol.cell_masses = fin.masses;
    sol.mass_errors = (fin.masses - nu).cwiseAbs();
    sol.max_mass_error = sol.mass_errors.maxCoeff();
    sol.transport_cost = fin.cost;
    sol.dual_value = P.dual(fin, v);
    sol.iterations = it;
    return sol;
}

std::vector<int> assign_labels(const SemiDiscreteSolution& s, const Eigen::VectorXd& v) {
    const GridGeometry& g = s.source.geometry();
    std::vector<int> labels(g.size(), -1);
#pragma omp parallel for schedule(static)
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!(s.source.masses()[k] > 0.0)) continue;
        Point x = g.point(k);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < s.targets.size(); ++i) {
            double sc = -cost_eval_raw(s.cost, x.chart, x.coords.data(), s.targets.atom(i).coords.data(),
                                       x.ambient_dim()) -
                        v[i];
            if (sc > best) {
                best = sc;
                labels[k] = static_cast<int>(i);
            }
        }
    }
    return labels;
}

ComponentReport cell_connectivity(const GridGeometry& grid, const std::vector<int>& labels,
                                  const std::vector<double>& masses, int target) {
    ComponentReport rep;
    rep.target = target;
    const std::size_t N = grid.size();
    if (labels.size() != N) throw ValidationError("label field does not match grid");
    const int d = grid.dim();
    std::vector<std::size_t> stride(d, 1);
    for (int a = d - 2; a >= 0; --a) stride[a] = stride[a + 1] * grid.shape[a + 1];
    std::vector<char> seen(N, 0);
    std::deque<std::size_t> queue;
    for (std::size_t k0 = 0; k0 < N; ++k0) {
        if (seen[k0] || labels[k0] != target) continue;
        double mass = 0.0;
        std::size_t size = 0;
        seen[k0] = 1;
        queue.push_back(k0);
        while (!queue.empty()) {
            std::size_t k = queue.front();
            queue.pop_front();
            ++size;
            if (!masses.empty()) mass += masses[k];
            auto idx = grid.unflat(k);
            for (int a = 0; a < d; ++a) {
                for (int sgn : {-1, 1}) {
                    int t = idx[a] + sgn;
                    if (t < 0 || t >= grid.shape[a]) continue;
                    std::size_t nb = sgn > 0 ? k + stride[a] : k - stride[a];
                    if (!seen[nb] && labels[nb] == target) {
                        seen[nb] = 1;
                        queue.push_back(nb);
                    }
                }
            }
        }
        rep.masses.push_back(mass);
        rep.sizes.push_back(size);
        ++rep.count;
    }
    return rep;
}

ComponentReport cell_connectivity(const SemiDiscreteSolution& s, int target) {
    return cell_connectivity(s.source.geometry(), s.labels, s.source.masses(), target);
}

ConvexityReport cell_convexity(const SemiDiscreteSolution& s, int target, int pairs, std::uint64_t seed) {
    ConvexityReport rep;
    rep.target = target;
    const GridGeometry& g = s.source.geometry();
    std::vector<std::size_t> cells;
    for (std::size_t k = 0; k < s.labels.size(); ++k)
        if (s.labels[k] == target) cells.push_back(k);
    if (cells.size() < 2) return rep;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
    double hmin = g.width(0);
    for (int a = 1; a < g.dim(); ++a) hmin = std::min(hmin, g.width(a));
    const LocalChart lc = g.local_chart();
    for (int p = 0; p < pairs; ++p) {
        Eigen::VectorXd a = g.center(cells[pick(rng)]), b = g.center(cells[pick(rng)]);
        int steps = std::max(2, static_cast<int>(std::ceil((b - a).norm() / hmin)));
        bool ok = true;
        for (int t = 1; t < steps && ok; ++t) {
            Point x = lc.point(a + (b - a) * (double(t) / steps));
            double mine = 0.0, best = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < s.targets.size(); ++i) {
                double sc = -cost_eval_raw(s.cost, x.chart, x.coords.data(), s.targets.atom(i).coords.data(),
                                           x.ambient_dim()) -
                            s.weights[i];
                if (static_cast<int>(i) == target) mine = sc;
                best = std::max(best, sc);
            }
            if (mine < best - 1e-12 * (1.0 + std::fabs(best))) ok = false;
        }
        ++rep.pairs;
        if (!ok) ++rep.failures;
    }
    rep.convex = rep.failures == 0;
    return rep;
}

std::string to_string(LoeperGeometry g) {
    switch (g) {
        case LoeperGeometry::euclidean: return "euclidean";
        case LoeperGeometry::sphere: return "sphere";
        case LoeperGeometry::hyperbolic: return "hyperbolic";
    }
    return "?";
}

LoeperGeometry parse_loeper_geometry(const std::string& name) {
    if (name == "euclidean") return LoeperGeometry::euclidean;
    if (name == "sphere") return LoeperGeometry::sphere;
    if (name == "hyperbolic") return LoeperGeometry::hyperbolic;
    throw ValidationError("unknown geometry '" + name + "'");
}

LoeperScenario loeper_demo(LoeperGeometry geo, double R, double s, int resolution, double mass_tol) {
    if (!(R > 0.0) || !(s > 0.0)) throw ValidationError("ball radius and spacing must be positive");
    if (resolution < 8) throw ValidationError("resolution must be at least 8");
    GridGeometry g;
    std::vector<Point> ys;
    CostFunction c;
    double half;
    switch (geo) {
        case LoeperGeometry::euclidean:
            g.chart = Chart::euclidean;
            half = R;
            c = CostFunction(CostKind::quadratic);
            for (int k = -1; k <= 1; ++k) ys.push_back(Point{k * s, 0.0});
            break;
        case LoeperGeometry::sphere:
            if (R >= 0.45 * std::numbers::pi) throw DomainError("sphere ball radius must stay below 0.45 pi");
            g.chart = Chart::sphere_embedded;
            half = std::tan(R);
            c = CostFunction(CostKind::sphere_sq);
            for (int k = -1; k <= 1; ++k)
                ys.push_back(Point({std::sin(k * s), 0.0, std::cos(k * s)}, Chart::sphere_embedded));
            break;
        case LoeperGeometry::hyperbolic:
        default:
            g.chart = Chart::poincare_disk;
            half = std::tanh(0.5 * R);
            c = CostFunction(CostKind::hyperbolic_sq);
            for (int k = -1; k <= 1; ++k) ys.push_back(Point({k * std::tanh(0.5 * s), 0.0}, Chart::poincare_disk));
            break;
    }
    g.lo = {-half, -half};
    g.hi = {half, half};
    g.shape = {resolution, resolution};
    std::vector<double> dens(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k)
        if (g.center(k).norm() < half) dens[k] = 1.0;
    GridMeasure mu(g, dens, true);
    DiscreteMeasure nu(ys, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});

    LoeperScenario sc;
    sc.geometry = geo;
    sc.ball_radius = R;
    sc.spacing = s;
    sc.resolution = resolution;
    sc.solution = solve_semidiscrete(mu, nu, c, mass_tol);
    for (int i = 0; i < 3; ++i) {
        sc.components.push_back(cell_connectivity(sc.solution, i));
        sc.convexity.push_back(cell_convexity(sc.solution, i));
    }
    return sc;
}

std::vector<double> default_loeper_radii() { return {0.5, 1.0, 1.5, 2.0, 3.0, 4.0}; }
std::vector<double> default_loeper_spacings() { return {0.1, 0.2, 0.4, 1.0, 2.0}; }

LoeperScan loeper_scan(LoeperGeometry geo, int resolution, const std::vector<double>& radii,
                       const std::vector<double>& spacings, double mass_tol) {
    LoeperScan scan;
    for (double R : radii) {
        for (double s : spacings) {
            LoeperScenario sc;
            try {
                sc = loeper_demo(geo, R, s, resolution, mass_tol);
            } catch (const DomainError&) {
                continue;
            }
            scan.tried.push_back({R, s, sc.middle_components()});
            bool split = sc.middle_components() >= 2;
            scan.scenario = std::move(sc);
            if (split) {
                scan.first_disconnecting = static_cast<int>(scan.tried.size()) - 1;
                return scan;
            }
        }
    }
    if (scan.tried.empty()) throw DomainError("no admissible configuration in the scan range");
    return scan;
}

}  // namespace mk
