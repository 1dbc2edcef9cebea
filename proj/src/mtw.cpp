#include "mk/mtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mk/cconvex.hpp"
#include "mk/errors.hpp"

namespace mk {

namespace {

constexpr double kDegenerate = 1e-8;

Eigen::VectorXd unit_vector(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd v(n);
    do {
        for (int i = 0; i < n; ++i) v[i] = g(rng);
    } while (v.norm() < 1e-8);
    return v / v.norm();
}

double det_checked(const Eigen::MatrixXd& C) {
    double det = C.determinant();
    if (!std::isfinite(det) || std::abs(det) < kDegenerate)
        throw DegenerateError("mixed Hessian is singular (|det| = " + std::to_string(std::abs(det)) + ")");
    return det;
}

// -c_{ij,kl} p p q q + a^T C^{-1} b with a_r = c_{ij,r} p p, b_m = c_{m,kl} q q
double contract(const Tensor& t4, const Tensor& txxy, const Tensor& txyy, const Eigen::MatrixXd& C,
                const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    const int n = static_cast<int>(p.size());
    double quartic = 0.0;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n), b = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double pp = p[i] * p[j], qq = q[i] * q[j];
            for (int k = 0; k < n; ++k) {
                a[k] += txxy.at({i, j, k}) * pp;
                b[k] += txyy.at({k, i, j}) * qq;
                for (int l = 0; l < n; ++l) quartic += t4.at({i, j, k, l}) * pp * q[k] * q[l];
            }
        }
    return -quartic + a.dot(C.fullPivLu().solve(b));
}

}  // namespace

double cross_curvature(const CostFunction& c, const LocalChart& cx, const LocalChart& cy, const Eigen::VectorXd& p,
                       const Eigen::VectorXd& q) {
    const int n = cx.dim();
    if (p.size() != n || q.size() != cy.dim()) throw ValidationError("direction has the wrong dimension");
    if (p.norm() == 0.0 || q.norm() == 0.0) throw ValidationError("cross-curvature needs nonzero directions");
    Eigen::MatrixXd C = mixed_hessian(c, cx, cy);
    det_checked(C);
    Tensor t4 = cost_derivatives(c, cx, cy, DerivativeOrder::Cxxyy);
    Tensor txxy = cost_derivatives(c, cx, cy, DerivativeOrder::Cxxy);
    Tensor txyy = cost_derivatives(c, cx, cy, DerivativeOrder::Cxyy);
    return contract(t4, txxy, txyy, C, p, q);
}

double cross_curvature(const CostFunction& c, const Point& x, const Point& y, const Eigen::VectorXd& p,
                       const Eigen::VectorXd& q) {
    validate_point(x);
    validate_point(y);
    if (x.chart != y.chart || x.ambient_dim() != y.ambient_dim())
        throw ValidationError("points live on different charts");
    check_admissible(c, x.chart, x.coords.data(), y.coords.data(), x.ambient_dim());
    return cross_curvature(c, chart_at(x), chart_at(y), p, q);
}

// ---------------------------------------------------------------------------
// sampling and certification

Point DomainSampler::sample(std::mt19937_64& rng, bool on_boundary) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd dir = unit_vector(rng, dim);
    // geodesic radius, roughly uniform in volume inside the ball
    double r = on_boundary ? radius * (1.0 - 0.02 * u(rng)) : radius * std::pow(u(rng), 1.0 / dim);
    switch (chart) {
        case Chart::euclidean: return Point(r * dir, Chart::euclidean);
        case Chart::poincare_disk: return Point(std::tanh(0.5 * r) * dir, Chart::poincare_disk);
        case Chart::sphere_embedded: {
            Eigen::VectorXd x(dim + 1);
            x.head(dim) = std::sin(r) * dir;
            x[dim] = std::cos(r);
            return Point(x, Chart::sphere_embedded);
        }
    }
    return Point();
}

DomainSampler DomainSampler::for_cost(const CostFunction& c, int dim) {
    DomainSampler s;
    s.dim = dim;
    switch (c.kind) {
        case CostKind::sphere_sq:
            s.chart = Chart::sphere_embedded;
            s.radius = std::numbers::pi / 4.0;
            break;
        case CostKind::hyperbolic_sq:
            s.chart = Chart::poincare_disk;
            s.radius = 1.0;
            break;
        default: break;
    }
    return s;
}

std::string to_string(VerdictStatus s) {
    switch (s) {
        case VerdictStatus::holds: return "holds";
        case VerdictStatus::violated: return "violated";
        case VerdictStatus::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

namespace {

void evaluate_sample(const CostFunction& c, CrossSample& s) {
    try {
        const LocalChart cx = chart_at(s.x), cy = chart_at(s.y);
        Eigen::MatrixXd C = mixed_hessian(c, cx, cy);
        s.det = C.determinant();
        if (s.orthogonal) {
            // project q against the image of p so that p^i c_{i,j} q^j = 0
            Eigen::VectorXd w = C.transpose() * s.p;
            if (w.norm() > 0.0) s.q -= (s.q.dot(w) / w.squaredNorm()) * w;
            if (s.q.norm() < 1e-6) {
                s.degenerate = true;
                return;
            }
            s.q /= s.q.norm();
        }
        s.orthogonality_defect = s.p.dot(C * s.q);
        if (!std::isfinite(s.det) || std::abs(s.det) < kDegenerate) {
            s.degenerate = true;
            return;
        }
        s.cross = cross_curvature(c, cx, cy, s.p, s.q);
        if (!std::isfinite(s.cross)) s.degenerate = true;
    } catch (const Error&) {
        s.degenerate = true;
    }
}

}  // namespace

CrossCurvatureReport certify_conditions(const CostFunction& c, const DomainSampler& sampler,
                                        const CertifyOptions& opt) {
    if (opt.samples < 1) throw ValidationError("need at least one sample");
    if (!c.accepts(sampler.chart)) throw DomainError("cost " + c.spec() + " does not live on the sampler's chart");
    CrossCurvatureReport rep;
    rep.cost = c.spec();
    rep.seed = opt.seed;
    rep.margin = opt.margin;
    rep.tol = opt.tol;

    // all random draws happen here, in sample order
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int total = 2 * opt.samples;
    rep.samples.resize(total);
    const int m = sampler.chart == Chart::sphere_embedded ? sampler.dim + 1 : sampler.dim;
    for (int k = 0; k < total; ++k) {
        CrossSample& s = rep.samples[k];
        s.orthogonal = k < opt.samples;
        for (int attempt = 0;; ++attempt) {
            s.x = sampler.sample(rng, u(rng) < sampler.boundary_fraction);
            s.y = sampler.sample(rng, u(rng) < sampler.boundary_fraction);
            try {
                check_admissible(c, sampler.chart, s.x.coords.data(), s.y.coords.data(), m);
                break;
            } catch (const DomainError&) {
                if (attempt >= 100) throw;
            }
        }
        s.p = unit_vector(rng, sampler.dim);
        s.q = unit_vector(rng, sampler.dim);
    }

    if (opt.parallel) {
#pragma omp parallel for schedule(dynamic, 16)
        for (int k = 0; k < total; ++k) evaluate_sample(c, rep.samples[k]);
    } else {
        for (int k = 0; k < total; ++k) evaluate_sample(c, rep.samples[k]);
    }

    const double inf = std::numeric_limits<double>::infinity();
    double min_det = inf, min_o = inf, max_o = -inf, min_g = inf, max_g = -inf, min_all = inf;
    int w_det = -1, w_o = -1, w_all = -1, bad_det = -1, nondeg = 0, nondeg_o = 0;
    for (int k = 0; k < total; ++k) {
        const CrossSample& s = rep.samples[k];
        if (std::isfinite(s.det) && std::abs(s.det) < min_det) {
            min_det = std::abs(s.det);
            w_det = k;
        }
        if (s.degenerate) {
            ++rep.degenerate;
            if (bad_det < 0 && !(std::abs(s.det) >= kDegenerate)) bad_det = k;
            continue;
        }
        ++nondeg;
        if (s.cross < min_all) {
            min_all = s.cross;
            w_all = k;
        }
        if (s.orthogonal) {
            ++nondeg_o;
            if (s.cross < min_o) {
                min_o = s.cross;
                w_o = k;
            }
            max_o = std::max(max_o, s.cross);
        } else {
            min_g = std::min(min_g, s.cross);
            max_g = std::max(max_g, s.cross);
        }
    }
    rep.min_orthogonal = nondeg_o ? min_o : 0.0;
    rep.max_orthogonal = nondeg_o ? max_o : 0.0;
    rep.min_general = min_g < inf ? min_g : 0.0;
    rep.max_general = max_g > -inf ? max_g : 0.0;

    Verdict a2;
    a2.value = w_det >= 0 ? min_det : 0.0;
    if (bad_det >= 0) {
        a2.status = VerdictStatus::violated;
        a2.witness = bad_det;
    } else if (nondeg > 0) {
        a2.status = VerdictStatus::holds;
        a2.witness = w_det;
    }
    rep.verdicts["A2"] = a2;

    Verdict a3, a3s, b3;
    if (nondeg_o > 0) {
        a3.value = min_o;
        a3.witness = w_o;
        a3.status = min_o >= -opt.tol ? VerdictStatus::holds : VerdictStatus::violated;
        a3s.value = min_o;
        a3s.witness = w_o;
        a3s.status = min_o >= opt.margin ? VerdictStatus::holds : VerdictStatus::violated;
    }
    if (nondeg > 0) {
        b3.value = min_all;
        b3.witness = w_all;
        b3.status = min_all >= -opt.tol ? VerdictStatus::holds : VerdictStatus::violated;
    }
    rep.verdicts["A3"] = a3;
    rep.verdicts["A3s"] = a3s;
    rep.verdicts["B3"] = b3;
    return rep;
}

// ---------------------------------------------------------------------------
// pseudo-metric

MetricTensor metric_tensor_h(const CostFunction& c, const Point& x, const Point& y) {
    validate_point(x);
    validate_point(y);
    check_admissible(c, x.chart, x.coords.data(), y.coords.data(), x.ambient_dim());
    Eigen::MatrixXd C = mixed_hessian(c, chart_at(x), chart_at(y));
    det_checked(C);
    const int n = static_cast<int>(C.rows());
    MetricTensor out;
    out.h = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    out.h.topRightCorner(n, n) = C;
    out.h.bottomLeftCorner(n, n) = C.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.h);
    out.eigenvalues = es.eigenvalues();
    const double zero = 1e-12 * std::max(1.0, out.eigenvalues.cwiseAbs().maxCoeff());
    for (int i = 0; i < 2 * n; ++i) {
        double e = out.eigenvalues[i];
        if (e > zero)
            ++out.positive;
        else if (e < -zero)
            ++out.negative;
        else
            ++out.zero;
    }
    return out;
}

// ---------------------------------------------------------------------------
// c-segments and the maximum principle

CSegment trace_c_segment(const CostFunction& c, const Point& x0, const Point& y0, const Point& y1, int n_t) {
    if (n_t < 2) throw ValidationError("a c-segment needs at least two samples");
    validate_point(x0);
    validate_point(y0);
    validate_point(y1);
    const int m = x0.ambient_dim();
    check_admissible(c, x0.chart, x0.coords.data(), y0.coords.data(), m);
    check_admissible(c, x0.chart, x0.coords.data(), y1.coords.data(), m);
    CostFunction exact = c;
    exact.mode = DerivativeMode::analytic();
    const LocalChart cx = chart_at(x0);
    const Eigen::VectorXd p0 = -grad_x(exact, cx, chart_at(y0));
    const Eigen::VectorXd p1 = -grad_x(exact, cx, chart_at(y1));

    CSegment seg;
    seg.x0 = x0;
    seg.y0 = y0;
    seg.y1 = y1;
    CExpOptions copt;
    copt.tol = 1e-12;
    Point guess = y0;
    for (int k = 0; k < n_t; ++k) {
        const double t = double(k) / (n_t - 1);
        const Eigen::VectorXd pt = (1.0 - t) * p0 + t * p1;
        Point y;
        double res = 0.0;
        try {
            y = c_exponential(exact, x0, pt, guess, copt);
            res = (grad_x(exact, cx, chart_at(y)) + pt).norm();
        } catch (const Error& e) {
            throw NoConvergenceError("c-segment failed at t = " + std::to_string(t) + ": " + e.what());
        }
        if (!(res <= 1e-9))
            throw NoConvergenceError("c-segment failed at t = " + std::to_string(t) + " (residual " +
                                     std::to_string(res) + ")");
        seg.t.push_back(t);
        seg.y.push_back(y);
        seg.residual.push_back(res);
        seg.max_residual = std::max(seg.max_residual, res);
        guess = y;
    }
    return seg;
}

namespace {

struct PointDefect {
    double defect = -std::numeric_limits<double>::infinity();
    int t_index = 0;
    double convexity = -std::numeric_limits<double>::infinity();
    bool valid = false;
};

PointDefect point_defect(const CostFunction& c, const CSegment& seg, const Point& x) {
    PointDefect out;
    const int nt = static_cast<int>(seg.y.size());
    const int m = x.ambient_dim();
    std::vector<double> f(nt);
    for (int k = 0; k < nt; ++k) {
        const double* y = seg.y[k].coords.data();
        f[k] = -cost_eval_raw(c, x.chart, x.coords.data(), y, m) + cost_eval_raw(c, x.chart, seg.x0.coords.data(), y, m);
        if (!std::isfinite(f[k])) return out;
    }
    const double ends = std::max(f.front(), f.back());
    for (int k = 0; k < nt; ++k) {
        double d = f[k] - ends;
        if (d > out.defect) {
            out.defect = d;
            out.t_index = k;
        }
    }
    out.convexity = 0.0;
    for (int k = 1; k + 1 < nt; ++k) out.convexity = std::max(out.convexity, f[k] - 0.5 * (f[k - 1] + f[k + 1]));
    out.valid = true;
    return out;
}

MaxPrincipleReport reduce(const CSegment& seg, const std::vector<PointDefect>& d) {
    MaxPrincipleReport rep;
    rep.t_samples = static_cast<int>(seg.y.size());
    rep.max_defect = 0.0;
    rep.convexity_defect = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!d[i].valid) continue;
        ++rep.points;
        if (rep.witness_x < 0 || d[i].defect > rep.max_defect) {
            rep.max_defect = d[i].defect;
            rep.witness_x = static_cast<int>(i);
            rep.witness_t = seg.t[d[i].t_index];
        }
        if (rep.convexity_witness < 0 || d[i].convexity > rep.convexity_defect) {
            rep.convexity_defect = d[i].convexity;
            rep.convexity_witness = static_cast<int>(i);
        }
    }
    rep.passed = rep.max_defect <= 1e-8;
    return rep;
}

}  // namespace

MaxPrincipleReport loeper_max_principle_check(const CostFunction& c, const CSegment& seg,
                                              const std::vector<Point>& xs) {
    if (seg.y.size() < 2) throw ValidationError("c-segment has fewer than two samples");
    std::vector<PointDefect> d(xs.size());
    const long n = static_cast<long>(xs.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        bool ok = true;
        const Point& x = xs[i];
        if (x.chart != seg.x0.chart || x.ambient_dim() != seg.x0.ambient_dim()) ok = false;
        for (std::size_t k = 0; ok && k < seg.y.size(); ++k) {
            try {
                check_admissible(c, x.chart, x.coords.data(), seg.y[k].coords.data(), x.ambient_dim());
            } catch (const Error&) {
                ok = false;
            }
        }
        if (ok) d[i] = point_defect(c, seg, x);
    }
    return reduce(seg, d);
}

MaxPrincipleReport loeper_max_principle_check(const CostFunction& c, const CSegment& seg, const GridGeometry& grid) {
    grid.validate();
    std::vector<Point> xs(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) xs[k] = grid.point(k);
    return loeper_max_principle_check(c, seg, xs);
}

double cross_along_c_segment(const CostFunction& c, const Point& x0, const Point& y0, const Eigen::VectorXd& p,
                             const Eigen::VectorXd& q, double h) {
    CostFunction exact = c;
    exact.mode = DerivativeMode::analytic();
    const LocalChart cx = chart_at(x0), cy = chart_at(y0);
    const Eigen::VectorXd P0 = -grad_x(exact, cx, cy);
    const Eigen::MatrixXd C = mixed_hessian(exact, cx, cy);
    CExpOptions copt;
    copt.tol = 1e-14;
    copt.max_iter = 100;
    // D_x c(x0, y(t)) = -P0 + t C q, so y(0) = y0 and y'(0) = q
    auto y_at = [&](double t) { return t == 0.0 ? y0 : c_exponential(exact, x0, P0 - t * (C * q), y0, copt); };
    auto second = [&](double step) {
        const double w[3] = {1.0, -2.0, 1.0};
        double acc = 0.0;
        for (int b = -1; b <= 1; ++b) {
            const Point y = y_at(b * step);
            for (int a = -1; a <= 1; ++a) {
                const Point x = cx.point(a * step * p);
                acc += w[a + 1] * w[b + 1] *
                       cost_eval_raw(exact, x.chart, x.coords.data(), y.coords.data(), x.ambient_dim());
            }
        }
        return acc / std::pow(step, 4);
    };
    const double f1 = second(h), f2 = second(0.5 * h), f4 = second(0.25 * h);
    const double r1 = (4.0 * f2 - f1) / 3.0, r2 = (4.0 * f4 - f2) / 3.0;
    return (16.0 * r2 - r1) / 15.0;
}

}  // namespace mk
