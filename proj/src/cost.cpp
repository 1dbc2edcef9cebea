#include "mk/cost.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "mk/errors.hpp"

namespace mk {

std::string to_string(CostKind kind) {
    switch (kind) {
        case CostKind::bilinear: return "bilinear";
        case CostKind::quadratic: return "quadratic";
        case CostKind::log_distance: return "log_distance";
        case CostKind::power_distance: return "power_distance";
        case CostKind::sphere_sq: return "sphere_sq";
        case CostKind::hyperbolic_sq: return "hyperbolic_sq";
    }
    return "quadratic";
}

namespace {

CostKind parse_kind(const std::string& s) {
    if (s == "bilinear") return CostKind::bilinear;
    if (s == "quadratic") return CostKind::quadratic;
    if (s == "log_distance") return CostKind::log_distance;
    if (s == "power_distance") return CostKind::power_distance;
    if (s == "sphere_sq") return CostKind::sphere_sq;
    if (s == "hyperbolic_sq") return CostKind::hyperbolic_sq;
    throw ValidationError("unknown cost kind '" + s + "'");
}

double parse_number(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ValidationError("bad number '" + s + "' in cost spec");
    }
    if (used != s.size()) throw ValidationError("bad number '" + s + "' in cost spec");
    return v;
}

}  // namespace

CostFunction CostFunction::parse(const std::string& spec) {
    CostFunction c;
    std::string body = spec, mode;
    if (auto at = spec.find('@'); at != std::string::npos) {
        body = spec.substr(0, at);
        mode = spec.substr(at + 1);
    }
    std::string kind = body, param;
    if (auto colon = body.find(':'); colon != std::string::npos) {
        kind = body.substr(0, colon);
        param = body.substr(colon + 1);
    }
    c.kind = parse_kind(kind);
    if (c.kind == CostKind::power_distance) {
        if (param.empty()) throw ValidationError("power_distance needs an exponent, e.g. power_distance:1.5");
        c.power = parse_number(param);
        if (!(c.power > 0.0)) throw ValidationError("power_distance exponent must be positive");
    } else if (!param.empty()) {
        throw ValidationError("cost '" + kind + "' takes no parameter");
    }
    if (!mode.empty()) {
        std::string m = mode, step;
        if (auto colon = mode.find(':'); colon != std::string::npos) {
            m = mode.substr(0, colon);
            step = mode.substr(colon + 1);
        }
        if (m == "fd") {
            c.mode = DerivativeMode::finite_difference(step.empty() ? 0.0 : parse_number(step));
            if (c.mode.step < 0.0) throw ValidationError("finite-difference step must be positive");
        } else if (m == "analytic" && step.empty()) {
            c.mode = DerivativeMode::analytic();
        } else {
            throw ValidationError("unknown derivative mode '" + mode + "'");
        }
    }
    return c;
}

std::string CostFunction::spec() const {
    std::ostringstream os;
    os << to_string(kind);
    if (kind == CostKind::power_distance) os << ':' << power;
    if (mode.kind == DerivativeMode::Kind::finite_difference) {
        os << "@fd";
        if (mode.step > 0.0) os << ':' << mode.step;
    }
    return os.str();
}

bool CostFunction::is_symmetric() const {
    // every catalogue entry is a symmetric function of (x, y)
    return true;
}

bool CostFunction::accepts(Chart chart) const {
    switch (kind) {
        case CostKind::sphere_sq: return chart == Chart::sphere_embedded;
        case CostKind::hyperbolic_sq: return chart == Chart::poincare_disk;
        case CostKind::power_distance: return true;
        default: return chart == Chart::euclidean;
    }
}

void check_admissible(const CostFunction& c, Chart chart, const double* x, const double* y, int m) {
    if (!c.accepts(chart)) throw DomainError("cost " + to_string(c.kind) + " is not defined on chart " + to_string(chart));
    if (chart == Chart::poincare_disk) {
        double nx = 0.0, ny = 0.0;
        for (int a = 0; a < m; ++a) {
            nx += x[a] * x[a];
            ny += y[a] * y[a];
        }
        if (nx >= 1.0 || ny >= 1.0) throw DomainError("point outside the Poincare disk");
    }
    if (c.kind == CostKind::log_distance) {
        double d2 = 0.0;
        for (int a = 0; a < m; ++a) d2 += (x[a] - y[a]) * (x[a] - y[a]);
        if (std::sqrt(d2) <= c.exclusion_radius) throw DomainError("log_distance evaluated inside the exclusion radius");
    }
    if (chart == Chart::sphere_embedded) {
        double s = 0.0, nx = 0.0, ny = 0.0;
        for (int a = 0; a < m; ++a) {
            s += x[a] * y[a];
            nx += x[a] * x[a];
            ny += y[a] * y[a];
        }
        s /= std::sqrt(nx * ny);
        double d = std::acos(std::clamp(s, -1.0, 1.0));
        if (d >= std::numbers::pi - c.cut_margin) throw DomainError("points within the cut-locus margin");
    }
}

double cost_eval(const CostFunction& c, const Point& x, const Point& y) {
    validate_point(x);
    validate_point(y);
    if (x.chart != y.chart || x.ambient_dim() != y.ambient_dim()) throw DomainError("points live on different charts");
    check_admissible(c, x.chart, x.coords.data(), y.coords.data(), x.ambient_dim());
    return cost_kernel<double>(c, x.chart, x.coords.data(), y.coords.data(), x.ambient_dim());
}

namespace {

constexpr int kMaxAmbient = 4;

void check_derivable(const CostFunction& c, const LocalChart& cx, const LocalChart& cy) {
    if (!c.differentiable()) throw DomainError("power_distance with p < 1 has no derivatives");
    if (cx.dim() != cy.dim() || cx.ambient_dim() != cy.ambient_dim() || cx.chart != cy.chart)
        throw DomainError("charts of x and y are incompatible");
    if (cx.ambient_dim() > kMaxAmbient) throw DomainError("dimension too large");
    std::array<double, kMaxAmbient> X{}, Y{}, zero{};
    cx.embed(zero.data(), X.data());
    cy.embed(zero.data(), Y.data());
    check_admissible(c, cx.chart, X.data(), Y.data(), cx.ambient_dim());
    if (c.kind == CostKind::power_distance) {
        double half = 0.5 * c.power;
        bool even = std::fabs(half - std::round(half)) < 1e-15;
        if (!even && chart_sq_distance(cx.chart, X.data(), Y.data(), cx.ambient_dim()) < 1e-20)
            throw DomainError("power_distance is not differentiable at coincident points");
    }
}

template <int K>
double ad_derivative(const CostFunction& c, const LocalChart& cx, const LocalChart& cy, std::span<const Direction> dirs) {
    using T = nested_dual_t<K>;
    const int n = cx.dim(), m = cx.ambient_dim();
    std::array<T, kMaxAmbient> xi{}, eta{}, X{}, Y{};
    double coef[K];
    for (int i = 0; i < n; ++i) {
        for (int l = 0; l < K; ++l) coef[l] = dirs[l].side == Side::x ? dirs[l].v[i] : 0.0;
        xi[i] = seed<T>(0.0, coef);
        for (int l = 0; l < K; ++l) coef[l] = dirs[l].side == Side::y ? dirs[l].v[i] : 0.0;
        eta[i] = seed<T>(0.0, coef);
    }
    cx.embed(xi.data(), X.data());
    cy.embed(eta.data(), Y.data());
    return mixed_part(cost_kernel<T>(c, cx.chart, X.data(), Y.data(), m));
}

double fd_point(const CostFunction& c, const LocalChart& cx, const LocalChart& cy, std::span<const Direction> dirs,
                const double* offsets) {
    const int n = cx.dim(), m = cx.ambient_dim();
    std::array<double, kMaxAmbient> xi{}, eta{}, X{}, Y{};
    for (std::size_t l = 0; l < dirs.size(); ++l) {
        double* tgt = dirs[l].side == Side::x ? xi.data() : eta.data();
        for (int i = 0; i < n; ++i) tgt[i] += offsets[l] * dirs[l].v[i];
    }
    cx.embed(xi.data(), X.data());
    cy.embed(eta.data(), Y.data());
    if (cx.chart == Chart::poincare_disk) {
        double nx = 0.0, ny = 0.0;
        for (int a = 0; a < m; ++a) {
            nx += X[a] * X[a];
            ny += Y[a] * Y[a];
        }
        if (nx >= 1.0 || ny >= 1.0) throw StencilError("finite-difference stencil leaves the Poincare disk");
    }
    check_admissible(c, cx.chart, X.data(), Y.data(), m);
    return cost_kernel<double>(c, cx.chart, X.data(), Y.data(), m);
}

struct Stencil1d {
    std::vector<int> offsets;
    std::vector<double> weights;
};

// Central stencils for the k-th derivative, second-order accurate.
const Stencil1d& stencil(int k) {
    static const Stencil1d table[5] = {
        {{0}, {1.0}},
        {{-1, 1}, {-0.5, 0.5}},
        {{-1, 0, 1}, {1.0, -2.0, 1.0}},
        {{-2, -1, 1, 2}, {-0.5, 1.0, -1.0, 0.5}},
        {{-2, -1, 0, 1, 2}, {1.0, -4.0, 6.0, -4.0, 1.0}},
    };
    return table[k];
}

// Tensor product of per-direction stencils; repeated directions share one
// higher-order stencil.
double fd_derivative(const CostFunction& c, const LocalChart& cx, const LocalChart& cy, std::span<const Direction> dirs,
                     double h) {
    std::vector<Direction> distinct;
    std::vector<int> mult;
    for (const auto& d : dirs) {
        bool merged = false;
        for (std::size_t u = 0; u < distinct.size(); ++u) {
            if (distinct[u].side == d.side && distinct[u].v == d.v) {
                ++mult[u];
                merged = true;
                break;
            }
        }
        if (!merged) {
            distinct.push_back(d);
            mult.push_back(1);
        }
    }
    const std::size_t D = distinct.size();
    std::vector<std::size_t> pos(D, 0);
    double offsets[4];
    double acc = 0.0;
    for (;;) {
        double w = 1.0;
        for (std::size_t u = 0; u < D; ++u) {
            const auto& st = stencil(mult[u]);
            offsets[u] = st.offsets[pos[u]] * h;
            w *= st.weights[pos[u]];
        }
        acc += w * fd_point(c, cx, cy, std::span<const Direction>(distinct), offsets);
        std::size_t u = 0;
        while (u < D && ++pos[u] == stencil(mult[u]).offsets.size()) pos[u++] = 0;
        if (u == D) break;
    }
    return acc / std::pow(h, static_cast<double>(dirs.size()));
}

}  // namespace

double directional_derivative(const CostFunction& c, const LocalChart& cx, const LocalChart& cy,
                              std::span<const Direction> dirs) {
    check_derivable(c, cx, cy);
    const int K = static_cast<int>(dirs.size());
    if (K < 1 || K > 4) throw DomainError("derivative order must be between 1 and 4");
    for (const auto& d : dirs)
        if (d.v.size() != cx.dim()) throw DomainError("direction has wrong dimension");
    if (c.mode.kind == DerivativeMode::Kind::analytic) {
        switch (K) {
            case 1: return ad_derivative<1>(c, cx, cy, dirs);
            case 2: return ad_derivative<2>(c, cx, cy, dirs);
            case 3: return ad_derivative<3>(c, cx, cy, dirs);
            default: return ad_derivative<4>(c, cx, cy, dirs);
        }
    }
    const bool high = K >= 3;
    const double h = c.mode.step > 0.0 ? c.mode.step : (high ? 1e-2 : 1e-3);
    if (!high) return fd_derivative(c, cx, cy, dirs, h);
    const double coarse = fd_derivative(c, cx, cy, dirs, h);
    const double fine = fd_derivative(c, cx, cy, dirs, 0.5 * h);
    return (4.0 * fine - coarse) / 3.0;
}

double& Tensor::at(std::initializer_list<int> idx) {
    std::size_t k = 0, a = 0;
    for (int i : idx) k = k * shape[a++] + i;
    return data[k];
}

double Tensor::at(std::initializer_list<int> idx) const { return const_cast<Tensor*>(this)->at(idx); }

Eigen::VectorXd Tensor::vector() const {
    return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

Eigen::MatrixXd Tensor::matrix() const {
    Eigen::MatrixXd M(shape[0], shape[1]);
    for (int i = 0; i < shape[0]; ++i)
        for (int j = 0; j < shape[1]; ++j) M(i, j) = data[i * shape[1] + j];
    return M;
}

Tensor cost_derivatives(const CostFunction& c, const LocalChart& cx, const LocalChart& cy, DerivativeOrder order) {
    const int n = cx.dim();
    auto e = [n](int i) { return Eigen::VectorXd::Unit(n, i); };
    Tensor t;
    auto eval = [&](std::initializer_list<Direction> d) {
        std::vector<Direction> v(d);
        return directional_derivative(c, cx, cy, v);
    };
    switch (order) {
        case DerivativeOrder::Dx:
        case DerivativeOrder::Dy: {
            Side s = order == DerivativeOrder::Dx ? Side::x : Side::y;
            t.shape = {n};
            for (int i = 0; i < n; ++i) t.data.push_back(eval({{s, e(i)}}));
            break;
        }
        case DerivativeOrder::Dxy:
            t.shape = {n, n};
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) t.data.push_back(eval({{Side::x, e(i)}, {Side::y, e(j)}}));
            break;
        case DerivativeOrder::Dxx:
        case DerivativeOrder::Dyy: {
            Side s = order == DerivativeOrder::Dxx ? Side::x : Side::y;
            t.shape = {n, n};
            t.data.assign(n * n, 0.0);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) t.at({i, j}) = t.at({j, i}) = eval({{s, e(i)}, {s, e(j)}});
            break;
        }
        case DerivativeOrder::Cxxyy:
            t.shape = {n, n, n, n};
            t.data.assign(n * n * n * n, 0.0);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j)
                    for (int k = 0; k < n; ++k)
                        for (int l = k; l < n; ++l) {
                            double v = eval({{Side::x, e(i)}, {Side::x, e(j)}, {Side::y, e(k)}, {Side::y, e(l)}});
                            t.at({i, j, k, l}) = t.at({j, i, k, l}) = t.at({i, j, l, k}) = t.at({j, i, l, k}) = v;
                        }
            break;
        case DerivativeOrder::Cxxy:
            t.shape = {n, n, n};
            t.data.assign(n * n * n, 0.0);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j)
                    for (int r = 0; r < n; ++r)
                        t.at({i, j, r}) = t.at({j, i, r}) = eval({{Side::x, e(i)}, {Side::x, e(j)}, {Side::y, e(r)}});
            break;
        case DerivativeOrder::Cxyy:
            t.shape = {n, n, n};
            t.data.assign(n * n * n, 0.0);
            for (int m = 0; m < n; ++m)
                for (int k = 0; k < n; ++k)
                    for (int l = k; l < n; ++l)
                        t.at({m, k, l}) = t.at({m, l, k}) = eval({{Side::x, e(m)}, {Side::y, e(k)}, {Side::y, e(l)}});
            break;
    }
    return t;
}

Tensor cost_derivatives(const CostFunction& c, const Point& x, const Point& y, DerivativeOrder order) {
    validate_point(x);
    validate_point(y);
    return cost_derivatives(c, chart_at(x), chart_at(y), order);
}

Eigen::VectorXd grad_x(const CostFunction& c, const LocalChart& cx, const LocalChart& cy) {
    return cost_derivatives(c, cx, cy, DerivativeOrder::Dx).vector();
}

Eigen::MatrixXd mixed_hessian(const CostFunction& c, const LocalChart& cx, const LocalChart& cy) {
    return cost_derivatives(c, cx, cy, DerivativeOrder::Dxy).matrix();
}

Eigen::MatrixXd hessian_xx(const CostFunction& c, const LocalChart& cx, const LocalChart& cy) {
    return cost_derivatives(c, cx, cy, DerivativeOrder::Dxx).matrix();
}

}  // namespace mk
