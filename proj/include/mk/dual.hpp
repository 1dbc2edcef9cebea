#pragma once

// Nested forward-mode dual numbers. A Dual<Dual<double>> carries two
// independent infinitesimals; the all-eps component of an N-fold nesting is
// the mixed N-th directional derivative.

#include <cmath>
#include <type_traits>

namespace mk {

template <class T>
struct Dual {
    T re{};
    T eps{};

    Dual() = default;
    Dual(double a) : re(a), eps(0.0) {}
    Dual(const T& r, const T& e) requires(!std::is_same_v<T, double>) : re(r), eps(e) {}
    Dual(double r, double e) requires std::is_same_v<T, double> : re(r), eps(e) {}

    Dual& operator+=(const Dual& b) { re += b.re; eps += b.eps; return *this; }
    Dual& operator-=(const Dual& b) { re -= b.re; eps -= b.eps; return *this; }
    Dual& operator*=(const Dual& b) { *this = *this * b; return *this; }
};

template <class T> struct dual_depth : std::integral_constant<int, 0> {};
template <class T> struct dual_depth<Dual<T>> : std::integral_constant<int, 1 + dual_depth<T>::value> {};

template <int K> struct nested_dual { using type = Dual<typename nested_dual<K - 1>::type>; };
template <> struct nested_dual<0> { using type = double; };
template <int K> using nested_dual_t = typename nested_dual<K>::type;

template <class T> Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) { return {a.re + b.re, a.eps + b.eps}; }
template <class T> Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) { return {a.re - b.re, a.eps - b.eps}; }
template <class T> Dual<T> operator-(const Dual<T>& a) { return {-a.re, -a.eps}; }
template <class T> Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
    return {a.re * b.re, a.re * b.eps + a.eps * b.re};
}
template <class T> Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
    T q = a.re / b.re;
    return {q, (a.eps - q * b.eps) / b.re};
}
template <class T> Dual<T> operator+(const Dual<T>& a, double b) { return {a.re + b, a.eps}; }
template <class T> Dual<T> operator+(double b, const Dual<T>& a) { return {a.re + b, a.eps}; }
template <class T> Dual<T> operator-(const Dual<T>& a, double b) { return {a.re - b, a.eps}; }
template <class T> Dual<T> operator-(double b, const Dual<T>& a) { return {b - a.re, -a.eps}; }
template <class T> Dual<T> operator*(const Dual<T>& a, double b) { return {a.re * b, a.eps * b}; }
template <class T> Dual<T> operator*(double b, const Dual<T>& a) { return {a.re * b, a.eps * b}; }
template <class T> Dual<T> operator/(const Dual<T>& a, double b) { return {a.re / b, a.eps / b}; }
template <class T> Dual<T> operator/(double b, const Dual<T>& a) { return Dual<T>(b) / a; }

inline double value(double x) { return x; }
template <class T> double value(const Dual<T>& x) { return value(x.re); }

inline double mixed_part(double x) { return x; }
template <class T> double mixed_part(const Dual<T>& x) { return mixed_part(x.eps); }

/// Builds x = a + sum_l c[l] * eps_l for a variable of nesting depth K.
template <class T>
T seed(double a, const double* c) {
    if constexpr (std::is_same_v<T, double>) {
        return a;
    } else {
        using Inner = decltype(T{}.re);
        constexpr int depth = dual_depth<T>::value;
        return T(seed<Inner>(a, c), Inner(c[depth - 1]));
    }
}

/// Applies a scalar function given by its derivative table f(x, k) = f^(k)(x).
template <class F>
double lift(const F& f, double x, int k) { return f(x, k); }

template <class F, class T>
Dual<T> lift(const F& f, const Dual<T>& x, int k) {
    return {lift(f, x.re, k), lift(f, x.re, k + 1) * x.eps};
}

struct PowTable {
    double p;
    double operator()(double x, int k) const {
        double coef = 1.0;
        for (int i = 0; i < k; ++i) coef *= (p - i);
        if (coef == 0.0) return 0.0;
        return coef * std::pow(x, p - k);
    }
};

struct LogTable {
    double operator()(double x, int k) const {
        if (k == 0) return std::log(x);
        double f = 1.0;
        for (int i = 1; i < k; ++i) f *= i;
        return ((k % 2) ? 1.0 : -1.0) * f / std::pow(x, k);
    }
};

struct ExpTable {
    double operator()(double x, int) const { return std::exp(x); }
};

/// acos(s)^2 and its derivatives, smooth through s = 1.
struct AcosSqTable {
    double operator()(double s, int k) const;
};

/// acosh(1 + d)^2 and its derivatives in d, smooth through d = 0.
struct Acosh1pSqTable {
    double operator()(double d, int k) const;
};

namespace detail {
// Series sum_{n>=1} sgn^(n+1) 2 (2t)^n / (n^2 C(2n,n)), differentiated k times in t.
inline double binom_series(double t, int k, bool alternating) {
    double sum = 0.0;
    double b = 0.5;  // 1 / C(2n,n)
    for (int n = 1; n <= 90; ++n) {
        if (n > 1) b *= double(n) / (2.0 * (2.0 * n - 1.0));
        if (n < k) continue;
        double fall = 1.0;
        for (int i = 0; i < k; ++i) fall *= (n - i);
        double term = 2.0 * b / (double(n) * n) * fall * std::pow(2.0 * t, n - k) * std::pow(2.0, k);
        if (alternating && (n % 2 == 0)) term = -term;
        sum += term;
        if (n > k + 4 && std::fabs(term) <= 1e-18 * std::fabs(sum)) break;
    }
    return sum;
}
}  // namespace detail

inline double AcosSqTable::operator()(double s, int k) const {
    double t = 1.0 - s;
    if (std::fabs(t) < 0.5) {
        double d = detail::binom_series(t, k, false);
        return (k % 2) ? -d : d;
    }
    double om = 1.0 - s * s;
    double th = std::acos(s);
    double y[5];
    y[0] = th * th;
    y[1] = -2.0 * th / std::sqrt(om);
    y[2] = (2.0 + s * y[1]) / om;
    y[3] = (3.0 * s * y[2] + y[1]) / om;
    y[4] = (5.0 * s * y[3] + 4.0 * y[2]) / om;
    return y[k];
}

inline double Acosh1pSqTable::operator()(double d, int k) const {
    if (std::fabs(d) < 0.5) return detail::binom_series(d, k, true);
    double z = 1.0 + d;
    double zm = z * z - 1.0;
    double a = std::acosh(z);
    double y[5];
    y[0] = a * a;
    y[1] = 2.0 * a / std::sqrt(zm);
    y[2] = (2.0 - z * y[1]) / zm;
    y[3] = -(3.0 * z * y[2] + y[1]) / zm;
    y[4] = -(5.0 * z * y[3] + 4.0 * y[2]) / zm;
    return y[k];
}

template <class T> T sqrt_(const T& x) { return lift(PowTable{0.5}, x, 0); }
template <class T> T pow_(const T& x, double p) { return lift(PowTable{p}, x, 0); }
template <class T> T log_(const T& x) { return lift(LogTable{}, x, 0); }
template <class T> T exp_(const T& x) { return lift(ExpTable{}, x, 0); }
template <class T> T acos_sq(const T& s) { return lift(AcosSqTable{}, s, 0); }
template <class T> T acosh1p_sq(const T& d) { return lift(Acosh1pSqTable{}, d, 0); }

inline double sqrt_(double x) { return std::sqrt(x); }
inline double log_(double x) { return std::log(x); }
inline double exp_(double x) { return std::exp(x); }

}  // namespace mk
