#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#ifndef lapack_complex_float
#define lapack_complex_float std::complex<float>
#endif
#ifndef lapack_complex_double
#define lapack_complex_double std::complex<double>
#endif
#include <lapacke.h>

#include "bioconv/errors.hpp"

namespace bioconv {

using cplx = std::complex<double>;
using RVec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;

// ---------------------------------------------------------------------------
// Exponential integrals

namespace detail {

inline double expint1_series(double x) {
    constexpr double euler = 0.57721566490153286061;
    double sum = 0.0;
    double term = 1.0;
    for (int k = 1; k < 200; ++k) {
        term *= -x / k;
        double add = term / k;
        sum += add;
        if (std::abs(add) < 1e-17 * std::abs(sum)) break;
    }
    return -euler - std::log(x) - sum;
}

// Modified Lentz continued fraction, valid for any n when x >= 1.
inline double expint_cf(int n, double x) {
    constexpr double tiny = 1e-300;
    double b = x + n;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        double a = -static_cast<double>(i) * (n - 1 + i);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        double del = c * d;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) return h * std::exp(-x);
    }
    throw ConvergenceError("expint continued fraction did not converge", 10000, 0.0);
}

}  // namespace detail

// E_n(x) = int_1^inf exp(-x t) / t^n dt
inline double expint(int n, double x) {
    if (n < 1) throw std::domain_error("expint: order must be >= 1");
    if (!(x >= 0.0)) throw std::domain_error("expint: argument must be >= 0");
    if (x == 0.0) {
        if (n == 1) throw std::domain_error("expint: E1 diverges at 0");
        return 1.0 / (n - 1);
    }
    if (x >= 1.0) return detail::expint_cf(n, x);
    double e = detail::expint1_series(x);
    double ex = std::exp(-x);
    for (int k = 1; k < n; ++k) e = (ex - x * e) / k;
    return e;
}

// Fills out[k] = E_{k+1}(x) for k < nmax with one E1 evaluation. x = 0 leaves out[0] = +inf.
template <std::size_t N>
inline std::array<double, N> expint_table(double x) {
    static_assert(N >= 1);
    std::array<double, N> out{};
    if (!(x >= 0.0)) throw std::domain_error("expint: argument must be >= 0");
    if (x == 0.0) {
        out[0] = std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k < N; ++k) out[k] = 1.0 / k;
        return out;
    }
    if (x >= 1.0) {
        for (std::size_t k = 0; k < N; ++k) out[k] = detail::expint_cf(static_cast<int>(k) + 1, x);
        return out;
    }
    double ex = std::exp(-x);
    out[0] = detail::expint1_series(x);
    for (std::size_t k = 1; k < N; ++k) out[k] = (ex - x * out[k - 1]) / k;
    return out;
}

// ---------------------------------------------------------------------------
// Grids and quadrature

struct Grid1D {
    std::vector<double> points;

    Grid1D() = default;
    explicit Grid1D(std::vector<double> pts) : points(std::move(pts)) {
        if (points.size() < 2) throw std::invalid_argument("Grid1D: need at least two points");
        for (std::size_t i = 1; i < points.size(); ++i)
            if (!(points[i] > points[i - 1])) throw std::invalid_argument("Grid1D: points must be strictly increasing");
    }

    static Grid1D uniform(double a, double b, int n) {
        if (n < 2) throw std::invalid_argument("Grid1D: need at least two points");
        if (!(b > a)) throw std::invalid_argument("Grid1D: empty interval");
        std::vector<double> p(n);
        for (int i = 0; i < n; ++i) p[i] = a + (b - a) * i / (n - 1);
        p.front() = a;
        p.back() = b;
        return Grid1D(std::move(p));
    }

    std::size_t size() const { return points.size(); }
    double front() const { return points.front(); }
    double back() const { return points.back(); }
    double operator[](std::size_t i) const { return points[i]; }
};

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    double a = -1.0;
    double b = 1.0;

    template <class F>
    auto integrate(F&& f) const {
        using R = decltype(f(0.0));
        R s{};
        for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
        return s;
    }
};

inline QuadratureRule gauss_nodes(int order, double a, double b) {
    if (order < 1) throw std::invalid_argument("gauss_nodes: order must be >= 1");
    if (!(a < b)) throw std::invalid_argument("gauss_nodes: invalid interval, need a < b");
    QuadratureRule r;
    r.a = a;
    r.b = b;
    r.nodes.assign(order, 0.0);
    r.weights.assign(order, 0.0);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    const int m = (order + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 1; j <= order; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / j;
            }
            dp = order * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 1; j <= order; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / j;
            }
            dp = order * (x * p0 - p1) / (x * x - 1.0);
        }
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[i] = mid - half * x;
        r.nodes[order - 1 - i] = mid + half * x;
        r.weights[i] = r.weights[order - 1 - i] = half * w;
    }
    if (order % 2 == 1) r.nodes[order / 2] = mid;
    return r;
}

// ---------------------------------------------------------------------------
// Scalar root finding and minimization

struct RootResult {
    double x = 0.0;
    double fx = 0.0;
    int evaluations = 0;
};

// Brent's zeroin. Terminates when the bracket is narrower than tol.
inline RootResult brent_root_ex(const std::function<double(double)>& f, double a, double b, double tol,
                                int max_iter = 200) {
    if (!(tol > 0.0)) throw std::invalid_argument("brent_root: tol must be positive");
    double fa = f(a), fb = f(b);
    int evals = 2;
    if (fa == 0.0) return {a, fa, evals};
    if (fb == 0.0) return {b, fb, evals};
    if (!std::isfinite(fa) || !std::isfinite(fb) || (fa > 0) == (fb > 0))
        throw BracketError("brent_root: no sign change in bracket", a, b, fa, fb);
    double c = a, fc = fa, d = b - a, e = d;
    for (int it = 0; it < max_iter; ++it) {
        if ((fb > 0) == (fc > 0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * tol;
        double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) return {b, fb, evals};
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double s = fb / fa, p, q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                double qq = fa / fc, r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::abs(d) > tol1) ? d : (xm > 0 ? tol1 : -tol1);
        fb = f(b);
        ++evals;
    }
    throw ConvergenceError("brent_root: iteration cap reached", max_iter, std::abs(fb));
}

inline double brent_root(const std::function<double(double)>& f, double a, double b, double tol) {
    return brent_root_ex(f, a, b, tol).x;
}

struct MinResult {
    double x = 0.0;
    double fx = 0.0;
    int evaluations = 0;
};

// Brent's golden-section search with parabolic steps.
inline MinResult brent_minimize(const std::function<double(double)>& f, double a, double b, double tol,
                                int max_iter = 100) {
    if (!(a < b)) throw std::invalid_argument("brent_minimize: need a < b");
    const double cgold = 0.3819660112501051;
    double x = a + cgold * (b - a), w = x, v = x;
    double fx = f(x), fw = fx, fv = fx;
    int evals = 1;
    double d = 0.0, e = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        double xm = 0.5 * (a + b);
        double tol1 = tol + 1e-12 * std::abs(x), tol2 = 2.0 * tol1;
        if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;
        bool golden = true;
        if (std::abs(e) > tol1) {
            double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0) p = -p;
            q = std::abs(q);
            double etemp = e;
            e = d;
            if (!(std::abs(p) >= std::abs(0.5 * q * etemp) || p <= q * (a - x) || p >= q * (b - x))) {
                d = p / q;
                double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = (xm > x) ? tol1 : -tol1;
                golden = false;
            }
        }
        if (golden) {
            e = (x >= xm) ? a - x : b - x;
            d = cgold * e;
        }
        double u = (std::abs(d) >= tol1) ? x + d : x + (d > 0 ? tol1 : -tol1);
        double fu = f(u);
        ++evals;
        if (fu <= fx) {
            if (u >= x) a = x; else b = x;
            v = w; fv = fw;
            w = x; fw = fx;
            x = u; fx = fu;
        } else {
            if (u < x) a = u; else b = u;
            if (fu <= fw || w == x) {
                v = w; fv = fw;
                w = u; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u; fv = fu;
            }
        }
    }
    return {x, fx, evals};
}

// ---------------------------------------------------------------------------
// Finite differences

// Fornberg weights: row d holds weights for the d-th derivative at x0.
inline RMat fornberg_weights(double x0, const std::vector<double>& x, int m) {
    const int n = static_cast<int>(x.size());
    RMat c = RMat::Zero(m + 1, n);
    double c1 = 1.0, c4 = x[0] - x0;
    c(0, 0) = 1.0;
    for (int i = 1; i < n; ++i) {
        int mn = std::min(i, m);
        double c2 = 1.0, c5 = c4;
        c4 = x[i] - x0;
        for (int j = 0; j < i; ++j) {
            double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k) c(k, i) = c1 * (k * c(k - 1, i - 1) - c5 * c(k, i - 1)) / c2;
                c(0, i) = -c1 * c5 * c(0, i - 1) / c2;
            }
            for (int k = mn; k >= 1; --k) c(k, j) = (c4 * c(k, j) - k * c(k - 1, j)) / c3;
            c(0, j) = c4 * c(0, j) / c3;
        }
        c1 = c2;
    }
    return c;
}

// Dense differentiation matrix of the given order, fourth-order accurate by default.
// Interior rows use centered stencils, rows near the ends fall back to one-sided ones.
inline RMat diff_matrix(const Grid1D& g, int order, int accuracy = 4) {
    const int n = static_cast<int>(g.size());
    int width = 2 * ((order + 1) / 2) - 1 + accuracy;
    int wide = order + accuracy;
    if (wide > n || width > n) throw std::invalid_argument("diff_matrix: grid too small for stencil");
    RMat D = RMat::Zero(n, n);
    int half = width / 2;
    for (int i = 0; i < n; ++i) {
        int start, len;
        if (i - half >= 0 && i + half < n) {
            start = i - half;
            len = width;
        } else {
            len = wide;
            start = (i - half < 0) ? 0 : n - len;
        }
        std::vector<double> xs(g.points.begin() + start, g.points.begin() + start + len);
        RMat w = fornberg_weights(g[i], xs, order);
        for (int j = 0; j < len; ++j) D(i, start + j) = w(order, j);
    }
    return D;
}

// First derivative of sampled data with the same stencils as diff_matrix, without forming the matrix.
template <class Vec>
inline Vec fd_derivative(const Grid1D& g, const Vec& f) {
    const int n = static_cast<int>(g.size());
    if (n < 5) throw std::invalid_argument("fd_derivative: grid too small for stencil");
    Vec d(n);
    for (int i = 0; i < n; ++i) {
        int start = std::clamp(i - 2, 0, n - 5);
        std::vector<double> xs(g.points.begin() + start, g.points.begin() + start + 5);
        RMat w = fornberg_weights(g[i], xs, 1);
        typename Vec::Scalar s{};
        for (int j = 0; j < 5; ++j) s += w(1, j) * f(start + j);
        d(i) = s;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Interpolation and cumulative integration

// Piecewise cubic Hermite interpolant with slopes from fourth-order finite differences.
class CubicInterpolant {
public:
    CubicInterpolant() = default;
    CubicInterpolant(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        if (x_.size() != y_.size() || x_.size() < 5) throw std::invalid_argument("CubicInterpolant: need >= 5 matching samples");
        Eigen::Map<const RVec> yv(y_.data(), y_.size());
        RVec s = fd_derivative(Grid1D(x_), RVec(yv));
        s_.assign(s.data(), s.data() + s.size());
    }

    double operator()(double t) const {
        std::size_t n = x_.size();
        if (t <= x_.front()) return y_.front();
        if (t >= x_.back()) return y_.back();
        std::size_t j = std::upper_bound(x_.begin(), x_.end(), t) - x_.begin() - 1;
        if (j >= n - 1) j = n - 2;
        double h = x_[j + 1] - x_[j];
        double u = (t - x_[j]) / h;
        double u2 = u * u, u3 = u2 * u;
        double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u, h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
        return h00 * y_[j] + h10 * h * s_[j] + h01 * y_[j + 1] + h11 * h * s_[j + 1];
    }

    const std::vector<double>& x() const { return x_; }
    const std::vector<double>& y() const { return y_; }

private:
    std::vector<double> x_, y_, s_;
};

// Running integral F(z_i) = int_{z_ref}^{z_i} f, fourth-order via Hermite cubics. ref selects z_0 or z_{N-1}.
template <class Vec>
inline Vec cumulative_integral(const Grid1D& g, const Vec& f, bool from_end) {
    const int n = static_cast<int>(g.size());
    Vec df = fd_derivative(g, f);
    Vec F(n);
    F.setZero();
    if (!from_end) {
        for (int i = 1; i < n; ++i) {
            double h = g[i] - g[i - 1];
            F(i) = F(i - 1) + 0.5 * h * (f(i - 1) + f(i)) + h * h / 12.0 * (df(i - 1) - df(i));
        }
    } else {
        for (int i = n - 2; i >= 0; --i) {
            double h = g[i + 1] - g[i];
            F(i) = F(i + 1) - (0.5 * h * (f(i) + f(i + 1)) + h * h / 12.0 * (df(i) - df(i + 1)));
        }
    }
    return F;
}

// Composite Boole/Simpson-type integral over a uniform-ish grid via the same Hermite rule.
template <class Vec>
inline auto integrate_grid(const Grid1D& g, const Vec& f) {
    Vec F = cumulative_integral(g, f, false);
    return F(F.size() - 1);
}

// ---------------------------------------------------------------------------
// Eigenvalues

struct EigenPair {
    cplx value;
    CVec vector;
};

// Index of the eigenvalue with largest real part; near-ties go to the one with Im >= 0.
inline int select_leading(const std::vector<cplx>& vals) {
    int best = -1;
    for (int i = 0; i < static_cast<int>(vals.size()); ++i) {
        const cplx& v = vals[i];
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) continue;
        if (best < 0) {
            best = i;
            continue;
        }
        const cplx& b = vals[best];
        double tie = 1e-9 * std::max(1.0, std::max(std::abs(v), std::abs(b)));
        if (v.real() > b.real() + tie) best = i;
        else if (std::abs(v.real() - b.real()) <= tie && v.imag() >= 0.0 && b.imag() < 0.0) best = i;
    }
    return best;
}

// All eigenvalues of a square complex matrix (LAPACK zgeev, no vectors).
inline std::vector<cplx> eigenvalues(CMat C) {
    const lapack_int n = static_cast<lapack_int>(C.rows());
    if (C.cols() != C.rows()) throw std::invalid_argument("eigenvalues: matrix must be square");
    std::vector<cplx> w(n);
    if (n == 0) return w;
    lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'N', n, C.data(), n, w.data(), nullptr, 1, nullptr, 1);
    if (info > 0) throw ConvergenceError("eigenvalues: QR iteration failed to converge", static_cast<int>(info), 0.0);
    if (info < 0) throw std::invalid_argument("eigenvalues: illegal LAPACK argument");
    return w;
}

// Finite generalized eigenvalues of A x = g B x (LAPACK zggev).
inline std::vector<cplx> generalized_eigenvalues(CMat A, CMat B) {
    const lapack_int n = static_cast<lapack_int>(A.rows());
    std::vector<cplx> alpha(n), beta(n);
    lapack_int info = LAPACKE_zggev(LAPACK_COL_MAJOR, 'N', 'N', n, A.data(), n, B.data(), n, alpha.data(), beta.data(),
                                    nullptr, 1, nullptr, 1);
    if (info > 0) throw ConvergenceError("generalized_eigenvalues: QZ iteration failed to converge", static_cast<int>(info), 0.0);
    if (info < 0) throw std::invalid_argument("generalized_eigenvalues: illegal LAPACK argument");
    double scale = std::max(A.cwiseAbs().maxCoeff(), B.cwiseAbs().maxCoeff());
    double eps = 1e3 * std::numeric_limits<double>::epsilon() * std::max(scale, 1e-300);
    std::vector<cplx> out;
    bool all_degenerate = n > 0;
    for (lapack_int i = 0; i < n; ++i) {
        if (std::abs(alpha[i]) > eps || std::abs(beta[i]) > eps) all_degenerate = false;
        if (std::abs(beta[i]) > 1e-12 * std::abs(alpha[i]) && std::abs(beta[i]) > eps) out.push_back(alpha[i] / beta[i]);
    }
    if (all_degenerate) throw SingularPencilError("generalized_eigenvalues: singular pencil (det(A - gB) vanishes identically)");
    return out;
}

namespace detail {

// Eigenvector for a known eigenvalue by inverse iteration on (A - sB).
inline CVec inverse_iteration(const CMat& A, const CMat& B, cplx value) {
    const Eigen::Index n = A.rows();
    cplx shift = value + cplx(1e-10, 1e-10) * std::max(1.0, std::abs(value));
    Eigen::PartialPivLU<CMat> lu(A - shift * B);
    CVec x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = cplx(1.0 + 0.01 * std::sin(1.0 + i), 0.3 * std::cos(2.0 + i));
    for (int it = 0; it < 4; ++it) {
        x = lu.solve(B * x);
        double m = x.cwiseAbs().maxCoeff();
        if (!(m > 0.0) || !std::isfinite(m)) throw ConvergenceError("inverse iteration broke down", it, 0.0);
        x /= m;
    }
    return x;
}

}  // namespace detail

// Rescale so the largest-modulus entry equals exactly 1.
inline void normalize_max_modulus(CVec& x) {
    Eigen::Index imax = 0;
    x.cwiseAbs().maxCoeff(&imax);
    cplx p = x(imax);
    if (std::abs(p) == 0.0) return;
    x /= p;
    x(imax) = 1.0;
}

inline EigenPair leading_eigenpair(const CMat& A, const CMat& B) {
    if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows())
        throw std::invalid_argument("leading_eigenpair: A and B must be square with equal dimension");
    if (A.rows() == 0) throw std::invalid_argument("leading_eigenpair: empty matrices");
    std::vector<cplx> vals;
    Eigen::PartialPivLU<CMat> lu(B);
    double bn = B.cwiseAbs().maxCoeff();
    double rc = bn > 0.0 ? lu.rcond() : 0.0;
    bool regular_b = std::isfinite(rc) && rc > 1e-12;
    CMat C;
    if (regular_b) {
        C = lu.solve(A);
        regular_b = C.allFinite();
    }
    if (regular_b) vals = eigenvalues(std::move(C));
    else vals = generalized_eigenvalues(A, B);
    int i = select_leading(vals);
    if (i < 0) throw SingularPencilError("leading_eigenpair: no finite eigenvalue");
    EigenPair ep;
    ep.value = vals[i];
    ep.vector = detail::inverse_iteration(A, B, ep.value);
    normalize_max_modulus(ep.vector);
    return ep;
}

}  // namespace bioconv
