#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bioconv/numerics.hpp"

namespace bioconv {

struct RadiationParams {
    double omega = 0.4;
    double A1 = 0.0;
    double B = 0.26;
    double tauH = 0.5;
    double cos_theta0 = 1.0;

    void validate() const {
        if (!(omega >= 0.0 && omega <= 1.0)) throw std::invalid_argument("RadiationParams: omega must lie in [0, 1]");
        if (!(A1 > -1.0 && A1 <= 1.0)) throw std::invalid_argument("RadiationParams: A1 must lie in (-1, 1]");
        if (!(B >= 0.0) || !std::isfinite(B)) throw std::invalid_argument("RadiationParams: B must be >= 0");
        if (!(tauH > 0.0) || !std::isfinite(tauH)) throw std::invalid_argument("RadiationParams: tauH must be > 0");
        if (!(cos_theta0 > 0.0 && cos_theta0 <= 1.0)) throw std::invalid_argument("RadiationParams: cos_theta0 must lie in (0, 1]");
    }
};

struct BasicRadiation {
    RadiationParams params;
    Grid1D tau_grid;
    std::vector<double> G, q, G_coll, q_coll;
    // cell averages of the discrete solution, the actual unknowns
    std::vector<double> G_cell, q_cell;
    int iterations = 0;
    double residual = 0.0;
};

// Piecewise-constant Galerkin discretization of the coupled (G, q) integral equations.
// Kernel cell-pair integrals are exact, so the log singularity of E1 needs no special quadrature.
class RadiationSystem {
public:
    RadiationSystem(const RadiationParams& p, int n_tau, bool omit_anisotropy = false)
        : p_(p), nn_(n_tau), nc_(n_tau - 1), omit_(omit_anisotropy) {
        p_.validate();
        if (n_tau < 33) throw std::invalid_argument("solve_basic_radiation: n_tau must be >= 33");
        h_ = p_.tauH / nc_;
        tau_ = Grid1D::uniform(0.0, p_.tauH, nn_);
        // Precompute E_2..E_5 at multiples of h.
        std::vector<std::array<double, 5>> e(nc_ + 2);
        for (int m = 0; m <= nc_ + 1; ++m) e[m] = expint_table<5>(m * h_);
        for (int n = 1; n <= 3; ++n) {
            auto& d = D_[n - 1];
            d.assign(nc_, 0.0);
            d[0] = 2.0 * (h_ / n - 1.0 / (n + 1) + e[1][n + 1]);
            for (int m = 1; m < nc_; ++m) d[m] = e[m + 1][n + 1] - 2.0 * e[m][n + 1] + e[m - 1][n + 1];
        }
        const double mu = p_.cos_theta0;
        f_.resize(2 * nc_);
        for (int j = 0; j < nc_; ++j) {
            double a = j * h_, b = (j + 1) * h_;
            double ea = std::exp(-a / mu) - std::exp(-b / mu);
            f_[j] = (2.0 * p_.B * (e[j][2] - e[j + 1][2]) + mu * ea) / h_;
            f_[nc_ + j] = (2.0 * p_.B * (e[j][3] - e[j + 1][3]) + mu * mu * ea) / h_;
        }
    }

    int cells() const { return nc_; }
    const Grid1D& nodes() const { return tau_; }
    const std::vector<double>& source() const { return f_; }

    // y = K x with x = [G_cell; q_cell]
    std::vector<double> apply(const std::vector<double>& x) const {
        const double c = 0.5 * p_.omega / h_;
        const double a1 = omit_ ? 0.0 : p_.A1;
        std::vector<double> y(2 * nc_, 0.0);
        const double* G = x.data();
        const double* q = x.data() + nc_;
        const auto& d1 = D_[0];
        const auto& d2 = D_[1];
        const auto& d3 = D_[2];
        for (int i = 0; i < nc_; ++i) {
            double yg = 0.0, yq = 0.0;
            for (int j = 0; j < nc_; ++j) {
                int m = i > j ? i - j : j - i;
                double s2 = (i > j) ? d2[m] : (i < j ? -d2[m] : 0.0);
                yg += d1[m] * G[j];
                yq += s2 * G[j];
                if (!omit_) {
                    yg += a1 * s2 * q[j];
                    yq += a1 * d3[m] * q[j];
                }
            }
            y[i] = c * yg;
            y[nc_ + i] = c * yq;
        }
        return y;
    }

    RMat dense() const {
        const double c = 0.5 * p_.omega / h_;
        const double a1 = omit_ ? 0.0 : p_.A1;
        RMat K(2 * nc_, 2 * nc_);
        for (int i = 0; i < nc_; ++i)
            for (int j = 0; j < nc_; ++j) {
                int m = std::abs(i - j);
                double s2 = (i > j) ? D_[1][m] : (i < j ? -D_[1][m] : 0.0);
                K(i, j) = c * D_[0][m];
                K(i, nc_ + j) = c * a1 * s2;
                K(nc_ + i, j) = c * s2;
                K(nc_ + i, nc_ + j) = c * a1 * D_[2][m];
            }
        return K;
    }

    // Nystrom reconstruction of G and q at tau from cell averages.
    std::pair<double, double> evaluate(double t, const std::vector<double>& x) const {
        const double mu = p_.cos_theta0;
        const double a1 = omit_ ? 0.0 : p_.A1;
        double G = (t == 0.0 ? 2.0 * p_.B : 2.0 * p_.B * expint(2, t)) + std::exp(-t / mu);
        double q = 2.0 * p_.B * expint(3, t) + mu * std::exp(-t / mu);
        double sG = 0.0, sq = 0.0;
        // E_{n+1} at distances from t to every cell edge
        std::vector<std::array<double, 4>> e(nn_);
        for (int k = 0; k < nn_; ++k) e[k] = expint_table<4>(std::abs(tau_[k] - t));
        for (int j = 0; j < nc_; ++j) {
            double lo = tau_[j];
            bool above = lo >= t - 1e-15;
            double s1, s2, s3, sg;
            if (above) {
                s1 = e[j][1] - e[j + 1][1];
                s2 = e[j][2] - e[j + 1][2];
                s3 = e[j][3] - e[j + 1][3];
                sg = -1.0;
            } else {
                s1 = e[j + 1][1] - e[j][1];
                s2 = e[j + 1][2] - e[j][2];
                s3 = e[j + 1][3] - e[j][3];
                sg = 1.0;
            }
            double Gj = x[j], qj = x[nc_ + j];
            sG += s1 * Gj + a1 * sg * s2 * qj;
            sq += a1 * s3 * qj + sg * s2 * Gj;
        }
        return {G + 0.5 * p_.omega * sG, q + 0.5 * p_.omega * sq};
    }

private:
    RadiationParams p_;
    int nn_, nc_;
    bool omit_;
    double h_ = 0.0;
    Grid1D tau_;
    std::array<std::vector<double>, 3> D_;
    std::vector<double> f_;
};

struct RadiationSolveOptions {
    double tol = 1e-10;
    int max_iter = 10000;
    bool direct = false;
    bool omit_anisotropy = false;
};

inline BasicRadiation assemble_radiation(const RadiationSystem& sys, const RadiationParams& p,
                                         std::vector<double> x, int iterations, double residual) {
    BasicRadiation r;
    r.params = p;
    r.tau_grid = sys.nodes();
    const std::size_t n = r.tau_grid.size();
    r.G.resize(n);
    r.q.resize(n);
    r.G_coll.resize(n);
    r.q_coll.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double t = r.tau_grid[i];
        auto [g, q] = sys.evaluate(t, x);
        r.G[i] = g;
        r.q[i] = q;
        r.G_coll[i] = std::exp(-t / p.cos_theta0);
        r.q_coll[i] = p.cos_theta0 * r.G_coll[i];
    }
    const int nc = sys.cells();
    r.G_cell.assign(x.begin(), x.begin() + nc);
    r.q_cell.assign(x.begin() + nc, x.end());
    r.iterations = iterations;
    r.residual = residual;
    return r;
}

inline BasicRadiation solve_basic_radiation(const RadiationParams& p, int n_tau = 401,
                                            const RadiationSolveOptions& opt = {}) {
    RadiationSystem sys(p, n_tau, opt.omit_anisotropy);
    const auto& f = sys.source();
    const std::size_t m = f.size();
    if (opt.direct) {
        RMat A = RMat::Identity(m, m) - sys.dense();
        Eigen::Map<const RVec> fv(f.data(), m);
        RVec xv = A.partialPivLu().solve(fv);
        std::vector<double> x(xv.data(), xv.data() + m);
        auto Kx = sys.apply(x);
        double res = 0.0;
        for (std::size_t i = 0; i < m; ++i) res = std::max(res, std::abs(f[i] + Kx[i] - x[i]));
        return assemble_radiation(sys, p, std::move(x), 0, res);
    }
    std::vector<double> x = f;
    double damping = 1.0;
    double prev = std::numeric_limits<double>::infinity();
    double res = 0.0;
    for (int it = 1; it <= opt.max_iter; ++it) {
        auto Kx = sys.apply(x);
        res = 0.0;
        for (std::size_t i = 0; i < m; ++i) res = std::max(res, std::abs(f[i] + Kx[i] - x[i]));
        if (res < opt.tol) return assemble_radiation(sys, p, std::move(x), it, res);
        if (res > prev) damping = 0.5;
        prev = res;
        for (std::size_t i = 0; i < m; ++i) x[i] += damping * (f[i] + Kx[i] - x[i]);
    }
    throw ConvergenceError("solve_basic_radiation: fixed-point iteration did not converge, residual " + std::to_string(res),
                           opt.max_iter, res);
}

// G on z in [0, 1] for a uniform suspension, tau = tauH (1 - z). Returned in increasing z.
inline std::vector<std::pair<double, double>> uniform_suspension_intensity(const RadiationParams& p, int n_tau = 401) {
    BasicRadiation r = solve_basic_radiation(p, n_tau);
    const std::size_t n = r.tau_grid.size();
    std::vector<std::pair<double, double>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t k = n - 1 - i;
        double z = 1.0 - r.tau_grid[k] / p.tauH;
        if (k == 0) z = 1.0;
        if (k == n - 1) z = 0.0;
        out[i] = {z, r.G[k]};
    }
    return out;
}

}  // namespace bioconv
