#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "bioconv/numerics.hpp"
#include "bioconv/radiative.hpp"

namespace bioconv {

// M(G) = a1 sin(f1 chi) - a2 sin(f2 chi), chi = (G / pivot) exp(Upsilon (pivot - G))
struct PhototaxisCurve {
    double Upsilon = 0.252;
    double amp1 = 0.8, amp2 = 0.1;
    double freq1 = 1.5 * std::numbers::pi, freq2 = 0.5 * std::numbers::pi;
    double pivot = 3.8;

    double chi(double G) const { return G / pivot * std::exp(Upsilon * (pivot - G)); }
    double dchi(double G) const { return std::exp(Upsilon * (pivot - G)) * (1.0 - Upsilon * G) / pivot; }

    static PhototaxisCurve with_upsilon(double ups) {
        PhototaxisCurve c;
        c.Upsilon = ups;
        return c;
    }
    static PhototaxisCurve flat() {
        PhototaxisCurve c;
        c.amp1 = c.amp2 = 0.0;
        return c;
    }

    // First sign change of M on (0, pivot]; NaN if M never changes sign.
    double critical_intensity() const;
};

inline double phototaxis_M(double G, const PhototaxisCurve& c) {
    double x = c.chi(G);
    return c.amp1 * std::sin(c.freq1 * x) - c.amp2 * std::sin(c.freq2 * x);
}

inline double phototaxis_dMdG(double G, const PhototaxisCurve& c) {
    double x = c.chi(G);
    return (c.amp1 * c.freq1 * std::cos(c.freq1 * x) - c.amp2 * c.freq2 * std::cos(c.freq2 * x)) * c.dchi(G);
}

inline double PhototaxisCurve::critical_intensity() const {
    const int n = 400;
    double prev = phototaxis_M(pivot * 1e-6, *this);
    for (int i = 1; i <= n; ++i) {
        double g0 = pivot * (i - 1) / n, g1 = pivot * i / n;
        if (i == 1) g0 = pivot * 1e-6;
        double cur = phototaxis_M(g1, *this);
        if (prev != 0.0 && cur != 0.0 && (prev > 0) != (cur > 0))
            return brent_root([this](double g) { return phototaxis_M(g, *this); }, g0, g1, 1e-14);
        prev = cur;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

inline double refraction_angle(double theta_i_deg, double n0 = 1.333) {
    if (!(theta_i_deg >= 0.0 && theta_i_deg <= 89.9))
        throw std::out_of_range("refraction_angle: incidence angle must lie in [0, 89.9] degrees");
    if (!(n0 >= 1.0)) throw std::out_of_range("refraction_angle: refractive index must be >= 1");
    return std::asin(std::sin(theta_i_deg * std::numbers::pi / 180.0) / n0);
}

struct SuspensionParams {
    double Sc = 20.0;
    double Vc = 15.0;
    double tauH = 0.5;
    double omega = 0.4;
    double A1 = 0.0;
    double B = 0.26;
    double theta_i_deg = 0.0;
    double n0 = 1.333;
    PhototaxisCurve curve;

    void validate() const {
        if (!(Sc > 0.0)) throw std::invalid_argument("SuspensionParams: Sc must be > 0");
        if (!(Vc >= 0.0) || !std::isfinite(Vc)) throw std::invalid_argument("SuspensionParams: Vc must be >= 0");
        if (!(n0 > 1.0)) throw std::invalid_argument("SuspensionParams: n0 must be > 1");
        if (!(theta_i_deg >= 0.0 && theta_i_deg <= 89.9))
            throw std::invalid_argument("SuspensionParams: theta_i_deg must lie in [0, 89.9]");
        radiation_params().validate();
    }

    double cos_theta0() const { return std::cos(refraction_angle(theta_i_deg, n0)); }

    RadiationParams radiation_params() const {
        RadiationParams r;
        r.omega = omega;
        r.A1 = A1;
        r.B = B;
        r.tauH = tauH;
        r.cos_theta0 = std::cos(refraction_angle(theta_i_deg, n0));
        return r;
    }
};

struct BaseState {
    SuspensionParams params;
    double cos_theta0 = 1.0;
    Grid1D z_grid;
    std::vector<double> n_s, tau_of_z, G_s, q_s, G_s_coll, M_s, dMdG;
    double n_top = 1.0;
    int shooting_evaluations = 0;

    std::size_t size() const { return z_grid.size(); }
};

struct BaseStateOptions {
    int substeps = 4;
};

namespace detail {

struct ShotResult {
    std::vector<double> n, tau;
};

// RK4 from z = 1 downward for (n, tau) with n(1) = c, tau(1) = 0.
inline ShotResult shoot(double c, double Vc, double tauH, const PhototaxisCurve& curve, const CubicInterpolant& G,
                        const Grid1D& zg, int substeps) {
    const int nz = static_cast<int>(zg.size());
    ShotResult r;
    r.n.assign(nz, 0.0);
    r.tau.assign(nz, 0.0);
    double n = c, t = 0.0;
    r.n[nz - 1] = n;
    auto rhs = [&](double nn, double tt, double& dn, double& dt) {
        dn = Vc * phototaxis_M(G(tt), curve) * nn;
        dt = -tauH * nn;
    };
    for (int i = nz - 1; i > 0; --i) {
        double h = -(zg[i] - zg[i - 1]) / substeps;
        for (int s = 0; s < substeps; ++s) {
            double k1n, k1t, k2n, k2t, k3n, k3t, k4n, k4t;
            rhs(n, t, k1n, k1t);
            rhs(n + 0.5 * h * k1n, t + 0.5 * h * k1t, k2n, k2t);
            rhs(n + 0.5 * h * k2n, t + 0.5 * h * k2t, k3n, k3t);
            rhs(n + h * k3n, t + h * k3t, k4n, k4t);
            n += h / 6.0 * (k1n + 2 * k2n + 2 * k3n + k4n);
            t += h / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t);
        }
        if (!(n > 0.0)) throw std::runtime_error("solve_base_state: negative concentration, step too large");
        r.n[i - 1] = n;
        r.tau[i - 1] = t;
    }
    return r;
}

}  // namespace detail

inline BaseState solve_base_state(const SuspensionParams& p, const BasicRadiation& rad, int n_z = 129,
                                  const BaseStateOptions& opt = {}) {
    p.validate();
    if (n_z < 65) throw std::invalid_argument("solve_base_state: n_z must be >= 65");
    RadiationParams rp = p.radiation_params();
    const RadiationParams& have = rad.params;
    if (std::abs(have.tauH - rp.tauH) > 1e-14 || std::abs(have.omega - rp.omega) > 1e-14 ||
        std::abs(have.A1 - rp.A1) > 1e-14 || std::abs(have.B - rp.B) > 1e-14 ||
        std::abs(have.cos_theta0 - rp.cos_theta0) > 1e-14)
        throw std::invalid_argument("solve_base_state: radiation solution does not match the suspension parameters");

    BaseState bs;
    bs.params = p;
    bs.cos_theta0 = rp.cos_theta0;
    bs.z_grid = Grid1D::uniform(0.0, 1.0, n_z);
    CubicInterpolant Gi(rad.tau_grid.points, rad.G);
    CubicInterpolant qi(rad.tau_grid.points, rad.q);

    detail::ShotResult shot;
    if (p.Vc == 0.0) {
        shot.n.assign(n_z, 1.0);
        shot.tau.resize(n_z);
        for (int i = 0; i < n_z; ++i) shot.tau[i] = p.tauH * (1.0 - bs.z_grid[i]);
        shot.tau[n_z - 1] = 0.0;
        shot.tau[0] = p.tauH;
        bs.n_top = 1.0;
    } else {
        int evals = 0;
        auto residual = [&](double c) {
            ++evals;
            auto s = detail::shoot(c, p.Vc, p.tauH, p.curve, Gi, bs.z_grid, opt.substeps);
            return s.tau[0] / p.tauH - 1.0;
        };
        double lo = 1e-8, hi = 1.0;
        double flo = residual(lo), fhi = residual(hi);
        if (fhi == 0.0) lo = hi;
        int grow = 0;
        while (fhi < 0.0 && grow < 80) {
            lo = hi;
            flo = fhi;
            hi *= 2.0;
            fhi = residual(hi);
            ++grow;
        }
        if (lo == hi) {
            bs.n_top = hi;
        } else {
            if (!(flo < 0.0 && fhi > 0.0)) throw BracketError("solve_base_state: shooting bracket failure", lo, hi, flo, fhi);
            bs.n_top = brent_root(residual, lo, hi, 1e-15 * hi);
        }
        bs.shooting_evaluations = evals;
        shot = detail::shoot(bs.n_top, p.Vc, p.tauH, p.curve, Gi, bs.z_grid, opt.substeps);
    }

    bs.n_s = shot.n;
    bs.tau_of_z = shot.tau;
    bs.G_s.resize(n_z);
    bs.q_s.resize(n_z);
    bs.G_s_coll.resize(n_z);
    bs.M_s.resize(n_z);
    bs.dMdG.resize(n_z);
    for (int i = 0; i < n_z; ++i) {
        double t = std::clamp(bs.tau_of_z[i], 0.0, p.tauH);
        bs.G_s[i] = Gi(t);
        bs.q_s[i] = qi(t);
        bs.G_s_coll[i] = std::exp(-t / bs.cos_theta0);
        bs.M_s[i] = phototaxis_M(bs.G_s[i], p.curve);
        bs.dMdG[i] = phototaxis_dMdG(bs.G_s[i], p.curve);
    }
    return bs;
}

struct SublayerDiagnostics {
    std::vector<double> z_star;
    double HUZ = 1.0;
    double CDUZ = 0.0;
    bool no_crossing = true;
    // local maxima of n_s including the end points
    int peak_count = 0;
};

// HUZ is the highest crossing where G_s increases upward (cells converge there).
// Without such a crossing the layer top holds the sublayer and HUZ = 1.
inline SublayerDiagnostics sublayer_diagnostics(const BaseState& bs, double Gc) {
    SublayerDiagnostics d;
    const auto& z = bs.z_grid.points;
    const std::size_t n = z.size();
    CubicInterpolant Gz(z, bs.G_s);
    double huz = -1.0;
    auto add = [&](double zs, bool rising) {
        if (!d.z_star.empty() && std::abs(zs - d.z_star.back()) < 1e-12) return;
        d.z_star.push_back(zs);
        if (rising) huz = std::max(huz, zs);
    };
    for (std::size_t i = 0; i < n; ++i) {
        double a = bs.G_s[i] - Gc;
        bool rising = (i + 1 < n) ? bs.G_s[i + 1] > bs.G_s[i] : bs.G_s[i] > bs.G_s[i - 1];
        if (a == 0.0) {
            add(z[i], rising);
            continue;
        }
        if (i + 1 == n) break;
        double b = bs.G_s[i + 1] - Gc;
        if (b != 0.0 && (a > 0) != (b > 0))
            add(brent_root([&](double t) { return Gz(t) - Gc; }, z[i], z[i + 1], 1e-13), rising);
    }
    d.no_crossing = d.z_star.empty();
    d.HUZ = huz >= 0.0 ? huz : 1.0;
    double nmax = *std::max_element(bs.n_s.begin(), bs.n_s.end());
    d.CDUZ = nmax - bs.n_s.front();
    for (std::size_t i = 0; i < n; ++i) {
        bool left = i == 0 || bs.n_s[i] > bs.n_s[i - 1];
        bool right = i + 1 == n || bs.n_s[i] > bs.n_s[i + 1];
        if (left && right) ++d.peak_count;
    }
    if (d.peak_count == 0) d.peak_count = 1;
    return d;
}

}  // namespace bioconv
