#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bioconv/basestate.hpp"
#include "bioconv/numerics.hpp"
#include "bioconv/radiative.hpp"

namespace bioconv {

using CMatR = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EigenFunctionInput {
    Grid1D z_grid;
    CVec Theta;
    CVec ThetaTilde;
    double l = 0.0;
    double m = 0.0;

    double k() const { return std::hypot(l, m); }

    // ThetaTilde(z) = int_1^z Theta
    static EigenFunctionInput from_theta(const Grid1D& g, const CVec& theta, double l, double m) {
        if (static_cast<std::size_t>(theta.size()) != g.size()) throw std::invalid_argument("EigenFunctionInput: grid mismatch");
        EigenFunctionInput in;
        in.z_grid = g;
        in.Theta = theta;
        in.ThetaTilde = cumulative_integral(g, theta, true);
        in.l = l;
        in.m = m;
        return in;
    }

    static EigenFunctionInput from_theta_tilde(const Grid1D& g, const CVec& theta_tilde, double l, double m) {
        if (static_cast<std::size_t>(theta_tilde.size()) != g.size()) throw std::invalid_argument("EigenFunctionInput: grid mismatch");
        EigenFunctionInput in;
        in.z_grid = g;
        in.ThetaTilde = theta_tilde;
        in.ThetaTilde(in.ThetaTilde.size() - 1) = 0.0;
        in.Theta = diff_matrix(g, 1) * in.ThetaTilde;
        in.l = l;
        in.m = m;
        return in;
    }
};

struct Direction {
    double nu, xi, eta, weight;
    int polar;  // index into AngularQuadrature::nu
};

// Composite Gauss-Legendre in nu and in azimuth. Polar panels are graded geometrically toward grazing rays;
// azimuth is measured from the wavevector and its panels cluster at right angles to it, where the phase
// term makes the ray response sharp. Orders are nodes per panel.
struct AngularQuadrature {
    std::vector<double> nu, nu_weight;  // polar nodes, upward hemisphere first
    std::vector<double> phi, phi_weight;
    int polar_order = 0, azimuth_order = 0;

    static std::vector<double> polar_breaks() {
        std::vector<double> b{0.0};
        for (int i = 8; i >= 0; --i) b.push_back(std::pow(0.4, i));
        return b;
    }
    static std::vector<double> azimuth_breaks() {
        const double h = std::numbers::pi / 2;
        return {0.0, h / 2, h - 0.2, h - 0.04, h, h + 0.04, h + 0.2, 3 * h / 2, 2 * h};
    }

    static AngularQuadrature build(int n_polar = 16, int n_azimuth = 4) {
        if (n_polar < 1 || n_azimuth < 1) throw std::invalid_argument("AngularQuadrature: orders must be positive");
        AngularQuadrature q;
        q.polar_order = n_polar;
        q.azimuth_order = n_azimuth;
        std::vector<double> x, w;
        auto pb = polar_breaks();
        for (std::size_t i = 0; i + 1 < pb.size(); ++i) {
            QuadratureRule r = gauss_nodes(n_polar, pb[i], pb[i + 1]);
            x.insert(x.end(), r.nodes.begin(), r.nodes.end());
            w.insert(w.end(), r.weights.begin(), r.weights.end());
        }
        for (int s : {1, -1})
            for (std::size_t i = 0; i < x.size(); ++i) {
                q.nu.push_back(s * x[i]);
                q.nu_weight.push_back(w[i]);
            }
        auto ab = azimuth_breaks();
        for (std::size_t i = 0; i + 1 < ab.size(); ++i) {
            QuadratureRule r = gauss_nodes(n_azimuth, ab[i], ab[i + 1]);
            for (int j = 0; j < n_azimuth; ++j)
                for (double s : {1.0, -1.0}) {
                    q.phi.push_back(s * r.nodes[j]);
                    q.phi_weight.push_back(r.weights[j]);
                }
        }
        return q;
    }

    int n_polar() const { return static_cast<int>(nu.size()) / 2; }  // nodes per hemisphere
    int n_azimuth() const { return static_cast<int>(phi.size()); }

    std::vector<Direction> directions() const {
        std::vector<Direction> d;
        for (std::size_t p = 0; p < nu.size(); ++p) {
            double st = std::sqrt(std::max(0.0, 1.0 - nu[p] * nu[p]));
            for (std::size_t a = 0; a < phi.size(); ++a)
                d.push_back({nu[p], st * std::cos(phi[a]), st * std::sin(phi[a]), nu_weight[p] * phi_weight[a],
                             static_cast<int>(p)});
        }
        return d;
    }

    double total_weight() const {
        double s = 0;
        for (const auto& d : directions()) s += d.weight;
        return s;
    }
};

struct PerturbationField {
    CVec G1c, G1d, P, Q, S;
    CVec Gamma0, Gamma1, Gamma2;
    int iterations = 0;
    std::vector<double> residual_history;
};

struct GammaProfiles {
    CVec Gamma0, Gamma1, Gamma2;
};

struct PerturbOptions {
    double tol = 1e-9;
    int max_iter = 5000;
};

namespace detail {

struct CellCoeffs {
    std::vector<cplx> e, cin, cout;
};

inline void phi_functions(cplx x, cplx& e, cplx& p0, cplx& p1) {
    e = std::exp(-x);
    if (std::abs(x) < 1e-3) {
        cplx x2 = x * x, x3 = x2 * x;
        p0 = 1.0 - x / 2.0 + x2 / 6.0 - x3 / 24.0;
        p1 = 0.5 - x / 3.0 + x2 / 8.0 - x3 / 30.0;
    } else {
        p0 = (1.0 - e) / x;
        p1 = (1.0 - e * (1.0 + x)) / (x * x);
    }
}

}  // namespace detail

// Base-state data shared by every perturbation solve on one base state.
class PerturbationContext {
public:
    PerturbationContext(const BaseState& bs, const AngularQuadrature& quad) : quad_(quad), dirs_(quad.directions()) {
        N_ = static_cast<int>(bs.size());
        z_ = bs.z_grid;
        const auto& p = bs.params;
        tauH_ = p.tauH;
        mu0_ = bs.cos_theta0;
        Vc_ = p.Vc;
        A1_ = p.A1;
        c_ = p.omega * p.tauH / (4.0 * std::numbers::pi);
        auto vec = [](const std::vector<double>& v) { return RVec(Eigen::Map<const RVec>(v.data(), v.size())); };
        n_ = vec(bs.n_s);
        G_ = vec(bs.G_s);
        q_ = vec(bs.q_s);
        Gc_ = vec(bs.G_s_coll);
        M_ = vec(bs.M_s);
        dM_ = vec(bs.dMdG);
        tau_ = vec(bs.tau_of_z);
        Gcm_ = tauH_ / mu0_ * Gc_;
        D1_ = diff_matrix(z_, 1);
        dtau_.resize(N_ - 1);
        for (int j = 0; j + 1 < N_; ++j) dtau_[j] = tau_(j) - tau_(j + 1);

        // Basic diffuse intensity per polar node and the Theta source factor it feeds.
        Ld_.resize(quad.nu.size());
        th_.resize(quad.nu.size());
        for (std::size_t pi = 0; pi < quad.nu.size(); ++pi) {
            double nu = quad.nu[pi];
            CVec src = (c_ * n_.array() * (G_.array() - A1_ * nu * q_.array())).matrix().cast<cplx>();
            CVec L = sweep(nu, 0.0, src);
            RVec Ld = L.real();
            if (nu < 0)
                for (int i = 0; i < N_; ++i) Ld(i) += p.B / std::numbers::pi * std::exp(-tau_(i) / std::abs(nu));
            Ld_[pi] = Ld;
            th_[pi] = c_ * (G_.array() - A1_ * nu * q_.array()) - tauH_ * Ld.array();
        }
    }

    int size() const { return N_; }
    const Grid1D& grid() const { return z_; }
    const AngularQuadrature& quadrature() const { return quad_; }
    const std::vector<Direction>& directions() const { return dirs_; }
    const RMat& D1() const { return D1_; }
    const RVec& Ld(std::size_t polar) const { return Ld_[polar]; }
    const RVec& theta_factor(std::size_t polar) const { return th_[polar]; }
    const RVec& n() const { return n_; }
    const RVec& G() const { return G_; }
    const RVec& q() const { return q_; }
    const RVec& Gc() const { return Gc_; }
    const RVec& M() const { return M_; }
    const RVec& dM() const { return dM_; }
    // (tauH / cos theta0) G_s^c
    const RVec& Gcm() const { return Gcm_; }
    double tauH() const { return tauH_; }
    double mu0() const { return mu0_; }
    double Vc() const { return Vc_; }
    double A1() const { return A1_; }
    double c() const { return c_; }

    detail::CellCoeffs cells(double nu, double kappa) const {
        detail::CellCoeffs cc;
        const double an = std::abs(nu);
        cc.e.resize(N_ - 1);
        cc.cin.resize(N_ - 1);
        cc.cout.resize(N_ - 1);
        for (int j = 0; j + 1 < N_; ++j) {
            double h = z_[j + 1] - z_[j];
            cplx x = cplx(dtau_[j], kappa * h) / an;
            cplx e, p0, p1;
            detail::phi_functions(x, e, p0, p1);
            cc.e[j] = e;
            cc.cin[j] = h / an * p1;
            cc.cout[j] = h / an * (p0 - p1);
        }
        return cc;
    }

    // Psi along one ordinate with zero inflow: upward rays start at z = 0, downward at z = 1.
    CVec sweep(double nu, double kappa, const CVec& b) const {
        auto cc = cells(nu, kappa);
        return sweep(nu, cc, b);
    }

    CVec sweep(double nu, const detail::CellCoeffs& cc, const CVec& b) const {
        CVec psi(N_);
        if (nu > 0) {
            psi(0) = 0.0;
            for (int j = 0; j + 1 < N_; ++j) psi(j + 1) = cc.e[j] * psi(j) + cc.cin[j] * b(j) + cc.cout[j] * b(j + 1);
        } else {
            psi(N_ - 1) = 0.0;
            for (int j = N_ - 2; j >= 0; --j) psi(j) = cc.e[j] * psi(j + 1) + cc.cin[j] * b(j + 1) + cc.cout[j] * b(j);
        }
        return psi;
    }

    // Dense map from nodal source to nodal Psi for one ordinate.
    CMat transfer(double nu, double kappa) const {
        auto cc = cells(nu, kappa);
        CMat T = CMat::Zero(N_, N_);
        if (nu > 0) {
            for (int j = 0; j < N_; ++j) {
                if (j >= 1) T(j, j) = cc.cout[j - 1];
                if (j + 1 < N_) T(j + 1, j) = cc.e[j] * T(j, j) + cc.cin[j];
                for (int i = j + 1; i + 1 < N_; ++i) T(i + 1, j) = cc.e[i] * T(i, j);
            }
        } else {
            for (int j = N_ - 1; j >= 0; --j) {
                if (j <= N_ - 2) T(j, j) = cc.cout[j];
                if (j >= 1) T(j - 1, j) = cc.e[j - 1] * T(j, j) + cc.cin[j - 1];
                for (int i = j - 1; i >= 1; --i) T(i - 1, j) = cc.e[i - 1] * T(i, j);
            }
        }
        return T;
    }

    // S1 += w T and Sk += wk T for the ray transfer matrix T, without forming T. Built row by row.
    void accumulate_transfer(double nu, double kappa, double w, double wk, CMatR& S1, CMatR& Sk) const {
        accumulate_transfer_pair(nu, kappa, w, wk, 0.0, 0.0, S1, Sk);
    }

    // Same with the mirrored ray at -kappa folded in: its transfer matrix is conj(T).
    void accumulate_transfer_pair(double nu, double kappa, double w, double wk, double wm, double wkm, CMatR& S1,
                                  CMatR& Sk) const {
        auto cc = cells(nu, kappa);
        const bool with_k = wk != 0.0 || wkm != 0.0;
        CVec r = CVec::Zero(N_);
        if (nu > 0) {
            for (int i = 0; i < N_; ++i) {
                if (i >= 1) {
                    r.head(i) *= cc.e[i - 1];
                    r(i - 1) += cc.cin[i - 1];
                    r(i) = cc.cout[i - 1];
                }
                S1.row(i).head(i + 1) += (w * r.head(i + 1) + wm * r.head(i + 1).conjugate()).transpose();
                if (with_k) Sk.row(i).head(i + 1) += (wk * r.head(i + 1) + wkm * r.head(i + 1).conjugate()).transpose();
            }
        } else {
            for (int i = N_ - 1; i >= 0; --i) {
                if (i <= N_ - 2) {
                    r.tail(N_ - i - 1) *= cc.e[i];
                    r(i + 1) += cc.cin[i];
                    r(i) = cc.cout[i];
                }
                S1.row(i).tail(N_ - i) += (w * r.tail(N_ - i) + wm * r.tail(N_ - i).conjugate()).transpose();
                if (with_k) Sk.row(i).tail(N_ - i) += (wk * r.tail(N_ - i) + wkm * r.tail(N_ - i).conjugate()).transpose();
            }
        }
    }

private:
    AngularQuadrature quad_;
    std::vector<Direction> dirs_;
    int N_ = 0;
    Grid1D z_;
    double tauH_ = 0, mu0_ = 1, Vc_ = 0, A1_ = 0, c_ = 0;
    RVec n_, G_, q_, Gc_, M_, dM_, tau_, Gcm_, dtau_;
    RMat D1_;
    std::vector<RVec> Ld_;
    std::vector<RVec> th_;
};

inline void check_grid(const EigenFunctionInput& in, const BaseState& bs) {
    if (in.z_grid.size() != bs.size() || static_cast<std::size_t>(in.Theta.size()) != bs.size() ||
        static_cast<std::size_t>(in.ThetaTilde.size()) != bs.size())
        throw std::invalid_argument("perturbation: eigenfunction and base state grids differ");
    for (std::size_t i = 0; i < bs.size(); ++i)
        if (std::abs(in.z_grid[i] - bs.z_grid[i]) > 1e-14)
            throw std::invalid_argument("perturbation: eigenfunction and base state grids differ");
}

// Collimated part of the perturbed intensity moment: (tauH/cos theta0) ThetaTilde G_s^c.
inline CVec g1_collimated(const EigenFunctionInput& in, const BaseState& bs) {
    check_grid(in, bs);
    CVec out(bs.size());
    const double f = bs.params.tauH / bs.cos_theta0;
    for (std::size_t i = 0; i < bs.size(); ++i) out(i) = f * in.ThetaTilde(i) * bs.G_s_coll[i];
    return out;
}

namespace detail {

// Directions grouped by polar node and horizontal phase kappa; equal kappa gives equal rays.
struct RayGroup {
    int polar;
    double nu, kappa;
    double weight;          // sum of weights
    double weight_xi = 0;   // sum of w xi
    double weight_eta = 0;  // sum of w eta
};

// Azimuths are measured from the wavevector so that kappa depends on k only and +-phi rays merge.
inline std::vector<RayGroup> group_rays(const AngularQuadrature& q, double l, double m) {
    std::vector<RayGroup> out;
    const double phik = (l == 0.0 && m == 0.0) ? 0.0 : std::atan2(m, l);
    for (std::size_t p = 0; p < q.nu.size(); ++p) {
        const double st = std::sqrt(std::max(0.0, 1.0 - q.nu[p] * q.nu[p]));
        std::map<long long, std::size_t> index;
        for (std::size_t a = 0; a < q.phi.size(); ++a) {
            const double phi = phik + q.phi[a];
            const double xi = st * std::cos(phi), eta = st * std::sin(phi);
            const double w = q.nu_weight[p] * q.phi_weight[a];
            const double kappa = l * xi + m * eta;
            long long key = std::llround(kappa * 1e11);
            auto it = index.find(key);
            if (it == index.end()) {
                index[key] = out.size();
                out.push_back({static_cast<int>(p), q.nu[p], kappa, w, w * xi, w * eta});
            } else {
                auto& g = out[it->second];
                g.weight += w;
                g.weight_xi += w * xi;
                g.weight_eta += w * eta;
            }
        }
    }
    return out;
}

}  // namespace detail

inline PerturbationField solve_perturbed_diffuse(const EigenFunctionInput& in, const PerturbationContext& ctx,
                                                 const PerturbOptions& opt = {}) {
    const int N = ctx.size();
    if (static_cast<int>(in.Theta.size()) != N || static_cast<int>(in.ThetaTilde.size()) != N)
        throw std::invalid_argument("solve_perturbed_diffuse: grid mismatch");
    PerturbationField pf;
    pf.G1c = (ctx.Gcm().array() * in.ThetaTilde.array()).matrix();
    auto groups = detail::group_rays(ctx.quadrature(), in.l, in.m);
    std::vector<detail::CellCoeffs> coeffs;
    coeffs.reserve(groups.size());
    for (const auto& g : groups) coeffs.push_back(ctx.cells(g.nu, g.kappa));

    const double c = ctx.c(), A1 = ctx.A1();
    const RVec& n = ctx.n();
    CVec G1d = CVec::Zero(N), Sd = CVec::Zero(N), P = CVec::Zero(N), Q = CVec::Zero(N);
    double damping = 1.0, prev = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= opt.max_iter; ++it) {
        CVec G1 = pf.G1c + G1d;
        CVec S = -pf.G1c + Sd;
        CVec nG = (c * n.array() * G1.array()).matrix();
        CVec nS = (c * A1 * n.array() * S.array()).matrix();
        CVec G1d_new = CVec::Zero(N), Sd_new = CVec::Zero(N), P_new = CVec::Zero(N), Q_new = CVec::Zero(N);
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            const auto& g = groups[gi];
            CVec b = nG + g.nu * nS + (ctx.theta_factor(g.polar).array() * in.Theta.array()).matrix();
            CVec psi = ctx.sweep(g.nu, coeffs[gi], b);
            G1d_new += g.weight * psi;
            Sd_new += g.weight * g.nu * psi;
            P_new += g.weight_xi * psi;
            Q_new += g.weight_eta * psi;
        }
        double scale = std::max({1.0, G1d_new.cwiseAbs().maxCoeff(), Sd_new.cwiseAbs().maxCoeff()});
        double res = std::max((G1d_new - G1d).cwiseAbs().maxCoeff(), (Sd_new - Sd).cwiseAbs().maxCoeff()) / scale;
        pf.residual_history.push_back(res);
        if (res > prev) damping = 0.5;
        prev = res;
        G1d += damping * (G1d_new - G1d);
        Sd += damping * (Sd_new - Sd);
        P = P_new;
        Q = Q_new;
        if (res < opt.tol) {
            pf.iterations = it;
            // final pass so that P, Q match the converged moments
            CVec G1f = pf.G1c + G1d, Sf = -pf.G1c + Sd;
            CVec nGf = (c * n.array() * G1f.array()).matrix();
            CVec nSf = (c * A1 * n.array() * Sf.array()).matrix();
            P.setZero();
            Q.setZero();
            for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                const auto& g = groups[gi];
                if (g.weight_xi == 0.0 && g.weight_eta == 0.0) continue;
                CVec b = nGf + g.nu * nSf + (ctx.theta_factor(g.polar).array() * in.Theta.array()).matrix();
                CVec psi = ctx.sweep(g.nu, coeffs[gi], b);
                P += g.weight_xi * psi;
                Q += g.weight_eta * psi;
            }
            pf.G1d = G1d;
            pf.S = -pf.G1c + Sd;
            pf.P = P;
            pf.Q = Q;
            return pf;
        }
    }
    throw ConvergenceError("solve_perturbed_diffuse: moment iteration did not converge", opt.max_iter,
                           pf.residual_history.empty() ? 0.0 : pf.residual_history.back());
}

inline PerturbationField solve_perturbed_diffuse(const EigenFunctionInput& in, const BaseState& bs, const BasicRadiation& rad,
                                                 const AngularQuadrature& quad, const PerturbOptions& opt = {}) {
    check_grid(in, bs);
    if (std::abs(rad.params.tauH - bs.params.tauH) > 1e-14)
        throw std::invalid_argument("solve_perturbed_diffuse: radiation and base state disagree");
    PerturbationContext ctx(bs, quad);
    return solve_perturbed_diffuse(in, ctx, opt);
}

inline GammaProfiles gamma_coefficients(const EigenFunctionInput& in, const PerturbationContext& ctx, const PerturbationField& pf) {
    const int N = ctx.size();
    const RMat& D1 = ctx.D1();
    const double Vc = ctx.Vc(), f = ctx.tauH() / ctx.mu0();
    const RVec& n = ctx.n();
    for (int i = 0; i < N; ++i)
        if (ctx.q()(i) == 0.0) throw std::domain_error("gamma_coefficients: basic flux vanishes");
    GammaProfiles g;
    CVec Pi = in.l * pf.P + in.m * pf.Q;
    CVec a = (n.array() * ctx.dM().array() * pf.G1d.array()).matrix();
    g.Gamma0 = Vc * (D1 * a) - cplx(0, 1) * (Vc * n.array() * ctx.M().array() / ctx.q().array()).matrix().cast<cplx>().cwiseProduct(Pi);
    RVec b = n.array() * ctx.Gc().array() * ctx.dM().array();
    g.Gamma1 = (f * Vc * (D1 * b)).cast<cplx>();
    RVec Gd = ctx.G() - ctx.Gc();
    g.Gamma2 = (2.0 * f * Vc * b.array() + Vc * ctx.dM().array() * (D1 * Gd).array()).matrix().cast<cplx>();
    return g;
}

inline GammaProfiles gamma_coefficients(const EigenFunctionInput& in, const BaseState& bs, const PerturbationField& pf,
                                        const AngularQuadrature& quad = AngularQuadrature::build()) {
    check_grid(in, bs);
    PerturbationContext ctx(bs, quad);
    return gamma_coefficients(in, ctx, pf);
}

inline void fill_gammas(PerturbationField& pf, const GammaProfiles& g) {
    pf.Gamma0 = g.Gamma0;
    pf.Gamma1 = g.Gamma1;
    pf.Gamma2 = g.Gamma2;
}

// Linear response of the diffuse moments to (Theta, ThetaTilde), assembled as dense matrices.
// Each ray's transfer matrix is accumulated into kernel sums and one 2N system is solved.
class PerturbationOperator {
public:
    PerturbationOperator(const PerturbationContext& ctx, double l, double m) : l_(l), m_(m) {
        const int N = ctx.size();
        const double c = ctx.c(), A1 = ctx.A1();
        const RVec& n = ctx.n();
        const std::size_t np = ctx.quadrature().nu.size();
        auto groups = detail::group_rays(ctx.quadrature(), l, m);
        std::map<std::pair<int, long long>, std::size_t> index;
        for (std::size_t i = 0; i < groups.size(); ++i)
            index[{groups[i].polar, std::llround(groups[i].kappa * 1e11)}] = i;
        std::vector<bool> done(groups.size(), false);
        CMat K11 = CMat::Zero(N, N), K1n = CMat::Zero(N, N), Knn = CMat::Zero(N, N);
        CMat Kk1 = CMat::Zero(N, N), Kkn = CMat::Zero(N, N);
        CMat K1t = CMat::Zero(N, N), Knt = CMat::Zero(N, N), Kkt = CMat::Zero(N, N);
        // per polar node: S1 = sum w T, Sk = sum w kappa T
        CMatR S1(N, N), Sk(N, N);
        std::size_t gi = 0;
        for (std::size_t p = 0; p < np; ++p) {
            S1.setZero();
            Sk.setZero();
            for (; gi < groups.size() && groups[gi].polar == static_cast<int>(p); ++gi) {
                if (done[gi]) continue;
                const auto& g = groups[gi];
                const double wk = l * g.weight_xi + m * g.weight_eta;
                double wm = 0.0, wkm = 0.0;
                if (g.kappa != 0.0) {
                    auto it = index.find({g.polar, std::llround(-g.kappa * 1e11)});
                    if (it != index.end() && !done[it->second]) {
                        const auto& h = groups[it->second];
                        wm = h.weight;
                        wkm = l * h.weight_xi + m * h.weight_eta;
                        done[it->second] = true;
                    }
                }
                done[gi] = true;
                ctx.accumulate_transfer_pair(g.nu, g.kappa, g.weight, wk, wm, wkm, S1, Sk);
            }
            const double nu = ctx.quadrature().nu[p];
            const RVec& th = ctx.theta_factor(p);
            K11 += S1;
            K1n += nu * S1;
            Knn += nu * nu * S1;
            Kk1 += Sk;
            Kkn += nu * Sk;
            K1t.noalias() += S1 * th.asDiagonal();
            Knt.noalias() += nu * S1 * th.asDiagonal();
            Kkt.noalias() += Sk * th.asDiagonal();
        }
        RVec cn = c * n, can = c * A1 * n;
        RVec gcm = ctx.Gcm();
        // unknowns u = [G1d; Sd]
        CMat Kx(2 * N, 2 * N);
        Kx.topLeftCorner(N, N) = K11 * cn.asDiagonal();
        Kx.topRightCorner(N, N) = K1n * can.asDiagonal();
        Kx.bottomLeftCorner(N, N) = K1n * cn.asDiagonal();
        Kx.bottomRightCorner(N, N) = Knn * can.asDiagonal();
        RVec cng = cn.cwiseProduct(gcm), cang = can.cwiseProduct(gcm);
        CMat rhs(2 * N, 2 * N);
        rhs.topLeftCorner(N, N) = K11 * cng.asDiagonal() - K1n * cang.asDiagonal();
        rhs.bottomLeftCorner(N, N) = K1n * cng.asDiagonal() - Knn * cang.asDiagonal();
        rhs.topRightCorner(N, N) = K1t;
        rhs.bottomRightCorner(N, N) = Knt;
        CMat A = CMat::Identity(2 * N, 2 * N) - Kx;
        CMat U = A.partialPivLu().solve(rhs);
        G1d_tilde = U.topLeftCorner(N, N);
        G1d_theta = U.topRightCorner(N, N);
        Sd_tilde = U.bottomLeftCorner(N, N);
        Sd_theta = U.bottomRightCorner(N, N);
        // Pi = l P + m Q
        Pi_tilde = Kk1 * cn.asDiagonal() * (CMat(gcm.cast<cplx>().asDiagonal()) + G1d_tilde) +
                   Kkn * can.asDiagonal() * (-CMat(gcm.cast<cplx>().asDiagonal()) + Sd_tilde);
        Pi_theta = Kk1 * cn.asDiagonal() * G1d_theta + Kkn * can.asDiagonal() * Sd_theta + Kkt;
    }

    double l() const { return l_; }
    double m() const { return m_; }

    CMat G1d_tilde, G1d_theta, Sd_tilde, Sd_theta, Pi_tilde, Pi_theta;

private:
    double l_, m_;
};

}  // namespace bioconv
