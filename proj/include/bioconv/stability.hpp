#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "bioconv/basestate.hpp"
#include "bioconv/numerics.hpp"
#include "bioconv/perturb.hpp"

namespace bioconv {

struct ModeParams {
    double l = 0.0, m = 0.0;
    double R = 0.0;
    double Sc = 20.0;
    double k() const { return std::hypot(l, m); }
};

struct GrowthRateResult {
    cplx gamma;
    CVec W, ThetaTilde;
    int mode_number = 0;
    // max residual of the boundary rows and of the interior equations, each relative to row norm times max abs(x)
    double bc_residual = 0.0;
    double equation_residual = 0.0;
};

enum class BranchKind { Stationary, Oscillatory };

inline const char* to_string(BranchKind k) { return k == BranchKind::Stationary ? "stationary" : "oscillatory"; }

struct NeutralPoint {
    double k = 0.0, R = 0.0, sigma = 0.0;
};

struct NeutralBranch {
    BranchKind kind = BranchKind::Stationary;
    std::vector<NeutralPoint> points;
    std::optional<double> k_b;
};

struct NeutralCurve {
    std::vector<NeutralBranch> branches;
    // k values where no neutral point could be located, with the reason
    std::vector<std::pair<double, std::string>> failures;
};

struct CriticalMode {
    double k_c = 0.0, R_c = 0.0, lambda_c = 0.0, sigma_c = 0.0;
    bool overstable = false;
    int mode_number = 0;
    double bc_residual = 0.0, equation_residual = 0.0;
};

struct NeutralResult {
    double R = 0.0, sigma = 0.0;
    BranchKind kind = BranchKind::Stationary;
};

struct StabilityOptions {
    double sigma_floor = 1e-3;
    double R_rel_tol = 1e-8;
    // |gamma| above this is a discretization artifact and is ignored
    double gamma_cap = 1e6;
    std::size_t cache_entries = 6;
};

// Count of interior sign changes of Re W, ignoring entries below 1e-6 of the peak.
inline int count_mode_number(const CVec& W) {
    if (W.size() < 3) return 0;
    double peak = W.real().cwiseAbs().maxCoeff();
    if (!(peak > 0.0)) return 0;
    int changes = 0, last = 0;
    for (Eigen::Index i = 1; i + 1 < W.size(); ++i) {
        double v = W(i).real();
        if (std::abs(v) < 1e-6 * peak) continue;
        int s = v > 0 ? 1 : -1;
        if (last != 0 && s != last) ++changes;
        last = s;
    }
    return changes;
}

class StabilitySolver {
public:
    explicit StabilitySolver(const BaseState& bs, const AngularQuadrature& quad = AngularQuadrature::build(),
                             StabilityOptions opt = {})
        : bs_(bs), ctx_(bs, quad), opt_(opt) {
        N_ = static_cast<int>(bs.size());
        if (N_ < 65) throw std::invalid_argument("StabilitySolver: n_z must be >= 65");
        D1_ = diff_matrix(bs.z_grid, 1);
        D2_ = diff_matrix(bs.z_grid, 2);
        D3_ = diff_matrix(bs.z_grid, 3);
        D4_ = diff_matrix(bs.z_grid, 4);
        const RVec& n = ctx_.n();
        const double Vc = ctx_.Vc(), f = ctx_.tauH() / ctx_.mu0();
        for (int i = 0; i < N_; ++i)
            if (ctx_.q()(i) == 0.0) throw std::domain_error("StabilitySolver: basic flux vanishes");
        RVec b = n.array() * ctx_.Gc().array() * ctx_.dM().array();
        Gamma1_ = f * Vc * (D1_ * b);
        RVec Gd = ctx_.G() - ctx_.Gc();
        Gamma2_ = 2.0 * f * Vc * b.array() + Vc * ctx_.dM().array() * (D1_ * Gd).array();
        dn_ = D1_ * n;
        boundary_ = {0, 1, N_ - 2, N_ - 1, N_, 2 * N_ - 2, 2 * N_ - 1};
        std::vector<bool> is_b(2 * N_, false);
        for (int r : boundary_) is_b[r] = true;
        for (int r = 0; r < 2 * N_; ++r)
            if (!is_b[r]) interior_.push_back(r);
    }

    const BaseState& base_state() const { return bs_; }
    const PerturbationContext& context() const { return ctx_; }
    const StabilityOptions& options() const { return opt_; }
    int size() const { return N_; }

    // Nonlocal response of the Theta equation to ThetaTilde, per wavevector.
    struct Nonlocal {
        CMat G1_total;  // G1 = G1c + G1d as a map from ThetaTilde
        CMat Gamma0;    // Gamma0 as a map from ThetaTilde
    };

    struct Reduced {
        CMat A0, A1, B;        // full 2N pencil rows, A = A0 + R A1, boundary rows hold constraints
        CMat E;                // boundary unknowns = E * interior unknowns
        CMat At0, At1, Bt;     // reduced pencil
        CMat M0, M1;           // Bt^{-1} At0, Bt^{-1} At1 when Bt is regular
        bool regular = false;
    };

    std::shared_ptr<const Nonlocal> nonlocal(double l, double m) const {
        {
            std::lock_guard<std::mutex> g(mu_);
            auto it = nl_cache_.find({l, m});
            if (it != nl_cache_.end()) return it->second;
        }
        PerturbationOperator op(ctx_, l, m);
        auto out = std::make_shared<Nonlocal>();
        const RVec& n = ctx_.n();
        const double Vc = ctx_.Vc();
        CMat G1d = op.G1d_tilde + op.G1d_theta * D1_;
        CMat Pi = op.Pi_tilde + op.Pi_theta * D1_;
        out->G1_total = G1d;
        out->G1_total.diagonal() += ctx_.Gcm().cast<cplx>();
        RVec ndm = n.cwiseProduct(ctx_.dM());
        RVec coef = Vc * n.array() * ctx_.M().array() / ctx_.q().array();
        out->Gamma0 = Vc * D1_ * (ndm.asDiagonal() * G1d) - cplx(0.0, 1.0) * (coef.asDiagonal() * Pi);
        std::lock_guard<std::mutex> g(mu_);
        remember(nl_cache_, nl_order_, std::make_pair(l, m), std::shared_ptr<const Nonlocal>(out));
        return out;
    }

    std::shared_ptr<const Reduced> reduced(double l, double m, double Sc) const {
        if (!(Sc > 0.0)) throw std::invalid_argument("StabilitySolver: Sc must be > 0");
        auto key = std::make_tuple(l, m, Sc);
        {
            std::lock_guard<std::mutex> g(mu_);
            auto it = red_cache_.find(key);
            if (it != red_cache_.end()) return it->second;
        }
        auto nl = nonlocal(l, m);
        const int N = N_;
        const double k2 = l * l + m * m;
        const double Vc = ctx_.Vc();
        const RVec& n = ctx_.n();
        RMat I = RMat::Identity(N, N);
        auto out = std::make_shared<Reduced>();
        CMat& A0 = out->A0;
        CMat& A1 = out->A1;
        CMat& B = out->B;
        A0 = CMat::Zero(2 * N, 2 * N);
        A1 = CMat::Zero(2 * N, 2 * N);
        B = CMat::Zero(2 * N, 2 * N);
        A0.topLeftCorner(N, N) = (D4_ - 2.0 * k2 * D2_ + k2 * k2 * I).cast<cplx>();
        A1.topRightCorner(N, N) = (k2 * D1_).cast<cplx>();
        A0.bottomLeftCorner(N, N) = (-dn_).asDiagonal().toDenseMatrix().cast<cplx>();
        RMat att = D3_ - (Vc * ctx_.M()).asDiagonal() * D2_ - (k2 + Gamma2_.array()).matrix().asDiagonal() * D1_;
        att.diagonal() -= Gamma1_;
        A0.bottomRightCorner(N, N) = att.cast<cplx>() - nl->Gamma0;
        B.topLeftCorner(N, N) = ((D2_ - k2 * I) / Sc).cast<cplx>();
        B.bottomRightCorner(N, N) = D1_.cast<cplx>();

        // boundary rows
        for (int r : boundary_) {
            A0.row(r).setZero();
            A1.row(r).setZero();
            B.row(r).setZero();
        }
        A0(0, 0) = 1.0;
        A0.block(1, 0, 1, N) = D1_.row(0).cast<cplx>();
        A0.block(N - 2, 0, 1, N) = D2_.row(N - 1).cast<cplx>();
        A0(N - 1, N - 1) = 1.0;
        CMat flux = (D2_ - (Vc * ctx_.M()).asDiagonal() * D1_).cast<cplx>() -
                    (Vc * n.cwiseProduct(ctx_.dM())).asDiagonal() * nl->G1_total;
        A0.block(N, N, 1, N) = flux.row(0);
        A0.block(2 * N - 2, N, 1, N) = flux.row(N - 1);
        A0(2 * N - 1, 2 * N - 1) = 1.0;

        const int nb = static_cast<int>(boundary_.size());
        const int ni = static_cast<int>(interior_.size());
        auto take = [&](const CMat& M, const std::vector<int>& rows, const std::vector<int>& cols) {
            CMat out(rows.size(), cols.size());
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = M(rows[i], cols[j]);
            return out;
        };
        CMat Cbb = take(A0, boundary_, boundary_), Cbi = take(A0, boundary_, interior_);
        Eigen::PartialPivLU<CMat> clu(Cbb);
        if (!(std::abs(clu.determinant()) > 0.0)) throw SingularPencilError("StabilitySolver: boundary block is singular");
        out->E = -clu.solve(Cbi);
        if (out->E.rows() != nb || out->E.cols() != ni) throw std::logic_error("StabilitySolver: elimination shape");
        out->At0 = take(A0, interior_, interior_) + take(A0, interior_, boundary_) * out->E;
        out->At1 = take(A1, interior_, interior_) + take(A1, interior_, boundary_) * out->E;
        out->Bt = take(B, interior_, interior_) + take(B, interior_, boundary_) * out->E;
        Eigen::PartialPivLU<CMat> blu(out->Bt);
        double rc = blu.rcond();
        if (std::isfinite(rc) && rc > 1e-13) {
            out->M0 = blu.solve(out->At0);
            out->M1 = blu.solve(out->At1);
            out->regular = out->M0.allFinite() && out->M1.allFinite();
        }
        std::lock_guard<std::mutex> g(mu_);
        remember(red_cache_, red_order_, key, std::shared_ptr<const Reduced>(out));
        return out;
    }

    // Finite eigenvalues of the pencil at (l, m, R, Sc).
    std::vector<cplx> spectrum(const ModeParams& mp) const {
        auto rd = reduced(mp.l, mp.m, mp.Sc);
        std::vector<cplx> v;
        if (rd->regular) v = eigenvalues(rd->M0 + mp.R * rd->M1);
        else v = generalized_eigenvalues(rd->At0 + mp.R * rd->At1, rd->Bt);
        std::vector<cplx> out;
        for (const auto& g : v)
            if (std::isfinite(g.real()) && std::isfinite(g.imag()) && std::abs(g) < opt_.gamma_cap) out.push_back(g);
        if (out.empty()) throw SingularPencilError("StabilitySolver: no finite eigenvalue");
        return out;
    }

    cplx leading_gamma(const ModeParams& mp) const {
        auto v = spectrum(mp);
        return v[select_leading(v)];
    }

    // Largest real part within one class (stationary: |Im| < floor); -inf when the class is empty.
    double class_max(const std::vector<cplx>& v, BranchKind kind) const {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& g : v) {
            bool stat = std::abs(g.imag()) < opt_.sigma_floor;
            if (stat == (kind == BranchKind::Stationary)) best = std::max(best, g.real());
        }
        return best;
    }

    cplx class_leading(const std::vector<cplx>& v, BranchKind kind) const {
        cplx best(-std::numeric_limits<double>::infinity(), 0.0);
        for (const auto& g : v) {
            bool stat = std::abs(g.imag()) < opt_.sigma_floor;
            if (stat != (kind == BranchKind::Stationary)) continue;
            if (g.real() > best.real() || (g.real() == best.real() && g.imag() > best.imag())) best = g;
        }
        return best;
    }

    GrowthRateResult growth_rate(const ModeParams& mp) const {
        auto rd = reduced(mp.l, mp.m, mp.Sc);
        GrowthRateResult res;
        res.gamma = leading_gamma(mp);
        return eigenfunction(mp, res.gamma);
    }

    // Eigenfunction for a given eigenvalue of the pencil at mp.
    GrowthRateResult eigenfunction(const ModeParams& mp, cplx gamma) const {
        auto rd = reduced(mp.l, mp.m, mp.Sc);
        const int N = N_;
        GrowthRateResult res;
        res.gamma = gamma;
        CVec xi;
        if (rd->regular) {
            CMat C = rd->M0 + mp.R * rd->M1;
            xi = detail::inverse_iteration(C, CMat::Identity(C.rows(), C.cols()), gamma);
        } else {
            xi = detail::inverse_iteration(rd->At0 + mp.R * rd->At1, rd->Bt, gamma);
        }
        CVec x(2 * N);
        for (std::size_t i = 0; i < interior_.size(); ++i) x(interior_[i]) = xi(i);
        CVec xb = rd->E * xi;
        for (std::size_t i = 0; i < boundary_.size(); ++i) x(boundary_[i]) = xb(i);
        CVec W = x.head(N);
        Eigen::Index imax = 0;
        if (W.cwiseAbs().maxCoeff(&imax) > 0.0) x /= W(imax);
        else normalize_max_modulus(x);
        res.W = x.head(N);
        res.ThetaTilde = x.tail(N);
        res.mode_number = count_mode_number(res.W);
        CMat A = rd->A0 + mp.R * rd->A1;
        CVec r = A * x - gamma * (rd->B * x);
        double bres = 0.0, eres = 0.0, xn = x.cwiseAbs().maxCoeff();
        for (int row : boundary_) {
            double scale = A.row(row).cwiseAbs().sum() * xn;
            bres = std::max(bres, std::abs(r(row)) / std::max(scale, 1e-300));
        }
        for (int row : interior_) {
            double scale = (A.row(row).cwiseAbs().sum() + std::abs(gamma) * rd->B.row(row).cwiseAbs().sum()) * xn;
            eres = std::max(eres, std::abs(r(row)) / std::max(scale, 1e-300));
        }
        res.bc_residual = bres;
        res.equation_residual = eres;
        return res;
    }

    // Neutral R on one eigenvalue class by bracketed root finding; the bracket is widened by factors of 2 up to 16x.
    NeutralResult neutral_point(double l, double m, double Sc, BranchKind hint, double R_lo, double R_hi) const {
        if (!(R_lo > 0.0 && R_lo < R_hi)) throw std::invalid_argument("neutral_point: need 0 < R_lo < R_hi");
        auto f = [&](double R) {
            double v = class_max(spectrum({l, m, R, Sc}), hint);
            return std::isfinite(v) ? v : -1e3;
        };
        double flo = f(R_lo), fhi = f(R_hi);
        for (int i = 0; i < 4 && flo > 0.0; ++i) flo = f(R_lo /= 2.0);
        for (int i = 0; i < 4 && fhi < 0.0; ++i) fhi = f(R_hi *= 2.0);
        if (!(flo <= 0.0 && fhi >= 0.0))
            throw BracketError(std::string("neutral_point: no sign change of the ") + to_string(hint) + " growth rate",
                               R_lo, R_hi, flo, fhi);
        auto rr = brent_root_ex(f, R_lo, R_hi, opt_.R_rel_tol * R_hi);
        auto v = spectrum({l, m, rr.x, Sc});
        cplx g = class_leading(v, hint);
        if (!(std::abs(g.real()) < 1e-4 * std::max(1.0, std::abs(g))))
            throw BracketError("neutral_point: growth rate jumps across zero, no neutral crossing", R_lo, R_hi, flo, fhi);
        return {rr.x, std::abs(g.imag()), hint};
    }

    NeutralResult neutral_point(double k, BranchKind hint, std::pair<double, double> bracket, double Sc = 20.0) const {
        return neutral_point(k, 0.0, Sc, hint, bracket.first, bracket.second);
    }

    // Stationary neutral R from the pencil at gamma = 0: At0 x = -R At1 x. Smallest positive real root whose
    // zero eigenvalue is the leading stationary one, polished by one secant step. Also returns the spectrum there.
    std::optional<NeutralResult> stationary_neutral(double l, double m, double Sc, std::vector<cplx>* spec = nullptr) const {
        auto rd = reduced(l, m, Sc);
        auto roots = generalized_eigenvalues(rd->At0, -rd->At1);
        std::vector<double> cand;
        for (const auto& r : roots)
            if (r.real() > 0.0 && std::abs(r.imag()) < 1e-4 * std::abs(r) && std::abs(r) < 1e9) cand.push_back(r.real());
        std::sort(cand.begin(), cand.end());
        for (double R : cand) {
            auto v = spectrum({l, m, R, Sc});
            cplx g = class_leading(v, BranchKind::Stationary);
            if (!(std::abs(g.real()) < 1e-3)) continue;
            double R1 = R * (1.0 + 1e-5);
            double g1 = class_leading(spectrum({l, m, R1, Sc}), BranchKind::Stationary).real();
            if (g1 != g.real()) {
                double Rn = R - g.real() * (R1 - R) / (g1 - g.real());
                if (std::abs(Rn - R) < 1e-3 * R) R = Rn;
            }
            if (spec) *spec = std::move(v);
            return NeutralResult{R, 0.0, BranchKind::Stationary};
        }
        return std::nullopt;
    }

    // Oscillatory neutral R. With a cap (where the oscillatory class is already unstable) the crossing is searched
    // downward from it; otherwise upward from below the seed.
    std::optional<NeutralResult> oscillatory_neutral(double l, double m, double Sc, std::optional<double> R_cap, double seed) const {
        auto f = [&](double R) {
            double v = class_max(spectrum({l, m, R, Sc}), BranchKind::Oscillatory);
            return std::isfinite(v) ? v : -1e3;
        };
        double lo, hi;
        if (R_cap) {
            hi = *R_cap;
            lo = hi / 1.25;
            int it = 0;
            while (f(lo) > 0.0) {
                if (++it > 30 || lo < 1.0) return std::nullopt;
                hi = lo;
                lo /= 1.25;
            }
        } else {
            lo = std::isfinite(seed) && seed > 0.0 ? seed / 1.3 : 25.0;
            int it = 0;
            if (f(lo) > 0.0) {
                hi = lo;
                lo /= 1.3;
                while (f(lo) > 0.0) {
                    if (++it > 20 || lo < 1.0) return std::nullopt;
                    hi = lo;
                    lo /= 1.3;
                }
            } else {
                hi = lo * 1.25;
                while (!(f(hi) > 0.0)) {
                    if (++it > 45) return std::nullopt;
                    lo = hi;
                    hi *= 1.25;
                }
            }
        }
        try {
            return neutral_point(l, m, Sc, BranchKind::Oscillatory, lo, hi);
        } catch (const BracketError&) {
            return std::nullopt;
        }
    }

    struct BranchPoints {
        std::optional<NeutralResult> stationary, oscillatory;
    };

    // Neutral points at k on both classes. The oscillatory one is only kept when it lies below the stationary one.
    BranchPoints neutral_points(double k, double Sc, double osc_seed = std::numeric_limits<double>::quiet_NaN()) const {
        BranchPoints out;
        std::vector<cplx> v;
        out.stationary = stationary_neutral(k, 0.0, Sc, &v);
        if (out.stationary) {
            if (class_max(v, BranchKind::Oscillatory) > 0.0)
                out.oscillatory = oscillatory_neutral(k, 0.0, Sc, out.stationary->R, osc_seed);
        } else {
            out.oscillatory = oscillatory_neutral(k, 0.0, Sc, std::nullopt, osc_seed);
        }
        if (!out.stationary && !out.oscillatory) {
            // near the merger of a complex pair neither class crosses cleanly; take the first crossing of the overall lead
            auto f = [&](double R) { return leading_gamma({k, 0.0, R, Sc}).real(); };
            double lo = std::isfinite(osc_seed) && osc_seed > 0.0 ? osc_seed / 1.3 : 25.0, hi = lo;
            int it = 0;
            while (f(lo) > 0.0 && ++it < 20) lo /= 1.3;
            hi = lo * 1.25;
            while (!(f(hi) > 0.0) && ++it < 60) {
                lo = hi;
                hi *= 1.25;
            }
            if (f(lo) <= 0.0 && f(hi) > 0.0) {
                auto rr = brent_root_ex(f, lo, hi, opt_.R_rel_tol * hi);
                cplx g = leading_gamma({k, 0.0, rr.x, Sc});
                if (std::abs(g.real()) < 1e-3 * std::max(1.0, std::abs(g))) {
                    bool stat = std::abs(g.imag()) < opt_.sigma_floor;
                    NeutralResult r{rr.x, stat ? 0.0 : std::abs(g.imag()), stat ? BranchKind::Stationary : BranchKind::Oscillatory};
                    (stat ? out.stationary : out.oscillatory) = r;
                }
            }
        }
        return out;
    }

    std::vector<std::pair<double, cplx>> growth_curve(double k, const std::vector<double>& R_values, double Sc = 20.0) const {
        std::vector<std::pair<double, cplx>> out;
        out.reserve(R_values.size());
        for (double R : R_values) out.emplace_back(R, leading_gamma({k, 0.0, R, Sc}));
        return out;
    }

    std::optional<NeutralResult> branch_point(double k, BranchKind kind, double Sc, double seed) const {
        if (kind == BranchKind::Stationary) return stationary_neutral(k, 0.0, Sc);
        return neutral_points(k, Sc, seed).oscillatory;
    }

    NeutralCurve trace_neutral_curve(double k_min, double k_max, int n_k, double Sc = 20.0) const {
        if (!(k_min > 0.0 && k_max > k_min && n_k >= 2)) throw std::invalid_argument("trace_neutral_curve: need 0 < k_min < k_max, n_k >= 2");
        NeutralCurve out;
        NeutralBranch st{BranchKind::Stationary, {}, std::nullopt}, os{BranchKind::Oscillatory, {}, std::nullopt};
        double last_osc = std::numeric_limits<double>::quiet_NaN();
        std::optional<double> k_with, k_without;
        for (int i = 0; i < n_k; ++i) {
            double k = k_min + (k_max - k_min) * i / (n_k - 1);
            try {
                auto p = neutral_points(k, Sc, last_osc);
                if (p.stationary) st.points.push_back({k, p.stationary->R, 0.0});
                if (p.oscillatory) {
                    os.points.push_back({k, p.oscillatory->R, p.oscillatory->sigma});
                    last_osc = p.oscillatory->R;
                    k_with = k;
                } else if (p.stationary && k_with && !k_without) {
                    k_without = k;
                }
                if (!p.stationary && !p.oscillatory) out.failures.emplace_back(k, "no neutral point on either branch");
            } catch (const std::exception& e) {
                out.failures.emplace_back(k, e.what());
            }
        }
        if (k_with && k_without) {
            // bisect for the wavenumber where the oscillatory pair reaches the stationary branch
            double a = *k_with, b = *k_without;
            for (int it = 0; it < 6; ++it) {
                double c = 0.5 * (a + b);
                std::vector<cplx> v;
                auto s = stationary_neutral(c, 0.0, Sc, &v);
                if (!s || class_max(v, BranchKind::Oscillatory) > 0.0) a = c;
                else b = c;
            }
            os.k_b = 0.5 * (a + b);
        }
        if (!st.points.empty()) out.branches.push_back(std::move(st));
        if (!os.points.empty()) out.branches.push_back(std::move(os));
        return out;
    }

    // Global minimum over all branch points, refined in k on the owning branch.
    CriticalMode critical_mode(const NeutralCurve& curve, double Sc = 20.0) const {
        const NeutralBranch* best_b = nullptr;
        std::size_t best_i = 0;
        for (const auto& b : curve.branches)
            for (std::size_t i = 0; i < b.points.size(); ++i)
                if (!best_b || b.points[i].R < best_b->points[best_i].R) {
                    best_b = &b;
                    best_i = i;
                }
        if (!best_b) throw std::invalid_argument("critical_mode: no neutral points");
        const auto& pts = best_b->points;
        const BranchKind kind = best_b->kind;
        NeutralPoint best = pts[best_i];
        if (pts.size() >= 3) {
            double a = pts[best_i > 0 ? best_i - 1 : 0].k;
            double b = pts[std::min(best_i + 1, pts.size() - 1)].k;
            if (best_i == 0) a = std::max(0.5 * pts[0].k, pts[0].k - (pts[1].k - pts[0].k));
            if (best_i + 1 == pts.size()) b = pts.back().k + (pts.back().k - pts[pts.size() - 2].k);
            double seed = best.R;
            std::map<double, NeutralPoint> seen;
            auto f = [&](double k) {
                auto r = branch_point(k, kind, Sc, seed);
                if (!r) return std::numeric_limits<double>::max();
                seen[k] = {k, r->R, r->sigma};
                seed = r->R;
                return r->R;
            };
            auto mr = brent_minimize(f, a, b, 1e-4 * best.k);
            auto it = seen.find(mr.x);
            if (it != seen.end() && it->second.R <= best.R) best = it->second;
        }
        CriticalMode cm;
        cm.k_c = best.k;
        cm.R_c = best.R;
        cm.lambda_c = 2.0 * std::numbers::pi / best.k;
        cm.sigma_c = best.sigma;
        cm.overstable = kind == BranchKind::Oscillatory;
        auto v = spectrum({best.k, 0.0, best.R, Sc});
        cplx g = class_leading(v, kind);
        auto ef = eigenfunction({best.k, 0.0, best.R, Sc}, g);
        cm.mode_number = ef.mode_number;
        cm.bc_residual = ef.bc_residual;
        cm.equation_residual = ef.equation_residual;
        if (kind == BranchKind::Oscillatory) cm.sigma_c = std::abs(g.imag());
        return cm;
    }

private:
    template <class Map, class Key, class Val>
    void remember(Map& map, std::deque<Key>& order, const Key& key, const Val& val) const {
        if (map.count(key)) return;
        map.emplace(key, val);
        order.push_back(key);
        while (order.size() > opt_.cache_entries) {
            map.erase(order.front());
            order.pop_front();
        }
    }

    BaseState bs_;
    PerturbationContext ctx_;
    StabilityOptions opt_;
    int N_ = 0;
    RMat D1_, D2_, D3_, D4_;
    RVec Gamma1_, Gamma2_, dn_;
    std::vector<int> boundary_, interior_;
    mutable std::mutex mu_;
    mutable std::map<std::pair<double, double>, std::shared_ptr<const Nonlocal>> nl_cache_;
    mutable std::deque<std::pair<double, double>> nl_order_;
    mutable std::map<std::tuple<double, double, double>, std::shared_ptr<const Reduced>> red_cache_;
    mutable std::deque<std::tuple<double, double, double>> red_order_;
};

inline GrowthRateResult growth_rate(const BaseState& bs, const ModeParams& mp) {
    return StabilitySolver(bs).growth_rate(mp);
}

}  // namespace bioconv
