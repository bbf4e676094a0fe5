#include <gtest/gtest.h>

#include "bioconv/perturb.hpp"

using namespace bioconv;

namespace {

SuspensionParams make(double Vc, double tauH, double omega, double A1, double B, double theta) {
    SuspensionParams p;
    p.Vc = Vc;
    p.tauH = tauH;
    p.omega = omega;
    p.A1 = A1;
    p.B = B;
    p.theta_i_deg = theta;
    return p;
}

BaseState solve(const SuspensionParams& p, int nz = 129) {
    return solve_base_state(p, solve_basic_radiation(p.radiation_params(), 401), nz);
}

CVec sample_theta(const Grid1D& g, double phase = 0.0) {
    CVec t(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        double z = g[i];
        t(i) = cplx(std::sin(std::numbers::pi * z + phase), 0.3 * z * (1 - z)) + 0.2 * std::cos(3 * z);
    }
    return t;
}

double maxabs(const CVec& v) { return v.cwiseAbs().maxCoeff(); }

const BaseState& shared_state() {
    static BaseState b = solve(make(15, 0.5, 0.4, 0.4, 0.26, 40));
    return b;
}

const PerturbationContext& shared_ctx() {
    static PerturbationContext c(shared_state(), AngularQuadrature::build());
    return c;
}

}  // namespace

TEST(AngularQuadrature, Moments) {
    auto q = AngularQuadrature::build();
    double s0 = 0, s1 = 0, s2 = 0, sx2 = 0;
    for (const auto& d : q.directions()) {
        s0 += d.weight;
        s1 += d.weight * d.nu;
        s2 += d.weight * d.nu * d.nu;
        sx2 += d.weight * d.xi * d.xi;
    }
    EXPECT_NEAR(s0, 4 * std::numbers::pi, 1e-12);
    EXPECT_NEAR(s1, 0.0, 1e-12);
    EXPECT_NEAR(s2, 4 * std::numbers::pi / 3, 1e-12);
    EXPECT_NEAR(sx2, 4 * std::numbers::pi / 3, 1e-7);
    EXPECT_EQ(q.directions().size(), 2u * 144u * 64u);
    EXPECT_THROW(AngularQuadrature::build(0, 4), std::invalid_argument);
}

TEST(EigenFunctionInput, ThetaTildeInvariants) {
    Grid1D g = Grid1D::uniform(0, 1, 129);
    auto in = EigenFunctionInput::from_theta(g, sample_theta(g), 1.0, 2.0);
    EXPECT_EQ(in.ThetaTilde(128), cplx(0.0));
    EXPECT_NEAR(in.k(), std::sqrt(5.0), 1e-15);
    CVec d = diff_matrix(g, 1) * in.ThetaTilde;
    EXPECT_LT(maxabs(d - in.Theta), 1e-7);
    auto back = EigenFunctionInput::from_theta_tilde(g, in.ThetaTilde, 1.0, 2.0);
    EXPECT_LT(maxabs(back.Theta - in.Theta), 1e-7);
    EXPECT_THROW(EigenFunctionInput::from_theta(g, CVec::Zero(10), 0, 0), std::invalid_argument);
}

TEST(Collimated, ZeroAndTopValue) {
    const auto& bs = shared_state();
    auto z = EigenFunctionInput::from_theta(bs.z_grid, CVec::Zero(bs.size()), 1, 0);
    EXPECT_EQ(maxabs(g1_collimated(z, bs)), 0.0);
    auto in = EigenFunctionInput::from_theta(bs.z_grid, sample_theta(bs.z_grid), 1, 0);
    EXPECT_EQ(g1_collimated(in, bs)(bs.size() - 1), cplx(0.0));
    BaseState other = solve(make(15, 0.5, 0.4, 0.4, 0.26, 40), 65);
    EXPECT_THROW(g1_collimated(in, other), std::invalid_argument);
}

TEST(Collimated, MatchesRayIntegration) {
    // Synthetic analytic base state; the beam obeys -mu0 dG/dz + tauH n G = -tauH Gc Theta with G(1) = 0.
    const double tauH = 0.8, mu0 = 0.7;
    auto nfun = [](double z) { return 1.0 + 0.5 * std::sin(std::numbers::pi * z); };
    auto taufun = [&](double z) {
        return tauH * ((1 - z) + 0.5 / std::numbers::pi * (1.0 + std::cos(std::numbers::pi * z)));
    };
    auto gc = [&](double z) { return std::exp(-taufun(z) / mu0); };
    auto theta = [](double z) { return cplx(1.0 - 2.0 * z + 3.0 * z * z * z, 0.5 * z * z - z); };
    BaseState bs;
    bs.params.tauH = tauH;
    bs.cos_theta0 = mu0;
    bs.z_grid = Grid1D::uniform(0, 1, 129);
    for (double z : bs.z_grid.points) {
        bs.n_s.push_back(nfun(z));
        bs.tau_of_z.push_back(taufun(z));
        bs.G_s_coll.push_back(gc(z));
    }
    CVec th(bs.size());
    for (std::size_t i = 0; i < bs.size(); ++i) th(i) = theta(bs.z_grid[i]);
    CVec g1 = g1_collimated(EigenFunctionInput::from_theta(bs.z_grid, th, 0.5, 0.5), bs);

    auto rhs = [&](double z, cplx G) { return (tauH * nfun(z) * G + tauH * gc(z) * theta(z)) / mu0; };
    const int steps_per_cell = 200;
    cplx G = 0.0;
    double maxerr = 0.0;
    for (int i = static_cast<int>(bs.size()) - 1; i > 0; --i) {
        double h = -(bs.z_grid[i] - bs.z_grid[i - 1]) / steps_per_cell;
        double z = bs.z_grid[i];
        for (int s = 0; s < steps_per_cell; ++s) {
            cplx k1 = rhs(z, G), k2 = rhs(z + h / 2, G + h / 2 * k1), k3 = rhs(z + h / 2, G + h / 2 * k2),
                 k4 = rhs(z + h, G + h * k3);
            G += h / 6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            z += h;
        }
        maxerr = std::max(maxerr, std::abs(G - g1(i - 1)));
    }
    EXPECT_LT(maxerr, 1e-8);
}

TEST(Diffuse, BasicDiffuseIntensityMoment) {
    // the reconstructed basic diffuse radiance integrates back to G_s - G_s^c
    const auto& ctx = shared_ctx();
    const auto& q = ctx.quadrature();
    RVec sum = RVec::Zero(ctx.size());
    for (std::size_t p = 0; p < q.nu.size(); ++p) sum += 2 * std::numbers::pi * q.nu_weight[p] * ctx.Ld(p);
    RVec ref = ctx.G() - ctx.Gc();
    EXPECT_LT((sum - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff(), 2e-4);
}

TEST(Diffuse, ZeroThetaGivesZero) {
    const auto& ctx = shared_ctx();
    auto in = EigenFunctionInput::from_theta(ctx.grid(), CVec::Zero(ctx.size()), 2, 1);
    auto pf = solve_perturbed_diffuse(in, ctx);
    for (const CVec* v : {&pf.G1c, &pf.G1d, &pf.P, &pf.Q, &pf.S}) EXPECT_EQ(maxabs(*v), 0.0);
}

TEST(Diffuse, NoHorizontalWavenumberGivesNoHorizontalFlux) {
    const auto& ctx = shared_ctx();
    auto in = EigenFunctionInput::from_theta(ctx.grid(), sample_theta(ctx.grid()), 0, 0);
    auto pf = solve_perturbed_diffuse(in, ctx);
    EXPECT_LT(maxabs(pf.P), 1e-13);
    EXPECT_LT(maxabs(pf.Q), 1e-13);
    EXPECT_GT(maxabs(pf.G1d), 1e-3);
    EXPECT_LE(pf.residual_history.back(), 1e-9);
    EXPECT_EQ(pf.iterations, static_cast<int>(pf.residual_history.size()));
}

TEST(Diffuse, RotationalInvariance) {
    const auto& ctx = shared_ctx();
    const double k = 2.7;
    std::vector<std::pair<double, double>> lm = {{k, 0}, {0, k}, {k / std::sqrt(2.0), k / std::sqrt(2.0)}};
    std::vector<PerturbationField> f;
    for (auto [l, m] : lm) f.push_back(solve_perturbed_diffuse(EigenFunctionInput::from_theta(ctx.grid(), sample_theta(ctx.grid()), l, m), ctx));
    for (int i = 1; i < 3; ++i) {
        EXPECT_LT(maxabs(f[i].G1d - f[0].G1d), 1e-8);
        EXPECT_LT(maxabs(f[i].S - f[0].S), 1e-8);
        CVec pi0 = lm[0].first * f[0].P + lm[0].second * f[0].Q;
        CVec pii = lm[i].first * f[i].P + lm[i].second * f[i].Q;
        EXPECT_LT(maxabs(pii - pi0), 1e-8);
    }
}

TEST(Diffuse, Linearity) {
    const auto& ctx = shared_ctx();
    const auto& g = ctx.grid();
    CVec a = sample_theta(g), b = sample_theta(g, 0.7).conjugate();
    cplx al(0.3, -1.2), be(2.0, 0.5);
    auto fa = solve_perturbed_diffuse(EigenFunctionInput::from_theta(g, a, 1.5, 0.5), ctx);
    auto fb = solve_perturbed_diffuse(EigenFunctionInput::from_theta(g, b, 1.5, 0.5), ctx);
    auto fc = solve_perturbed_diffuse(EigenFunctionInput::from_theta(g, al * a + be * b, 1.5, 0.5), ctx);
    EXPECT_LT(maxabs(fc.G1d - al * fa.G1d - be * fb.G1d), 1e-9);
    EXPECT_LT(maxabs(fc.S - al * fa.S - be * fb.S), 1e-9);
    EXPECT_LT(maxabs(fc.P - al * fa.P - be * fb.P), 1e-9);
    EXPECT_LT(maxabs(fc.Q - al * fa.Q - be * fb.Q), 1e-9);
}

TEST(Diffuse, HermitianSymmetry) {
    const auto& ctx = shared_ctx();
    CVec th = sample_theta(ctx.grid()).real().cast<cplx>();
    auto f = solve_perturbed_diffuse(EigenFunctionInput::from_theta(ctx.grid(), th, 1.1, -2.0), ctx);
    auto r = solve_perturbed_diffuse(EigenFunctionInput::from_theta(ctx.grid(), th, -1.1, 2.0), ctx);
    EXPECT_LT(maxabs(r.G1d - f.G1d.conjugate()), 1e-9);
    EXPECT_LT(maxabs(r.S - f.S.conjugate()), 1e-9);
    EXPECT_LT(maxabs(r.P - f.P.conjugate()), 1e-9);
    EXPECT_LT(maxabs(r.Q - f.Q.conjugate()), 1e-9);
}

TEST(Diffuse, SDecomposition) {
    const auto& ctx = shared_ctx();
    auto in = EigenFunctionInput::from_theta(ctx.grid(), sample_theta(ctx.grid()), 2.0, 0.0);
    auto pf = solve_perturbed_diffuse(in, ctx);
    // nu-moment of the diffuse rays, recomputed from the converged moments
    CVec G1 = pf.G1c + pf.G1d;
    CVec nG = (ctx.c() * ctx.n().array() * G1.array()).matrix();
    CVec nS = (ctx.c() * ctx.A1() * ctx.n().array() * pf.S.array()).matrix();
    CVec Sd = CVec::Zero(ctx.size());
    for (const auto& d : ctx.directions()) {
        CVec b = nG + d.nu * nS + (ctx.theta_factor(d.polar).array() * in.Theta.array()).matrix();
        Sd += d.weight * d.nu * ctx.sweep(d.nu, 2.0 * d.xi, b);
    }
    EXPECT_LT(maxabs(pf.S + pf.G1c - Sd), 1e-8);
    EXPECT_LT(maxabs(pf.G1c - g1_collimated(in, shared_state())), 1e-15);
}

TEST(Diffuse, DenseOperatorMatchesIteration) {
    const auto& ctx = shared_ctx();
    const double l = 1.3, m = 2.1;
    auto in = EigenFunctionInput::from_theta(ctx.grid(), sample_theta(ctx.grid()), l, m);
    auto pf = solve_perturbed_diffuse(in, ctx, {1e-12, 5000});
    PerturbationOperator op(ctx, l, m);
    CVec G1d = op.G1d_tilde * in.ThetaTilde + op.G1d_theta * in.Theta;
    CVec Sd = op.Sd_tilde * in.ThetaTilde + op.Sd_theta * in.Theta;
    CVec Pi = op.Pi_tilde * in.ThetaTilde + op.Pi_theta * in.Theta;
    EXPECT_LT(maxabs(G1d - pf.G1d), 1e-10);
    EXPECT_LT(maxabs(Sd - (pf.S + pf.G1c)), 1e-10);
    EXPECT_LT(maxabs(Pi - (l * pf.P + m * pf.Q)), 1e-10);
}

TEST(Diffuse, AngularRefinement) {
    const auto& bs = shared_state();
    PerturbationContext fine(bs, AngularQuadrature::build(32, 8));
    const auto& coarse = shared_ctx();
    auto in = EigenFunctionInput::from_theta(bs.z_grid, sample_theta(bs.z_grid), 2.288, 1.716);
    auto a = solve_perturbed_diffuse(in, coarse);
    auto b = solve_perturbed_diffuse(in, fine);
    EXPECT_LT(maxabs(a.G1d - b.G1d), 1e-6);
    EXPECT_LT(maxabs(a.S - b.S), 1e-6);
    EXPECT_LT(maxabs(a.P - b.P), 1e-6);
    EXPECT_LT(maxabs(a.Q - b.Q), 1e-6);
}

TEST(Diffuse, NonConvergenceReported) {
    const auto& ctx = shared_ctx();
    auto in = EigenFunctionInput::from_theta(ctx.grid(), sample_theta(ctx.grid()), 1, 0);
    try {
        solve_perturbed_diffuse(in, ctx, {1e-9, 2});
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.iterations(), 2);
        EXPECT_GT(e.residual(), 1e-9);
    }
}

TEST(Gamma, NoSwimmingVanishes) {
    auto bs = solve(make(0, 0.5, 0.4, 0.4, 0.26, 40));
    PerturbationContext ctx(bs, AngularQuadrature::build());
    auto in = EigenFunctionInput::from_theta(bs.z_grid, sample_theta(bs.z_grid), 1, 1);
    auto pf = solve_perturbed_diffuse(in, ctx);
    auto g = gamma_coefficients(in, ctx, pf);
    EXPECT_EQ(maxabs(g.Gamma0), 0.0);
    EXPECT_EQ(maxabs(g.Gamma1), 0.0);
    EXPECT_EQ(maxabs(g.Gamma2), 0.0);
}

TEST(Gamma, ZeroThetaKeepsBaseTerms) {
    const auto& ctx = shared_ctx();
    auto in0 = EigenFunctionInput::from_theta(ctx.grid(), CVec::Zero(ctx.size()), 1, 1);
    auto in1 = EigenFunctionInput::from_theta(ctx.grid(), sample_theta(ctx.grid()), 1, 1);
    auto g0 = gamma_coefficients(in0, ctx, solve_perturbed_diffuse(in0, ctx));
    auto g1 = gamma_coefficients(in1, ctx, solve_perturbed_diffuse(in1, ctx));
    EXPECT_EQ(maxabs(g0.Gamma0), 0.0);
    EXPECT_GT(maxabs(g1.Gamma0), 1e-3);
    EXPECT_EQ(maxabs(g0.Gamma1 - g1.Gamma1), 0.0);
    EXPECT_EQ(maxabs(g0.Gamma2 - g1.Gamma2), 0.0);
    PerturbationField pf = solve_perturbed_diffuse(in1, ctx);
    fill_gammas(pf, g1);
    EXPECT_EQ(pf.Gamma1.size(), ctx.size());
}

TEST(Gamma, Gamma1SpotValue) {
    // chain rule with analytic n' and Gc', G' from the optical-depth profile, M'' by differencing
    auto p = make(15, 0.5, 0.4, 0.0, 0.26, 0);
    auto rad = solve_basic_radiation(p.radiation_params(), 401);
    auto bs = solve_base_state(p, rad, 257);
    auto in = EigenFunctionInput::from_theta(bs.z_grid, CVec::Zero(bs.size()), 1, 0);
    PerturbationContext ctx(bs, AngularQuadrature::build(4, 2));
    auto g = gamma_coefficients(in, ctx, solve_perturbed_diffuse(in, ctx));
    const std::size_t i = 128;
    ASSERT_DOUBLE_EQ(bs.z_grid[i], 0.5);

    auto fine = solve_basic_radiation(p.radiation_params(), 1601);
    CubicInterpolant Gt(fine.tau_grid.points, fine.G);
    double t = bs.tau_of_z[i], dt = 1e-4;
    double dGdtau = (-Gt(t + 2 * dt) + 8 * Gt(t + dt) - 8 * Gt(t - dt) + Gt(t - 2 * dt)) / (12 * dt);
    double n = bs.n_s[i], G = bs.G_s[i], Gc = bs.G_s_coll[i], mu0 = bs.cos_theta0;
    double dn = p.Vc * phototaxis_M(G, p.curve) * n;
    double dGc = p.tauH / mu0 * n * Gc;
    double dG = -p.tauH * n * dGdtau;
    double e = 1e-5;
    double d2M = (phototaxis_dMdG(G + e, p.curve) - phototaxis_dMdG(G - e, p.curve)) / (2 * e);
    double dM = phototaxis_dMdG(G, p.curve);
    double ref = p.tauH / mu0 * p.Vc * (dn * Gc * dM + n * dGc * dM + n * Gc * d2M * dG);
    EXPECT_LT(std::abs(g.Gamma1(i).real() - ref) / std::abs(ref), 1e-6) << g.Gamma1(i) << " vs " << ref;
    EXPECT_EQ(g.Gamma1(i).imag(), 0.0);
}

TEST(Diffuse, TransferMatrixMatchesSweep) {
    const auto& ctx = shared_ctx();
    CVec b = sample_theta(ctx.grid());
    for (double nu : {0.7, -0.3, 0.01, -0.002}) {
        CMat T = ctx.transfer(nu, 1.7);
        EXPECT_LT(maxabs(T * b - ctx.sweep(nu, 1.7, b)), 1e-13);
        CMatR S1 = CMatR::Zero(ctx.size(), ctx.size()), Sk = S1;
        ctx.accumulate_transfer(nu, 1.7, 0.5, 2.0, S1, Sk);
        EXPECT_LT((S1 - 0.5 * T).cwiseAbs().maxCoeff(), 1e-15);
        EXPECT_LT((Sk - 2.0 * T).cwiseAbs().maxCoeff(), 1e-14);
    }
}
