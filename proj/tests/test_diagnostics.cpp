#include <cmath>
#include <gtest/gtest.h>

#include "svemp/diagnostics.hpp"

using namespace svemp;

namespace {

SimConfig config(std::size_t steps, std::size_t paths, std::uint64_t seed = 9) {
    SimConfig c;
    c.steps = steps;
    c.paths = paths;
    c.seed = seed;
    return c;
}

const auto zero_x0 = [](double) { return 0.0; };

// Mean over paths of a per-bundle residual, at several grid sizes.
template <class F>
RefinementStudy study(const std::vector<std::size_t>& Ns, std::size_t paths, const Model& model,
                      std::function<double(double)> x0, F residual) {
    std::vector<double> res;
    for (auto N : Ns) {
        auto cfg = config(N, paths);
        cfg.x0 = x0;
        const Simulator sim(cfg, model);
        double s = 0;
        for (std::size_t p = 0; p < paths; ++p) s += residual(sim.simulate_path(p));
        res.push_back(s / paths);
    }
    return refinement_rate(Ns, res);
}

}  // namespace

TEST(Moments, BrownianAndFractional) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    const auto bm = simulate(config(64, 20000), coef::constant(0), coef::constant(1), c, c);
    const auto m2 = moment_sup(bm, 2.0);
    EXPECT_NEAR(m2.value, 1.0, 3.0 * m2.stderr_);
    EXPECT_NEAR(m2.argmax_time, 1.0, 0.1);
    // E|B_1|^q grows in q for q >= 1.
    double prev = 0;
    for (double q : {1.0, 2.0, 3.0, 4.0}) {
        const double v = moment_sup(bm, q).per_time.back();
        EXPECT_GT(v, prev);
        prev = v;
    }
    EXPECT_NEAR(moment_sup(bm, 4.0).per_time.back(), 3.0, 0.15);

    const auto f = KernelSpec::fractional(0.25, 1.0);
    const auto fr = simulate(config(256, 20000), coef::constant(0), coef::constant(1), f, f);
    const auto mf = moment_sup(fr, 2.0);
    // The grid value sits a little below the continuum 2; the discrete variance is
    // the oracle in the engine tests.
    EXPECT_NEAR(mf.value, 2.0, 3.0 * mf.stderr_ + 0.03);
    EXPECT_EQ(mf.argmax_time, 1.0);
}

TEST(Moments, DeterministicAndErrors) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    auto cfg = config(16, 10);
    cfg.x0 = [](double) { return -1.5; };
    const auto det = simulate(cfg, coef::constant(0), coef::constant(0), c, c);
    for (double q : {1.0, 2.5, 3.0}) {
        const auto r = moment_sup(det, q);
        EXPECT_DOUBLE_EQ(r.value, std::pow(1.5, q));
        EXPECT_EQ(r.stderr_, 0.0);
    }
    EXPECT_THROW(moment_sup(det, 0.5), DomainError);
    Ensemble empty;
    empty.config = cfg;
    EXPECT_THROW(moment_sup(empty, 2.0), InsufficientPaths);
}

TEST(Holder, BrownianAndFractionalSlopes) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    const Simulator bm(config(1024, 1000), Model{coef::constant(0), coef::constant(1), c, c});
    HolderOptions opt;
    opt.expected_beta = 0.5;
    const auto h = holder_estimate(bm, 2.0, zero_x0, opt);
    EXPECT_TRUE(h.passed) << h.beta_hat;
    EXPECT_NEAR(h.slope, 1.0, 0.05 * 2);
    EXPECT_GE(h.r2, 0.98);
    EXPECT_EQ(h.gaps.size(), 7u);  // 2..128 steps of 1/1024

    const auto h4 = holder_estimate(bm, 4.0, zero_x0);
    EXPECT_NEAR(h4.slope, 2.0, 0.05 * 4);

    const auto f = KernelSpec::fractional(0.25, 1.0);
    const Simulator fr(config(1024, 1000), Model{coef::constant(0), coef::constant(1), f, f});
    opt.expected_beta = 0.25;
    opt.gamma = 0.5 - 0.25 - 1.0 / 14.0;
    opt.regularity_p = 14.0;
    const auto hf = holder_estimate(fr, 2.0, zero_x0, opt);
    EXPECT_TRUE(hf.passed) << hf.beta_hat;
    ASSERT_TRUE(hf.band_high.has_value());
    EXPECT_NEAR(*hf.band_high, 0.25 - 2.0 / 14.0, 1e-15);

    // Expecting the wrong exponent fails.
    opt.expected_beta = 0.5;
    EXPECT_FALSE(holder_estimate(fr, 2.0, zero_x0, opt).passed);
}

TEST(Holder, SmoothDriftPath) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    const auto ens = simulate(config(512, 3), coef::constant(1), coef::constant(0), c, c);
    const auto h = holder_estimate(ens, 2.0, zero_x0);
    EXPECT_NEAR(h.slope, 2.0, 1e-9);
    EXPECT_THROW(holder_estimate(simulate(config(64, 3), coef::constant(1), coef::constant(0), c, c), 2.0, zero_x0),
                 GridTooCoarse);
    // x0 is removed before differencing.
    auto cfg = config(512, 3);
    cfg.x0 = [](double t) { return std::sin(40.0 * t); };
    const auto shifted = simulate(cfg, coef::constant(1), coef::constant(0), c, c);
    EXPECT_NEAR(holder_estimate(shifted, 2.0, cfg.x0).slope, 2.0, 1e-9);
}

TEST(Ibp, ExactForUnitKernel) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    const auto f = KernelSpec::fractional(0.3, 1.0);
    auto cfg = config(128, 20);
    cfg.x0 = [](double t) { return 1.0 + t; };
    const auto mu = coef::cir_drift(1.0, 1.0);
    const auto ens = simulate(cfg, mu, coef::sqrt_abs(), f, c);
    for (const auto& b : ens.paths) EXPECT_LE(ibp_identity_residual(b, cfg.x0, f, c, mu), 1e-13);

    // sigma = 0: only the drift reconstruction remains, and it is exact.
    const auto e = KernelSpec::exponential(2.0, 1.0);
    const auto det = simulate(cfg, mu, coef::constant(0.0), f, e);
    for (const auto& b : det.paths) EXPECT_LE(ibp_identity_residual(b, cfg.x0, f, e, mu), 1e-13);
}

TEST(Ibp, RefinementForExponentialKernel) {
    const auto e = KernelSpec::exponential(1.0, 1.0);
    const auto mu = coef::linear(1.0, -1.0);
    const auto s = study({256, 512, 1024}, 100, Model{mu, coef::sqrt_abs(), e, e}, [](double) { return 1.0; },
                         [&](const PathBundle& b) { return ibp_identity_residual(b, [](double) { return 1.0; }, e, e, mu); });
    EXPECT_GE(s.rate, 0.5);
    EXPECT_GE(s.r2, 0.95);
    EXPECT_GT(s.residuals.front(), 1e-6);  // a genuine discretization error, not an identity
}

TEST(Ibp, Errors) {
    const auto f = KernelSpec::fractional(0.3, 1.0);
    const auto c = KernelSpec::constant(1.0, 1.0);
    const auto ens = simulate(config(16, 1), coef::constant(0), coef::constant(1), f, f);
    const auto& b = ens.paths.front();
    EXPECT_THROW(ibp_identity_residual(b, zero_x0, f, f, coef::constant(0)), MissingDerivative);
    const auto gen = KernelSpec::general([](double s, double t) { return 1 + s * t; }, 1.0);
    EXPECT_THROW(ibp_identity_residual(b, zero_x0, c, gen, coef::constant(0)), MissingDerivative);
    KernelTraits tr;
    tr.singularity = 0.2;
    tr.partial1 = [](double, double) { return 0.0; };
    const auto sing = KernelSpec::general([](double s, double t) { return std::pow(t - s, -0.2); }, 1.0, tr);
    EXPECT_THROW(ibp_identity_residual(b, zero_x0, c, sing, coef::constant(0)), SingularityError);
    const auto w = VolterraWeights::build(c, {1.0, 32}, Scheme::KernelAveraged);
    EXPECT_THROW(ibp_identity_residual(b, zero_x0, w, c, coef::constant(0)), GridMismatch);
}

TEST(Fubini, CellIntegralRuleIsTheDiscreteAdjoint) {
    const auto f = KernelSpec::fractional(0.25, 1.0);
    const auto e = KernelSpec::exponential(1.0, 1.0);
    auto cfg = config(256, 10);
    cfg.x0 = [](double t) { return std::cos(3 * t); };
    const auto ens = simulate(cfg, coef::linear(0.5, -1.0), coef::sqrt_abs(), e, f);
    for (const auto& b : ens.paths) EXPECT_LE(fubini_identity_residual(b, cfg.x0, e, f), 1e-12);
}

TEST(Fubini, MidpointRuleRefines) {
    const auto f = KernelSpec::fractional(0.25, 1.0);
    const auto s = study({256, 512, 1024}, 100, Model{coef::constant(0), coef::constant(1), f, f}, zero_x0,
                         [&](const PathBundle& b) { return fubini_identity_residual(b, zero_x0, f, f, LagRule::Midpoint); });
    EXPECT_GE(s.rate, 0.5);
    EXPECT_GE(s.r2, 0.95);
}

TEST(Fubini, DeterministicAndUnitKernel) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    auto cfg = config(64, 2);
    cfg.x0 = [](double t) { return t * t - 0.3; };
    const auto det = simulate(cfg, coef::constant(0), coef::constant(0), c, c);
    for (const auto& b : det.paths) EXPECT_LE(fubini_identity_residual(b, cfg.x0, c, c), 1e-12);

    const auto bm = simulate(cfg, coef::constant(0.7), coef::sqrt_abs(), c, c);
    for (const auto& b : bm.paths) {
        EXPECT_LE(fubini_identity_residual(b, cfg.x0, c, c), 1e-12);
        EXPECT_LE(fubini_identity_residual(b, cfg.x0, c, c, LagRule::Midpoint), 1e-12);
    }
}

TEST(Fubini, Errors) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    const auto gen = KernelSpec::general([](double s, double t) { return 1 + s * t; }, 1.0);
    const auto ens = simulate(config(16, 1), coef::constant(0), coef::constant(1), c, c);
    EXPECT_THROW(fubini_identity_residual(ens.paths.front(), zero_x0, gen, c), NotConvolution);
    EXPECT_THROW(fubini_identity_residual(ens.paths.front(), zero_x0, LagIntegrals(c, {1.0, 8}), LagIntegrals(c, {1.0, 8})),
                 GridMismatch);
}

TEST(Refinement, RateFit) {
    const auto s = refinement_rate({100, 200, 400}, {1.0, 0.5, 0.25});
    EXPECT_NEAR(s.rate, 1.0, 1e-12);
    EXPECT_NEAR(s.r2, 1.0, 1e-12);
    EXPECT_THROW(refinement_rate({100}, {1.0}), DomainError);
    EXPECT_THROW(refinement_rate({100, 200}, {1.0}), DomainError);
}

TEST(Convergence, CoupledLevels) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    auto cfg = config(64, 200);
    cfg.x0 = [](double) { return 1.0; };
    const Model model{coef::linear(1.0, -1.0), coef::sqrt_abs(), c, c};
    const auto sims = mollified_simulators(cfg, model, {2, 4, 8, 16});
    const auto rep = convergence_report(sims);
    EXPECT_EQ(rep.pairs.size(), 3u);
    EXPECT_TRUE(rep.monotone);
    EXPECT_EQ(rep.paths_used, 200u);
    for (const auto& p : rep.pairs) {
        EXPECT_TRUE(std::isfinite(p.median_sup));
        EXPECT_LE(p.median_sup, p.q90_sup);
        EXPECT_LE(p.q90_sup, p.max_sup);
        EXPECT_GE(p.ks_distance, 0.0);
        EXPECT_LE(p.ks_distance, 1.0);
    }
    // Materialized ensembles give the same report.
    const auto seq = simulate_mollified_sequence(cfg, model, {2, 4, 8, 16});
    const auto rep2 = convergence_report(seq);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(rep.pairs[k].median_sup, rep2.pairs[k].median_sup);
}

TEST(Convergence, AffineBeyondPlateauAndIdenticalLevels) {
    const auto e = KernelSpec::exponential(1.0, 1.0);
    const Model model{coef::linear(0.1, -0.5), coef::constant(0.2), e, e};
    const auto sims = mollified_simulators(config(64, 100), model, {8, 16, 32});
    const auto rep = convergence_report(sims);
    for (const auto& p : rep.pairs) EXPECT_LT(p.max_sup, 1e-10);

    const Simulator s(config(32, 50), Model{coef::sqrt_abs(), coef::sqrt_abs(), e, e});
    std::map<int, Simulator> same;
    same.emplace(1, s);
    same.emplace(2, s);
    same.emplace(3, s);
    const auto z = convergence_report(same, 0.5);
    EXPECT_EQ(z.probe_time, 0.5);
    for (const auto& p : z.pairs) {
        EXPECT_EQ(p.max_sup, 0.0);
        EXPECT_EQ(p.ks_distance, 0.0);
    }

    std::map<int, Simulator> single;
    single.emplace(4, s);
    const auto one = convergence_report(single);
    EXPECT_TRUE(one.pairs.empty());
    EXPECT_TRUE(one.monotone);
}

TEST(Convergence, Mismatches) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    const Model m{coef::constant(0), coef::constant(1), c, c};
    std::map<int, Simulator> grids;
    grids.emplace(1, Simulator(config(32, 10), m));
    grids.emplace(2, Simulator(config(64, 10), m));
    EXPECT_THROW(convergence_report(grids), GridMismatch);

    std::map<int, Simulator> seeds;
    seeds.emplace(1, Simulator(config(32, 10, 1), m));
    seeds.emplace(2, Simulator(config(32, 10, 2), m));
    EXPECT_THROW(convergence_report(seeds), SeedMismatch);

    std::map<int, Simulator> ok;
    ok.emplace(1, Simulator(config(32, 10), m));
    ok.emplace(2, Simulator(config(32, 10), m));
    EXPECT_THROW(convergence_report(ok, 0.3), DomainError);
}
