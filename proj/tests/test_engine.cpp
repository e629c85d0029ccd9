#include <cmath>
#include <cstring>
#include <gtest/gtest.h>

#include "svemp/sve_engine.hpp"

using namespace svemp;

namespace {

SimConfig config(std::size_t steps, std::size_t paths, std::uint64_t seed = 7) {
    SimConfig c;
    c.steps = steps;
    c.paths = paths;
    c.seed = seed;
    return c;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Moments {
    double mean = 0, var = 0, se_var = 0;
};

// Sample variance of X_i and its standard error from the fourth moment.
Moments moments_at(const Ensemble& e, std::size_t i) {
    const double n = static_cast<double>(e.size());
    double m = 0;
    for (const auto& b : e.paths) m += b.X[i];
    m /= n;
    double m2 = 0, m4 = 0;
    for (const auto& b : e.paths) {
        const double d = b.X[i] - m;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    return {m, m2, std::sqrt((m4 - m2 * m2) / n)};
}

}  // namespace

TEST(Engine, BundleInvariants) {
    const auto k = KernelSpec::fractional(0.3, 1.0);
    auto cfg = config(64, 50);
    cfg.x0 = [](double t) { return 1.0 + t; };
    const auto ens = simulate(cfg, coef::cir_drift(1.0, 1.0), coef::sqrt_abs(), k, k);
    for (const auto& b : ens.paths) {
        EXPECT_EQ(b.A[0], 0.0);
        EXPECT_EQ(b.M[0], 0.0);
        EXPECT_EQ(b.Z[0], 0.0);
        EXPECT_EQ(b.X[0], 1.0);
        for (std::size_t i = 0; i <= 64; ++i) EXPECT_EQ(b.Z[i], b.A[i] + b.M[i]);
        // Differences of the running sums carry rounding from the sums themselves.
        for (std::size_t j = 0; j < 64; ++j) {
            EXPECT_NEAR(b.A[j + 1] - b.A[j], (1.0 - b.X[j]) * b.grid.dt(), 1e-14 * (1 + std::abs(b.A[j])));
            EXPECT_NEAR(b.M[j + 1] - b.M[j], std::sqrt(std::abs(b.X[j])) * b.dB[j], 1e-14 * (1 + std::abs(b.M[j])));
        }
    }
}

TEST(Engine, IncrementsHaveGridVariance) {
    const auto c = KernelSpec::constant(1.0, 2.0);
    auto cfg = config(16, 20000);
    cfg.T = 2.0;
    const auto ens = simulate(cfg, coef::constant(0.0), coef::constant(1.0), c, c);
    double s2 = 0;
    std::size_t n = 0;
    for (const auto& b : ens.paths)
        for (double d : b.dB) {
            s2 += d * d;
            ++n;
        }
    const double var = s2 / n, dt = 2.0 / 16;
    EXPECT_NEAR(var, dt, 4.0 * dt * std::sqrt(2.0 / n));
}

TEST(Engine, DeterministicAcrossThreads) {
    const auto k = KernelSpec::fractional(0.25, 1.0);
    auto cfg = config(128, 200, 99);
    cfg.x0 = [](double) { return 1.0; };
    const auto serial = simulate(cfg, coef::linear(1.0, -1.0), coef::sqrt_abs(), k, k);
    cfg.threads = 4;
    const auto parallel = simulate(cfg, coef::linear(1.0, -1.0), coef::sqrt_abs(), k, k);
    for (std::size_t p = 0; p < 200; ++p) {
        EXPECT_TRUE(bitwise_equal(serial.paths[p].X, parallel.paths[p].X)) << p;
        EXPECT_TRUE(bitwise_equal(serial.paths[p].dB, parallel.paths[p].dB)) << p;
    }
    // The lazy simulator reproduces the same paths.
    const Simulator lazy(cfg, Model{coef::linear(1.0, -1.0), coef::sqrt_abs(), k, k});
    EXPECT_TRUE(bitwise_equal(lazy.simulate_path(137).X, serial.paths[137].X));

    cfg.seed = 100;
    const auto other = simulate(cfg, coef::linear(1.0, -1.0), coef::sqrt_abs(), k, k);
    EXPECT_FALSE(bitwise_equal(other.paths[0].X, serial.paths[0].X));
}

TEST(Engine, ReconstructionIsExact) {
    auto cfg = config(96, 20);
    cfg.x0 = [](double t) { return std::cos(t); };
    const auto cases = {std::pair{KernelSpec::fractional(0.4, 1.0), KernelSpec::fractional(0.2, 1.0)},
                        std::pair{KernelSpec::exponential(2.0, 1.0), KernelSpec::constant(0.5, 1.0)},
                        std::pair{KernelSpec::general([](double s, double t) { return 1.0 + s * t; }, 1.0),
                                  KernelSpec::exponential(0.5, 1.0)}};
    for (const auto& [km, ks] : cases) {
        for (auto scheme : {Scheme::KernelAveraged, Scheme::LeftPoint}) {
            if (scheme == Scheme::LeftPoint && (km.is_singular() || ks.is_singular())) continue;
            cfg.scheme = scheme;
            const auto ens = simulate(cfg, coef::sin_tx(), coef::linear(0.5, 0.3), km, ks);
            for (const auto& b : ens.paths)
                EXPECT_TRUE(bitwise_equal(reconstruct(cfg.x0, km, ks, b), b.X)) << km.label() << " " << to_string(scheme);
        }
    }
}

TEST(Engine, ReconstructionExamples) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    PathBundle b;
    b.resize({1.0, 8});
    const auto x0 = [](double t) { return t * t; };
    auto x = reconstruct(x0, c, KernelSpec::fractional(0.3, 1.0), b);
    for (std::size_t i = 0; i <= 8; ++i) EXPECT_EQ(x[i], b.grid.time(i) * b.grid.time(i));

    for (std::size_t i = 1; i <= 8; ++i) {
        b.A[i] = b.A[i - 1] + 0.1 * i;
        b.M[i] = b.M[i - 1] - 0.05 * i * i;
        b.Z[i] = b.A[i] + b.M[i];
    }
    x = reconstruct(x0, c, c, b);
    for (std::size_t i = 0; i <= 8; ++i) EXPECT_NEAR(x[i], x0(b.grid.time(i)) + b.Z[i], 1e-15);

    PathBundle other;
    other.resize({1.0, 16});
    const auto w = VolterraWeights::build(c, {1.0, 8}, Scheme::KernelAveraged);
    EXPECT_THROW(reconstruct(x0, w, w, other), GridMismatch);
}

TEST(Engine, SchemesCoincideForUnitKernel) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    auto cfg = config(64, 30);
    cfg.x0 = [](double) { return 0.5; };
    cfg.scheme = Scheme::LeftPoint;
    const auto left = simulate(cfg, coef::cir_drift(2.0, 1.0), coef::sqrt_abs(), c, c);
    cfg.scheme = Scheme::KernelAveraged;
    const auto avg = simulate(cfg, coef::cir_drift(2.0, 1.0), coef::sqrt_abs(), c, c);
    for (std::size_t p = 0; p < 30; ++p) EXPECT_TRUE(bitwise_equal(left.paths[p].X, avg.paths[p].X));
    // And X is the Euler scheme itself.
    for (const auto& b : avg.paths)
        for (std::size_t i = 0; i <= 64; ++i) EXPECT_NEAR(b.X[i], 0.5 + b.Z[i], 1e-14);
}

TEST(Engine, DeterministicCase) {
    const auto k = KernelSpec::fractional(0.3, 1.0);
    auto cfg = config(50, 3);
    cfg.x0 = [](double t) { return std::cos(t); };
    const auto ens = simulate(cfg, coef::constant(0.0), coef::constant(0.0), k, k);
    for (const auto& b : ens.paths)
        for (std::size_t i = 0; i <= 50; ++i) EXPECT_EQ(b.X[i], std::cos(b.grid.time(i)));
}

TEST(Engine, BrownianSecondMoment) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    const auto ens = simulate(config(32, 40000), coef::constant(0.0), coef::constant(1.0), c, c);
    const auto m = moments_at(ens, 32);
    EXPECT_NEAR(m.var, 1.0, 3.0 * m.se_var);
    for (const auto& b : ens.paths) {
        double acc = 0;
        for (std::size_t i = 0; i < 32; ++i) acc += b.dB[i];
        EXPECT_NEAR(b.X[32], acc, 1e-12);
    }
}

TEST(Engine, GaussianVarianceMatchesWeights) {
    // mu = 0, sigma = 1: Var X_N = dt * sum_j w_j^2 with w_j the cell averages; the
    // oracle uses the closed-form power-law cell integral directly.
    const double alpha = 0.25;
    const std::size_t N = 256;
    const auto k = KernelSpec::fractional(alpha, 1.0);
    const auto ens = simulate(config(N, 20000, 3), coef::constant(0.0), coef::constant(1.0), k, k);
    const double dt = 1.0 / N;
    double discrete = 0;
    for (std::size_t j = 0; j < N; ++j) {
        const double a = 1.0 - j * dt, b = 1.0 - (j + 1) * dt;  // gaps at the cell ends
        const double w = (std::pow(a, 1 - alpha) - std::pow(b, 1 - alpha)) / (1 - alpha) / dt;
        discrete += w * w * dt;
    }
    const auto m = moments_at(ens, N);
    EXPECT_NEAR(m.var, discrete, 3.0 * m.se_var);
    EXPECT_NEAR(discrete, 2.0, 0.03);  // continuum value 1 / (1 - 2 alpha)

    const double lam = 1.5;
    const auto e = KernelSpec::exponential(lam, 1.0);
    const auto ee = simulate(config(128, 20000, 4), coef::constant(0.0), coef::constant(1.0), e, e);
    const auto me = moments_at(ee, 128);
    EXPECT_NEAR(me.var, (1 - std::exp(-2 * lam)) / (2 * lam), 3.0 * me.se_var + 1e-3);
}

TEST(Engine, IncrementScaling) {
    const double alpha = 0.25;
    const std::size_t N = 1024;
    const auto k = KernelSpec::fractional(alpha, 1.0);
    const Simulator sim(config(N, 1500, 11), Model{coef::constant(0.0), coef::constant(1.0), k, k});
    std::vector<double> lx, ly;
    for (std::size_t lag = 4; lag <= 128; lag *= 2) {
        double s = 0;
        std::size_t n = 0;
        for (std::size_t p = 0; p < sim.size(); ++p) {
            const auto b = sim.simulate_path(p);
            for (std::size_t i = N / 2; i + lag <= N; i += lag) {
                const double d = b.X[i + lag] - b.X[i];
                s += d * d;
                ++n;
            }
        }
        lx.push_back(std::log(lag / double(N)));
        ly.push_back(std::log(s / n));
    }
    EXPECT_NEAR(stats::linear_fit(lx, ly).slope, 1.0 - 2.0 * alpha, 0.05);
}

TEST(Engine, LeftPointFallsBackForSingularKernels) {
    const auto k = KernelSpec::fractional(0.2, 1.0);
    auto cfg = config(16, 4);
    cfg.scheme = Scheme::LeftPoint;
    const auto ens = simulate(cfg, coef::constant(0.0), coef::constant(1.0), k, k);
    EXPECT_EQ(ens.config.scheme, Scheme::KernelAveraged);
    ASSERT_FALSE(ens.log.empty());
    EXPECT_NE(ens.log.front().find("kernel averaging"), std::string::npos);
    EXPECT_THROW(VolterraWeights::build(k, {1.0, 16}, Scheme::LeftPoint), SingularityError);
}

TEST(Engine, WeightStorage) {
    const TimeGrid g{1.0, 32};
    using S = VolterraWeights::Storage;
    EXPECT_EQ(VolterraWeights::build(KernelSpec::constant(2.0, 1.0), g, Scheme::KernelAveraged).storage(), S::Constant);
    const auto frac = VolterraWeights::build(KernelSpec::fractional(0.3, 1.0), g, Scheme::KernelAveraged);
    EXPECT_EQ(frac.storage(), S::Toeplitz);
    const auto gen = KernelSpec::general([](double s, double t) { return std::pow(t - s, -0.3); }, 1.0,
                                         KernelTraits{0.3, std::nullopt, {}, "general-frac"});
    const auto packed = VolterraWeights::build(gen, g, Scheme::KernelAveraged);
    EXPECT_EQ(packed.storage(), S::Packed);
    // Property: Toeplitz and packed storage describe the same weights.
    for (std::size_t i = 1; i <= 32; ++i)
        for (std::size_t j = 0; j < i; ++j)
            EXPECT_NEAR(packed.weight(j, i), frac.weight(j, i), 1e-9 * frac.weight(j, i)) << j << " " << i;
    EXPECT_THROW(frac.weight(3, 3), DomainError);
}

TEST(Engine, NonFiniteStateAborts) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    auto cfg = config(64, 10);
    cfg.x0 = [](double) { return 1.0; };
    const Coefficient explode{[](double, double x) { return 1e300 * x; }, 1e300, "explode"};
    try {
        simulate(cfg, explode, coef::constant(0.0), c, c);
        FAIL() << "expected NonFiniteState";
    } catch (const NonFiniteState& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("path 0"), std::string::npos);
        EXPECT_NE(msg.find("step"), std::string::npos);
    }
    const Simulator sim(cfg, Model{explode, coef::constant(0.0), c, c});
    const auto b = sim.simulate_path(3);
    EXPECT_TRUE(b.aborted);
    EXPECT_GT(b.abort_step, 0u);
}

TEST(Engine, ConfigValidation) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    EXPECT_THROW(simulate(config(1, 10), coef::constant(0), coef::constant(1), c, c), DomainError);
    EXPECT_THROW(simulate(config(8, 0), coef::constant(0), coef::constant(1), c, c), DomainError);
}

TEST(Engine, MollifiedSequenceCoupling) {
    const auto k = KernelSpec::fractional(0.2, 1.0);
    auto cfg = config(64, 40);
    cfg.x0 = [](double) { return 1.0; };
    const Model model{coef::constant(0.0), coef::sqrt_abs(), k, k};
    const auto seq = simulate_mollified_sequence(cfg, model, {2, 4, 8, 16});
    for (std::size_t p = 0; p < 40; ++p)
        EXPECT_TRUE(bitwise_equal(seq.at(2).paths[p].dB, seq.at(16).paths[p].dB));

    // Median sup difference between consecutive levels does not increase.
    double prev = std::numeric_limits<double>::infinity();
    for (auto [a, b] : {std::pair{2, 4}, {4, 8}, {8, 16}}) {
        std::vector<double> sups;
        for (std::size_t p = 0; p < 40; ++p) {
            double s = 0;
            for (std::size_t i = 0; i <= 64; ++i)
                s = std::max(s, std::abs(seq.at(a).paths[p].X[i] - seq.at(b).paths[p].X[i]));
            sups.push_back(s);
        }
        const double med = stats::quantile(sups, 0.5);
        EXPECT_LE(med, prev + 1e-12) << a << "->" << b;
        prev = med;
    }

    // Singleton level equals simulate() with the mollified coefficients.
    const auto single = simulate_mollified_sequence(cfg, model, {8});
    const auto direct = simulate(cfg, mollify(model.mu, 8).as_coefficient(),
                                 mollify(model.sigma, 8).as_coefficient(), k, k);
    for (std::size_t p = 0; p < 40; ++p) EXPECT_TRUE(bitwise_equal(single.at(8).paths[p].X, direct.paths[p].X));

    // The lazy per-level simulators agree with the materialized sequence.
    const auto sims = mollified_simulators(cfg, model, {2, 4, 8, 16});
    EXPECT_TRUE(bitwise_equal(sims.at(4).simulate_path(5).X, seq.at(4).paths[5].X));
}

TEST(Engine, MollifiedAffineBeyondPlateauIsExact) {
    const auto k = KernelSpec::exponential(1.0, 1.0);
    auto cfg = config(64, 20);
    const Model model{coef::linear(0.2, -0.5), coef::constant(0.3), k, k};
    const auto seq = simulate_mollified_sequence(cfg, model, {8, 16});
    for (std::size_t p = 0; p < 20; ++p)
        for (std::size_t i = 0; i <= 64; ++i)
            EXPECT_NEAR(seq.at(8).paths[p].X[i], seq.at(16).paths[p].X[i], 1e-10);
}

TEST(Engine, MapFoldOrder) {
    const auto c = KernelSpec::constant(1.0, 1.0);
    auto cfg = config(8, 3000);
    cfg.threads = 3;
    const Simulator sim(cfg, Model{coef::constant(0), coef::constant(1), c, c});
    std::vector<std::size_t> seen;
    double total = 0;
    map_fold(sim, [](const PathBundle& b) { return b.X.back(); },
             [&](std::size_t i, double v) {
                 seen.push_back(i);
                 total += v;
             },
             512);
    ASSERT_EQ(seen.size(), 3000u);
    for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], i);
    double serial = 0;
    for (std::size_t p = 0; p < 3000; ++p) serial += sim.simulate_path(p).X.back();
    EXPECT_EQ(total, serial);
}
