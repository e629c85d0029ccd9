#pragma once

// Moment and Hoelder estimates, the two pathwise identities used to pass to the
// limit (integration by parts for smooth kernels, Fubini for convolution
// kernels), and coupled convergence of the mollified sequence.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svemp/errors.hpp"
#include "svemp/kernels.hpp"
#include "svemp/parallel.hpp"
#include "svemp/stats.hpp"
#include "svemp/sve_engine.hpp"

namespace svemp {

struct MomentReport {
    double q = 2.0;
    double value = 0.0;
    double argmax_time = 0.0;
    double stderr_ = 0.0;
    std::vector<double> per_time;
    std::size_t paths_used = 0;
};

/// max over grid times of the empirical E|X_t|^q.
template <PathSource Src>
MomentReport moment_sup(const Src& src, double q) {
    if (!(q >= 1.0)) throw DomainError("moment_sup: q must be >= 1");
    if (src.size() == 0) throw InsufficientPaths("moment_sup: empty ensemble");
    const std::size_t n = src.grid().N + 1;
    // Welford accumulators per grid time, folded in path order.
    std::vector<double> mean(n, 0.0), m2(n, 0.0);
    std::size_t used = 0;
    map_fold(
        src,
        [&](const PathBundle& b) {
            std::vector<double> v;
            if (b.aborted) return v;
            v.resize(n);
            for (std::size_t i = 0; i < n; ++i) v[i] = std::pow(std::abs(b.X[i]), q);
            return v;
        },
        [&](std::size_t, std::vector<double>&& v) {
            if (v.empty()) return;
            ++used;
            const auto k = static_cast<double>(used);
            for (std::size_t i = 0; i < n; ++i) {
                const double d = v[i] - mean[i];
                mean[i] += d / k;
                m2[i] += d * (v[i] - mean[i]);
            }
        });
    if (used == 0) throw InsufficientPaths("moment_sup: every path aborted");
    MomentReport rep;
    rep.q = q;
    rep.paths_used = used;
    rep.per_time.resize(n);
    const auto m = static_cast<double>(used);
    std::size_t arg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        rep.per_time[i] = mean[i];
        if (rep.per_time[i] > rep.per_time[arg]) arg = i;
    }
    rep.value = rep.per_time[arg];
    rep.argmax_time = src.grid().time(arg);
    if (used > 1) rep.stderr_ = std::sqrt(m2[arg] / (m - 1.0) / m);
    return rep;
}

struct HolderReport {
    double p = 2.0;
    std::vector<double> gaps;
    std::vector<double> moments;
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double beta_hat = 0.0;
    double band_low = 0.0;
    std::optional<double> band_high;
    std::optional<double> expected_beta;
    double tolerance = 0.05;
    double min_r2 = 0.98;
    bool passed = false;
};

struct HolderOptions {
    /// (p, gamma) of the kernel regularity assumption; the guaranteed Hoelder
    /// exponents form the band (0, gamma - 1/p).
    std::optional<double> gamma;
    std::optional<double> regularity_p;
    /// When given, beta_hat must also lie within `tolerance` of it.
    std::optional<double> expected_beta;
    double tolerance = 0.05;
    double min_r2 = 0.98;
    /// Smallest gap in grid steps and largest gap as a fraction of T.
    std::size_t min_gap_steps = 2;
    double max_gap_fraction = 0.125;
};

/// Regresses log E|(X_t' - x0(t')) - (X_t - x0(t))|^p on log(t' - t) over dyadic
/// gaps, using non-overlapping increments of every path.
template <PathSource Src>
HolderReport holder_estimate(const Src& src, double p, const std::function<double(double)>& x0,
                             const HolderOptions& opt = {}) {
    if (!(p > 0.0)) throw DomainError("holder_estimate: p must be positive");
    const TimeGrid g = src.grid();
    std::vector<std::size_t> lags;
    for (std::size_t h = std::max<std::size_t>(opt.min_gap_steps, 1);
         static_cast<double>(h) * g.dt() <= opt.max_gap_fraction * g.T * (1.0 + 1e-12); h *= 2)
        lags.push_back(h);
    if (lags.size() < 5)
        throw GridTooCoarse("holder_estimate: " + std::to_string(lags.size()) +
                            " dyadic gap scales on the grid, need 5");
    std::vector<double> x0v(g.N + 1);
    for (std::size_t i = 0; i <= g.N; ++i) x0v[i] = x0(g.time(i));

    std::vector<double> sum(lags.size(), 0.0);
    std::vector<std::size_t> count(lags.size(), 0);
    map_fold(
        src,
        [&](const PathBundle& b) {
            std::vector<double> v;
            if (b.aborted) return v;
            v.assign(lags.size(), 0.0);
            for (std::size_t l = 0; l < lags.size(); ++l) {
                const std::size_t h = lags[l];
                for (std::size_t i = 0; i + h <= g.N; i += h) {
                    const double inc = (b.X[i + h] - x0v[i + h]) - (b.X[i] - x0v[i]);
                    v[l] += std::pow(std::abs(inc), p);
                }
            }
            return v;
        },
        [&](std::size_t, std::vector<double>&& v) {
            if (v.empty()) return;
            for (std::size_t l = 0; l < lags.size(); ++l) {
                sum[l] += v[l];
                count[l] += g.N / lags[l];
            }
        });

    HolderReport rep;
    rep.p = p;
    rep.tolerance = opt.tolerance;
    rep.min_r2 = opt.min_r2;
    rep.expected_beta = opt.expected_beta;
    std::vector<double> lx, ly;
    for (std::size_t l = 0; l < lags.size(); ++l) {
        if (count[l] == 0) throw InsufficientPaths("holder_estimate: every path aborted");
        const double gap = static_cast<double>(lags[l]) * g.dt();
        const double m = sum[l] / static_cast<double>(count[l]);
        rep.gaps.push_back(gap);
        rep.moments.push_back(m);
        lx.push_back(std::log(gap));
        ly.push_back(std::log(m));
    }
    const auto fit = stats::linear_fit(lx, ly);
    rep.slope = fit.slope;
    rep.intercept = fit.intercept;
    rep.r2 = fit.r2;
    rep.beta_hat = fit.slope / p;
    if (opt.gamma && opt.regularity_p) rep.band_high = *opt.gamma - 1.0 / *opt.regularity_p;
    rep.passed = std::isfinite(rep.beta_hat) && rep.beta_hat >= rep.band_low - opt.tolerance &&
                 rep.r2 >= opt.min_r2;
    if (opt.expected_beta)
        rep.passed = rep.passed && std::abs(rep.beta_hat - *opt.expected_beta) <= opt.tolerance;
    return rep;
}

namespace detail {

/// Drift increments mu(t_j, X_j) dt accumulated exactly as the engine does.
inline void drift_increments(const PathBundle& b, const Coefficient& mu, std::vector<double>& A,
                             std::vector<double>& dA) {
    const TimeGrid g = b.grid;
    const double dt = g.dt();
    A.assign(g.N + 1, 0.0);
    dA.assign(g.N, 0.0);
    for (std::size_t j = 0; j < g.N; ++j) {
        A[j + 1] = A[j] + mu(g.time(j), b.X[j]) * dt;
        dA[j] = A[j + 1] - A[j];
    }
}

}  // namespace detail

/// sup_i |X_i - x0(t_i) - sum_j Kbar_mu(j,i) mu(t_j,X_j) dt - K_sigma(t_i,t_i) M_i
///        + sum_j M_j d/ds K_sigma(t_j,t_i) dt|,
/// the discrete residual of integrating the sigma term by parts. `w_mu` must be
/// the drift weights that generated the bundle.
inline double ibp_identity_residual(const PathBundle& b, const std::function<double(double)>& x0,
                                    const VolterraWeights& w_mu, const KernelSpec& k_sigma,
                                    const Coefficient& mu) {
    if (!k_sigma.has_partial1())
        throw MissingDerivative("ibp_identity_residual: kernel " + k_sigma.label() +
                                " has no d/ds K");
    if (k_sigma.is_singular())
        throw SingularityError("ibp_identity_residual: kernel " + k_sigma.label() +
                               " is unbounded on the diagonal");
    const TimeGrid g = b.grid;
    if (!(w_mu.grid() == g) || b.X.size() != g.N + 1)
        throw GridMismatch("ibp_identity_residual: bundle grid does not match the weights");
    std::vector<double> A, dA;
    detail::drift_increments(b, mu, A, dA);
    const double dt = g.dt();
    double worst = 0.0;
    for (std::size_t i = 0; i <= g.N; ++i) {
        const double ti = g.time(i);
        const double drift = w_mu.row_sum(i, dA, A);
        double parts = 0.0;
        for (std::size_t j = 0; j < i; ++j) parts += b.M[j] * k_sigma.partial1(g.time(j), ti);
        const double stoch = k_sigma(ti, ti) * b.M[i] - parts * dt;
        const double r = b.X[i] - ((x0(ti) + drift) + stoch);
        if (!std::isfinite(r)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

inline double ibp_identity_residual(const PathBundle& b, const std::function<double(double)>& x0,
                                    const KernelSpec& k_mu, const KernelSpec& k_sigma,
                                    const Coefficient& mu) {
    if (!k_sigma.has_partial1())
        throw MissingDerivative("ibp_identity_residual: kernel " + k_sigma.label() +
                                " has no d/ds K");
    return ibp_identity_residual(b, x0, VolterraWeights::build(k_mu, b.grid, b.scheme), k_sigma, mu);
}

enum class LagRule {
    /// Exact cell integrals; with trapezoidal time integrals this is the discrete
    /// adjoint of the kernel-averaged scheme.
    CellIntegral,
    /// Midpoint value times dt; an independent quadrature of the same integral.
    Midpoint
};

/// Convolution weights over lags: L[m] ~ int_{(m-1)dt}^{m dt} K(u) du.
class LagIntegrals {
public:
    LagIntegrals(const KernelSpec& k, const TimeGrid& g, LagRule rule = LagRule::CellIntegral)
        : grid_(g), cells_(g.N + 1, 0.0) {
        if (!k.is_convolution())
            throw NotConvolution("fubini_identity_residual: kernel " + k.label() +
                                 " is not of convolution form");
        const double dt = g.dt();
        for (std::size_t m = 1; m <= g.N; ++m)
            cells_[m] = rule == LagRule::CellIntegral
                            ? cell_integral(k, 0.0, dt, static_cast<double>(m) * dt)
                            : k.profile((static_cast<double>(m) - 0.5) * dt) * dt;
    }
    /// Weight of cell [t_j, t_{j+1}] in int_0^{t_i} K(t_i - s) ds, j < i.
    double operator()(std::size_t j, std::size_t i) const { return cells_[i - j]; }
    const TimeGrid& grid() const { return grid_; }

private:
    TimeGrid grid_;
    std::vector<double> cells_;
};

/// sup_i |trap int_0^{t_i} X - trap int_0^{t_i} x0 - sum_j c_j(t_i) (A_j + A_{j+1})/2
///        - sum_j c'_j(t_i) (M_j + M_{j+1})/2|, c_j the kernel cell integrals.
inline double fubini_identity_residual(const PathBundle& b, const std::function<double(double)>& x0,
                                       const LagIntegrals& c_mu, const LagIntegrals& c_sigma) {
    const TimeGrid g = b.grid;
    if (!(c_mu.grid() == g) || !(c_sigma.grid() == g) || b.X.size() != g.N + 1)
        throw GridMismatch("fubini_identity_residual: bundle grid does not match");
    const double dt = g.dt();
    double lhs = 0.0, init = 0.0, worst = 0.0;
    double x0_prev = x0(0.0);
    for (std::size_t i = 1; i <= g.N; ++i) {
        const double x0_i = x0(g.time(i));
        lhs += 0.5 * (b.X[i - 1] + b.X[i]) * dt;
        init += 0.5 * (x0_prev + x0_i) * dt;
        x0_prev = x0_i;
        double conv = 0.0;
        for (std::size_t j = 0; j < i; ++j)
            conv += c_mu(j, i) * 0.5 * (b.A[j] + b.A[j + 1]) +
                    c_sigma(j, i) * 0.5 * (b.M[j] + b.M[j + 1]);
        const double r = lhs - (init + conv);
        if (!std::isfinite(r)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

inline double fubini_identity_residual(const PathBundle& b, const std::function<double(double)>& x0,
                                       const KernelSpec& k_mu, const KernelSpec& k_sigma,
                                       LagRule rule = LagRule::CellIntegral) {
    return fubini_identity_residual(b, x0, LagIntegrals(k_mu, b.grid, rule),
                                    LagIntegrals(k_sigma, b.grid, rule));
}

struct RefinementStudy {
    std::vector<std::size_t> steps;
    std::vector<double> residuals;
    double rate = 0.0;
    double r2 = 0.0;
};

/// Fits residual ~ C N^{-rate}.
inline RefinementStudy refinement_rate(std::vector<std::size_t> steps, std::vector<double> residuals) {
    if (steps.size() != residuals.size() || steps.size() < 2)
        throw DomainError("refinement_rate: need at least two (N, residual) pairs");
    RefinementStudy s{std::move(steps), std::move(residuals), 0.0, 0.0};
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < s.steps.size(); ++k) {
        lx.push_back(std::log(static_cast<double>(s.steps[k])));
        ly.push_back(std::log(std::max(s.residuals[k], std::numeric_limits<double>::min())));
    }
    const auto fit = stats::linear_fit(lx, ly);
    s.rate = -fit.slope;
    s.r2 = fit.r2;
    return s;
}

struct LevelPair {
    int from = 0, to = 0;
    double median_sup = 0.0;
    double q90_sup = 0.0;
    double max_sup = 0.0;
    double ks_distance = 0.0;
};

struct ConvergenceReport {
    std::vector<int> levels;
    double probe_time = 0.0;
    std::vector<LevelPair> pairs;
    bool monotone = true;
    bool monotone_q90 = true;
    std::size_t paths_used = 0;
    std::string note =
        "coupled pathwise differences and marginal CDF distances are evidence of convergence, "
        "not a proof";
};

/// Coupled sup-norm differences between consecutive levels. Every path index is
/// generated once per level and compared across levels.
template <PathSource Src>
ConvergenceReport convergence_report(const std::map<int, Src>& sequence,
                                     std::optional<double> probe_time = std::nullopt) {
    ConvergenceReport rep;
    if (sequence.empty()) return rep;
    const Src& first = sequence.begin()->second;
    const TimeGrid g = first.grid();
    std::size_t paths = first.size();
    for (const auto& [n, src] : sequence) {
        rep.levels.push_back(n);
        if (!(src.grid() == g)) throw GridMismatch("convergence_report: level grids differ");
        if (src.seed() != first.seed())
            throw SeedMismatch("convergence_report: levels are not driven by the same seed");
        paths = std::min(paths, src.size());
    }
    const double tp = probe_time.value_or(g.T);
    const double pos = tp / g.dt();
    if (tp < 0.0 || tp > g.T * (1.0 + 1e-12) || std::abs(pos - std::round(pos)) > 1e-9 * (1.0 + pos))
        throw DomainError("convergence_report: probe time is not a grid point");
    const auto probe = static_cast<std::size_t>(std::llround(pos));
    rep.probe_time = g.time(probe);
    const std::size_t L = rep.levels.size();
    if (L < 2) return rep;

    std::vector<const Src*> srcs;
    for (const auto& kv : sequence) srcs.push_back(&kv.second);
    // Per path: sup differences for the L-1 pairs, then probe values for the L levels.
    std::vector<std::vector<double>> per_path(paths);
    parallel_for(paths, first.threads(), [&](unsigned, std::size_t p) {
        std::vector<std::vector<double>> xs(L);
        bool aborted = false;
        for (std::size_t l = 0; l < L; ++l)
            srcs[l]->with_path(p, [&](const PathBundle& b) {
                aborted = aborted || b.aborted;
                xs[l] = b.X;
            });
        if (aborted) return;
        std::vector<double> v(2 * L - 1);
        for (std::size_t l = 0; l + 1 < L; ++l) {
            double s = 0.0;
            for (std::size_t i = 0; i <= g.N; ++i) s = std::max(s, std::abs(xs[l][i] - xs[l + 1][i]));
            v[l] = s;
        }
        for (std::size_t l = 0; l < L; ++l) v[L - 1 + l] = xs[l][probe];
        per_path[p] = std::move(v);
    }, 4);

    std::vector<std::vector<double>> sup(L - 1), marg(L);
    for (const auto& v : per_path) {
        if (v.empty()) continue;
        ++rep.paths_used;
        for (std::size_t l = 0; l + 1 < L; ++l) sup[l].push_back(v[l]);
        for (std::size_t l = 0; l < L; ++l) marg[l].push_back(v[L - 1 + l]);
    }
    if (rep.paths_used == 0) throw InsufficientPaths("convergence_report: every path aborted");
    for (std::size_t l = 0; l + 1 < L; ++l) {
        LevelPair lp;
        lp.from = rep.levels[l];
        lp.to = rep.levels[l + 1];
        lp.median_sup = stats::median(sup[l]);
        lp.q90_sup = stats::quantile(sup[l], 0.9);
        lp.max_sup = *std::max_element(sup[l].begin(), sup[l].end());
        lp.ks_distance = stats::ecdf_distance(marg[l], marg[l + 1]);
        if (!std::isfinite(lp.median_sup) || !std::isfinite(lp.q90_sup))
            throw NonFiniteState("convergence_report: non-finite coupled difference");
        if (!rep.pairs.empty()) {
            rep.monotone = rep.monotone && lp.median_sup <= rep.pairs.back().median_sup;
            rep.monotone_q90 = rep.monotone_q90 && lp.q90_sup <= rep.pairs.back().q90_sup;
        }
        rep.pairs.push_back(lp);
    }
    return rep;
}

}  // namespace svemp
