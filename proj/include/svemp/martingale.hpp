#pragma once

// Martingale-problem diagnostics on simulated bundles:
//   M^f_t = f(Z_t) - int_0^t A^f(s, X_s, Z_s) ds,
//   A^f(t, x, z) = mu(t, x) f'(z) + 1/2 sigma(t, x)^2 f''(z).
// Increments of M^f are tested for zero mean against adapted statistics, and the
// realized quadratic variation of M is compared to int sigma(s, X_s)^2 ds.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "svemp/coefficients.hpp"
#include "svemp/errors.hpp"
#include "svemp/stats.hpp"
#include "svemp/sve_engine.hpp"

namespace svemp {

struct TestFunction {
    std::function<double(double)> f, df, d2f;
    double support_radius = 1.0;
    std::string label;
};

namespace testfn {

/// (1 - u^2)^4 with u = (z - center) / width; C^3, supported on |u| < 1.
inline TestFunction bump(double center, double width) {
    auto in = [=](double z) { const double u = (z - center) / width; return std::abs(u) < 1.0; };
    TestFunction tf;
    tf.f = [=](double z) {
        if (!in(z)) return 0.0;
        const double u = (z - center) / width, a = 1.0 - u * u;
        return a * a * a * a;
    };
    tf.df = [=](double z) {
        if (!in(z)) return 0.0;
        const double u = (z - center) / width, a = 1.0 - u * u;
        return -8.0 * u * a * a * a / width;
    };
    tf.d2f = [=](double z) {
        if (!in(z)) return 0.0;
        const double u = (z - center) / width, a = 1.0 - u * u;
        return -8.0 * a * a * (1.0 - 7.0 * u * u) / (width * width);
    };
    tf.support_radius = std::abs(center) + width;
    tf.label = "bump(c=" + std::to_string(center) + ",w=" + std::to_string(width) + ")";
    return tf;
}

/// u (1 - u^2)^4, the odd companion of bump.
inline TestFunction odd_bump(double center, double width) {
    auto in = [=](double z) { const double u = (z - center) / width; return std::abs(u) < 1.0; };
    TestFunction tf;
    tf.f = [=](double z) {
        if (!in(z)) return 0.0;
        const double u = (z - center) / width, a = 1.0 - u * u;
        return u * a * a * a * a;
    };
    tf.df = [=](double z) {
        if (!in(z)) return 0.0;
        const double u = (z - center) / width, a = 1.0 - u * u;
        return a * a * a * (1.0 - 9.0 * u * u) / width;
    };
    tf.d2f = [=](double z) {
        if (!in(z)) return 0.0;
        const double u = (z - center) / width, a = 1.0 - u * u;
        return 24.0 * u * a * a * (3.0 * u * u - 1.0) / (width * width);
    };
    tf.support_radius = std::abs(center) + width;
    tf.label = "odd_bump(c=" + std::to_string(center) + ",w=" + std::to_string(width) + ")";
    return tf;
}

inline TestFunction zero() {
    return {[](double) { return 0.0; }, [](double) { return 0.0; }, [](double) { return 0.0; },
            1.0, "zero"};
}

/// Six bump-type functions whose supports span [-2 scale, 2 scale].
inline std::vector<TestFunction> default_battery(double scale) {
    return {bump(0.0, scale),        bump(0.0, 2.0 * scale),       bump(0.5 * scale, scale),
            bump(-0.5 * scale, scale), bump(0.0, 0.5 * scale),     odd_bump(0.0, 1.5 * scale)};
}

/// Boundary values vanish and f'' matches a central difference of f'. One
/// Richardson step removes the h^2 truncation term, which otherwise dominates
/// for narrow bumps.
inline CheckReport verify(const TestFunction& tf, int grid_points = 401, double step = 1e-4) {
    CheckReport rep;
    rep.id = "test-function: C2 with compact support";
    const double R = tf.support_radius;
    double boundary = 0.0;
    for (double z : {-R, R})
        boundary = std::max({boundary, std::abs(tf.f(z)), std::abs(tf.df(z)), std::abs(tf.d2f(z))});
    double fd = 0.0;
    for (int k = 0; k < grid_points; ++k) {
        const double z = -R + 2.0 * R * k / (grid_points - 1);
        auto central = [&](double h) { return (tf.df(z + h) - tf.df(z - h)) / (2.0 * h); };
        const double approx = (4.0 * central(0.5 * step) - central(step)) / 3.0;
        fd = std::max(fd, std::abs(approx - tf.d2f(z)));
    }
    rep.measured["boundary_max"] = boundary;
    rep.measured["fd_error"] = fd;
    rep.passed = boundary <= 1e-10 && fd <= 1e-6;
    return rep;
}

}  // namespace testfn

inline double generator(const Coefficient& mu, const Coefficient& sigma, const TestFunction& f,
                        double t, double x, double z) {
    const double s = sigma(t, x);
    return mu(t, x) * f.df(z) + 0.5 * s * s * f.d2f(z);
}

/// Callable form of the generator, replaceable in tests.
using GeneratorFn = std::function<double(const Coefficient&, const Coefficient&,
                                         const TestFunction&, double, double, double)>;

inline GeneratorFn standard_generator() {
    return [](const Coefficient& mu, const Coefficient& sigma, const TestFunction& f, double t,
              double x, double z) { return generator(mu, sigma, f, t, x, z); };
}

/// M^f on the grid with the left-point rule for the time integral.
inline std::vector<double> compute_Mf(const PathBundle& b, const Coefficient& mu,
                                      const Coefficient& sigma, const TestFunction& f,
                                      const GeneratorFn& gen = standard_generator()) {
    const TimeGrid g = b.grid;
    const double dt = g.dt();
    std::vector<double> out(g.N + 1);
    double integral = 0.0;
    for (std::size_t i = 0; i <= g.N; ++i) {
        out[i] = f.f(b.Z[i]) - integral;
        if (i < g.N) integral += gen(mu, sigma, f, g.time(i), b.X[i], b.Z[i]) * dt;
    }
    return out;
}

enum class Statistic { One, X, Z, FPrime };

inline const char* to_string(Statistic s) {
    switch (s) {
        case Statistic::One: return "1";
        case Statistic::X: return "X_t";
        case Statistic::Z: return "Z_t";
        case Statistic::FPrime: return "f'(Z_t)";
    }
    return "?";
}

inline std::vector<Statistic> all_statistics() {
    return {Statistic::One, Statistic::X, Statistic::Z, Statistic::FPrime};
}

struct MartingaleEntry {
    std::pair<double, double> lag;
    Statistic statistic = Statistic::One;
    double mean = 0.0;
    double stderr_ = 0.0;
    double z = 0.0;
};

struct MartingaleTestReport {
    std::string f_label;
    std::vector<MartingaleEntry> entries;
    double max_abs_z = 0.0;
    double threshold = 4.0;
    std::size_t paths_used = 0;
    std::size_t paths_aborted = 0;
    std::optional<double> qv_relative_error;
    std::optional<double> qv_threshold;
    bool passed = false;
};

struct BatteryReport {
    std::vector<MartingaleTestReport> functions;
    double max_abs_z = 0.0;
    bool passed = false;
    std::string note;
};

struct MartingaleOptions {
    double base_threshold = 4.0;
    std::size_t min_paths = 1000;
    GeneratorFn generator = standard_generator();
};

/// |z| threshold with a Bonferroni widening over `tests` simultaneous tests:
/// each test gets the single-test tail mass of `base` divided by `tests`.
inline double widened_threshold(double base, std::size_t tests) {
    if (tests <= 1) return base;
    return stats::normal_critical(stats::normal_two_sided_tail(base) / static_cast<double>(tests));
}

namespace detail {

inline std::size_t grid_index(const TimeGrid& g, double t) {
    const double pos = t / g.dt();
    const double idx = std::round(pos);
    if (idx < 0.0 || idx > static_cast<double>(g.N) || std::abs(pos - idx) > 1e-9 * (1.0 + pos))
        throw DomainError("time " + std::to_string(t) + " is not a grid point");
    return static_cast<std::size_t>(idx);
}

inline double statistic_value(Statistic s, const PathBundle& b, std::size_t i, const TestFunction& f) {
    switch (s) {
        case Statistic::One: return 1.0;
        case Statistic::X: return b.X[i];
        case Statistic::Z: return b.Z[i];
        case Statistic::FPrime: return f.df(b.Z[i]);
    }
    return 0.0;
}

}  // namespace detail

/// E[g (M^f_{t+h} - M^f_t)] = 0 for each lag, adapted statistic g and test
/// function, studentized over paths.
template <PathSource Src>
BatteryReport martingale_battery(const Src& src, const Coefficient& mu, const Coefficient& sigma,
                                 const std::vector<TestFunction>& battery,
                                 const std::vector<std::pair<double, double>>& lags,
                                 const std::vector<Statistic>& statistics,
                                 const MartingaleOptions& opt = {}) {
    const TimeGrid g = src.grid();
    std::vector<std::pair<std::size_t, std::size_t>> idx;
    for (const auto& [a, b] : lags) {
        if (!(b > a)) throw DomainError("martingale_test: lag needs t < t + h");
        idx.emplace_back(detail::grid_index(g, a), detail::grid_index(g, b));
    }
    const std::size_t per_f = lags.size() * statistics.size();
    const std::size_t width = battery.size() * per_f;

    struct PathValues {
        bool aborted = false;
        std::vector<double> v;
    };
    // Welford accumulators folded in path order.
    std::vector<double> mean(width, 0.0), m2(width, 0.0);
    std::size_t used = 0, aborted = 0;
    map_fold(
        src,
        [&](const PathBundle& b) {
            PathValues pv;
            if (b.aborted) {
                pv.aborted = true;
                return pv;
            }
            pv.v.resize(width);
            for (std::size_t fi = 0; fi < battery.size(); ++fi) {
                const auto mf = compute_Mf(b, mu, sigma, battery[fi], opt.generator);
                for (std::size_t li = 0; li < idx.size(); ++li) {
                    const auto [i0, i1] = idx[li];
                    const double inc = mf[i1] - mf[i0];
                    for (std::size_t si = 0; si < statistics.size(); ++si)
                        pv.v[fi * per_f + li * statistics.size() + si] =
                            detail::statistic_value(statistics[si], b, i0, battery[fi]) * inc;
                }
            }
            return pv;
        },
        [&](std::size_t, PathValues&& pv) {
            if (pv.aborted) {
                ++aborted;
                return;
            }
            ++used;
            const auto n = static_cast<double>(used);
            for (std::size_t k = 0; k < width; ++k) {
                const double d = pv.v[k] - mean[k];
                mean[k] += d / n;
                m2[k] += d * (pv.v[k] - mean[k]);
            }
        });
    if (used < opt.min_paths)
        throw InsufficientPaths("martingale_test: " + std::to_string(used) + " usable paths, need " +
                                std::to_string(opt.min_paths));

    BatteryReport out;
    out.passed = true;
    const double thr = widened_threshold(opt.base_threshold, per_f);
    for (std::size_t fi = 0; fi < battery.size(); ++fi) {
        MartingaleTestReport rep;
        rep.f_label = battery[fi].label;
        rep.threshold = thr;
        rep.paths_used = used;
        rep.paths_aborted = aborted;
        for (std::size_t li = 0; li < idx.size(); ++li)
            for (std::size_t si = 0; si < statistics.size(); ++si) {
                const std::size_t k = fi * per_f + li * statistics.size() + si;
                MartingaleEntry e;
                e.lag = lags[li];
                e.statistic = statistics[si];
                e.mean = mean[k];
                e.stderr_ = used > 1 ? std::sqrt(m2[k] / static_cast<double>(used - 1) /
                                                 static_cast<double>(used))
                                     : 0.0;
                if (e.stderr_ > 0.0)
                    e.z = e.mean / e.stderr_;
                else
                    e.z = e.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), e.mean);
                rep.max_abs_z = std::max(rep.max_abs_z, std::abs(e.z));
                rep.entries.push_back(e);
            }
        rep.passed = rep.max_abs_z <= thr;
        out.max_abs_z = std::max(out.max_abs_z, rep.max_abs_z);
        out.passed = out.passed && rep.passed;
        out.functions.push_back(std::move(rep));
    }
    out.note = "necessary-condition check over " + std::to_string(battery.size()) +
               " test functions; compactly supported f on a finite grid gives bounded M^f, so "
               "the true martingale property is tested";
    return out;
}

template <PathSource Src>
MartingaleTestReport martingale_test(const Src& src, const Coefficient& mu, const Coefficient& sigma,
                                     const TestFunction& f,
                                     const std::vector<std::pair<double, double>>& lags,
                                     const std::vector<Statistic>& statistics = all_statistics(),
                                     const MartingaleOptions& opt = {}) {
    auto rep = martingale_battery(src, mu, sigma, {f}, lags, statistics, opt);
    return std::move(rep.functions.front());
}

/// Lags (0, T/4), (T/4, T/2), (T/2, T), (0, T) snapped to the grid.
inline std::vector<std::pair<double, double>> default_lags(const TimeGrid& g) {
    auto snap = [&](double t) { return g.time(static_cast<std::size_t>(std::llround(t / g.dt()))); };
    return {{0.0, snap(g.T / 4)}, {snap(g.T / 4), snap(g.T / 2)}, {snap(g.T / 2), g.T}, {0.0, g.T}};
}

/// Battery scale from the spread of Z_T: twice its standard deviation, floored at 0.5.
template <PathSource Src>
double battery_scale(const Src& src, std::size_t max_paths = 2000) {
    std::vector<double> zt;
    const std::size_t n = std::min(max_paths, src.size());
    for (std::size_t p = 0; p < n; ++p)
        src.with_path(p, [&](const PathBundle& b) {
            if (!b.aborted) zt.push_back(b.Z.back());
        });
    const auto ms = stats::mean_stderr(zt);
    const double sd = ms.stderr_ * std::sqrt(static_cast<double>(std::max<std::size_t>(zt.size(), 1)));
    return std::max(0.5, 2.0 * sd);
}

struct QvReport {
    std::size_t steps = 0;
    double median_relative_error = 0.0;
    double threshold = 0.0;
    double mean_realized = 0.0;
    double mean_integrated = 0.0;
    bool passed = false;
};

struct QvOptions {
    double floor = 0.05;
    /// c in max(floor, c N^{-1/2}); twice the Brownian median 0.954 N^{-1/2}.
    double c = 2.0;
};

/// Realized sum (dM)^2 against sum sigma(t_j, X_j)^2 dt, per path, at T.
template <PathSource Src>
QvReport qv_test(const Src& src, const Coefficient& sigma, const QvOptions& opt = {}) {
    const TimeGrid g = src.grid();
    struct PathQv {
        bool aborted = false;
        double rv = 0.0, iv = 0.0;
    };
    std::vector<double> rel;
    double sum_rv = 0.0, sum_iv = 0.0;
    map_fold(
        src,
        [&](const PathBundle& b) {
            PathQv q;
            if (b.aborted) {
                q.aborted = true;
                return q;
            }
            const double dt = g.dt();
            for (std::size_t j = 0; j < g.N; ++j) {
                const double dm = b.M[j + 1] - b.M[j];
                const double s = sigma(g.time(j), b.X[j]);
                q.rv += dm * dm;
                q.iv += s * s * dt;
            }
            return q;
        },
        [&](std::size_t, PathQv&& q) {
            if (q.aborted) return;
            sum_rv += q.rv;
            sum_iv += q.iv;
            if (q.iv > 0.0)
                rel.push_back(std::abs(q.rv - q.iv) / q.iv);
            else
                rel.push_back(q.rv == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        });
    QvReport rep;
    rep.steps = g.N;
    rep.median_relative_error = rel.empty() ? 0.0 : stats::median(rel);
    rep.threshold = std::max(opt.floor, opt.c / std::sqrt(static_cast<double>(g.N)));
    rep.mean_realized = rel.empty() ? 0.0 : sum_rv / static_cast<double>(rel.size());
    rep.mean_integrated = rel.empty() ? 0.0 : sum_iv / static_cast<double>(rel.size());
    rep.passed = rep.median_relative_error <= rep.threshold;
    return rep;
}

/// Folds a quadratic-variation result into a martingale report.
inline void attach_qv(MartingaleTestReport& rep, const QvReport& qv) {
    rep.qv_relative_error = qv.median_relative_error;
    rep.qv_threshold = qv.threshold;
    rep.passed = rep.max_abs_z <= rep.threshold && qv.passed;
}

}  // namespace svemp
