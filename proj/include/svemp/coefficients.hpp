#pragma once

// Time-inhomogeneous coefficients (t, x) -> real with a declared linear growth
// constant, and their Lipschitz mollifications
//   f_n(t, x) = phi_n(x) * int f(t, x - y) delta_n(y) dy,
//   delta_n(y) = (1 - y^2)^n / c_n on [-1, 1].

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "svemp/errors.hpp"
#include "svemp/quadrature.hpp"

namespace svemp {

struct Coefficient {
    std::function<double(double, double)> eval;
    double growth_C = 1.0;
    std::string label;

    double operator()(double t, double x) const { return eval(t, x); }
};

namespace coef {

inline Coefficient constant(double c) {
    return {[c](double, double) { return c; }, c != 0.0 ? std::abs(c) : 1.0,
            "constant{" + std::to_string(c) + "}"};
}

/// a + b x
inline Coefficient linear(double a, double b) {
    return {[a, b](double, double x) { return a + b * x; },
            std::max({std::abs(a), std::abs(b), 1e-300}),
            "linear{" + std::to_string(a) + "," + std::to_string(b) + "}"};
}

inline Coefficient sqrt_abs() {
    return {[](double, double x) { return std::sqrt(std::abs(x)); }, 1.0, "sqrt_abs"};
}

/// kappa (theta - x)
inline Coefficient cir_drift(double kappa, double theta) {
    return {[kappa, theta](double, double x) { return kappa * (theta - x); },
            std::max({std::abs(kappa * theta), std::abs(kappa), 1e-300}),
            "cir_drift{" + std::to_string(kappa) + "," + std::to_string(theta) + "}"};
}

inline Coefficient sin_tx() {
    return {[](double t, double x) { return std::sin(t * x); }, 1.0, "sin_tx"};
}

/// Piecewise-linear in x through the knots, constant outside them.
inline Coefficient table(std::vector<std::pair<double, double>> knots) {
    if (knots.size() < 2) throw DomainError("table coefficient: need at least two knots");
    std::sort(knots.begin(), knots.end());
    double c = 0.0;
    for (const auto& kv : knots) c = std::max(c, std::abs(kv.second));
    auto tb = std::make_shared<const std::vector<std::pair<double, double>>>(std::move(knots));
    auto f = [tb](double, double x) {
        const auto& k = *tb;
        if (x <= k.front().first) return k.front().second;
        if (x >= k.back().first) return k.back().second;
        auto it = std::upper_bound(k.begin(), k.end(), x,
                                   [](double v, const auto& kv) { return v < kv.first; });
        const auto& [x1, y1] = *it;
        const auto& [x0, y0] = *(it - 1);
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
    };
    return {f, c > 0.0 ? c : 1.0, "table{" + std::to_string(tb->size()) + " knots}"};
}

}  // namespace coef

/// c_n = int_{-1}^{1} (1 - y^2)^n dy via c_n = c_{n-1} 2n / (2n + 1), c_0 = 2.
inline double mollifier_mass(int n) {
    if (n < 0) throw DomainError("mollifier_mass: n must be >= 0");
    double c = 2.0;
    for (int k = 1; k <= n; ++k) c *= 2.0 * k / (2.0 * k + 1.0);
    return c;
}

inline double mollifier_density(int n, double y) {
    if (n < 1) throw DomainError("mollifier_density: n must be >= 1");
    if (std::abs(y) >= 1.0) return 0.0;
    return std::pow(1.0 - y * y, n) / mollifier_mass(n);
}

/// C^2 cutoff: 1 on [-n, n], 0 outside (-(n+1), n+1), quintic smoothstep between.
inline double cutoff(int n, double x) {
    const double u = std::abs(x) - n;
    if (u <= 0.0) return 1.0;
    if (u >= 1.0) return 0.0;
    const double u3 = u * u * u;
    return 1.0 - u3 * (10.0 + u * (-15.0 + 6.0 * u));
}

class MollifiedCoefficient {
public:
    MollifiedCoefficient(Coefficient base, int level, int quadrature_order)
        : base_(std::move(base)), level_(level), order_(quadrature_order) {
        if (level_ < 1) throw DomainError("mollify: level must be >= 1");
        if (order_ < 2 * level_ + 2)
            throw DomainError("mollify: quadrature order must be >= 2n + 2");
        c_n_ = mollifier_mass(level_);
        const auto rule = quad::gauss_legendre(order_);
        nodes_ = rule.nodes;
        weights_.resize(nodes_.size());
        for (std::size_t k = 0; k < nodes_.size(); ++k)
            weights_[k] = rule.weights[k] * std::pow(1.0 - nodes_[k] * nodes_[k], level_) / c_n_;
    }

    double operator()(double t, double x) const {
        if (std::abs(x) >= level_ + 1.0) return 0.0;
        // Symmetric pairs are summed first so odd integrands cancel exactly at x = 0.
        const std::size_t m = nodes_.size();
        double acc = 0.0;
        for (std::size_t k = 0; k < m / 2; ++k) {
            const std::size_t j = m - 1 - k;
            acc += weights_[k] * (base_.eval(t, x - nodes_[k]) + base_.eval(t, x - nodes_[j]));
        }
        if (m % 2 == 1) acc += weights_[m / 2] * base_.eval(t, x);
        return cutoff(level_, x) * acc;
    }

    const Coefficient& base() const { return base_; }
    int level() const { return level_; }
    int quadrature_order() const { return order_; }
    double mass() const { return c_n_; }
    double growth_bound() const { return 2.0 * base_.growth_C; }

    /// Sum of the discrete density weights; 1 up to rounding.
    double discrete_mass() const {
        double s = 0.0;
        for (double w : weights_) s += w;
        return s;
    }

    Coefficient as_coefficient() const {
        auto self = std::make_shared<const MollifiedCoefficient>(*this);
        return {[self](double t, double x) { return (*self)(t, x); }, growth_bound(),
                base_.label + "@n=" + std::to_string(level_)};
    }

private:
    Coefficient base_;
    int level_;
    int order_;
    double c_n_ = 0.0;
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

/// Generic check outcome for coefficient, engine and diagnostic certificates.
struct CheckReport {
    std::string id;
    bool passed = false;
    double worst_ratio = 0.0;
    std::pair<double, double> witness{0.0, 0.0};
    std::map<std::string, double> measured;
    std::vector<std::string> notes;
};

/// Samples where |f| / (C (1 + |x|)) is largest over [0, T] x [-r, r].
inline CheckReport verify_linear_growth(const Coefficient& f,
                                        const std::vector<std::pair<double, double>>& points) {
    CheckReport rep;
    rep.id = "linear-growth: |f(t,x)| <= C (1 + |x|)";
    for (const auto& [t, x] : points) {
        double ratio = std::abs(f(t, x)) / (f.growth_C * (1.0 + std::abs(x)));
        if (std::isnan(ratio)) ratio = std::numeric_limits<double>::infinity();
        if (ratio > rep.worst_ratio) {
            rep.worst_ratio = ratio;
            rep.witness = {t, x};
        }
    }
    rep.passed = rep.worst_ratio <= 1.0;
    rep.measured["worst_ratio"] = rep.worst_ratio;
    rep.measured["growth_C"] = f.growth_C;
    return rep;
}

/// Rectangular sample grid over [0, T] x [-r, r] (both ends included).
inline std::vector<std::pair<double, double>> sample_grid(double T, double r, int nt, int nx) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(static_cast<std::size_t>((nt + 1) * (nx + 1)));
    for (int i = 0; i <= nt; ++i)
        for (int j = 0; j <= nx; ++j)
            pts.emplace_back(T * i / nt, -r + 2.0 * r * j / nx);
    return pts;
}

/// Builds f_n; rejects f whose sampled values break its growth bound by >1%.
inline MollifiedCoefficient mollify(const Coefficient& f, int n, int quadrature_order = 0,
                                    double horizon = 1.0) {
    if (quadrature_order == 0) quadrature_order = 2 * n + 2;
    const auto rep = verify_linear_growth(f, sample_grid(horizon, n + 2.0, 8, 64 * (n + 2)));
    if (rep.worst_ratio > 1.01)
        throw GrowthViolation("mollify: " + f.label + " exceeds its growth bound by ratio " +
                              std::to_string(rep.worst_ratio) + " at (t,x) = (" +
                              std::to_string(rep.witness.first) + ", " +
                              std::to_string(rep.witness.second) + ")");
    return MollifiedCoefficient(f, n, quadrature_order);
}

struct MollifyCheckOptions {
    double horizon = 1.0;
    int time_points = 8;
    int space_points = 801;
    double final_tolerance = 0.05;
    double monotone_slack = 1e-6;
};

/// Growth doubling, finite empirical Lipschitz constants, and locally uniform
/// convergence of f_n on [0, T] x [-r, r] across increasing levels.
inline CheckReport verify_mollified_properties(const Coefficient& f, std::vector<int> levels,
                                               double r, const MollifyCheckOptions& opt = {}) {
    if (levels.empty()) throw DomainError("verify_mollified_properties: no levels");
    std::sort(levels.begin(), levels.end());
    CheckReport rep;
    rep.id = "mollification: growth 2C, Lipschitz, locally uniform convergence";

    bool growth_ok = true, lipschitz_ok = true, monotone_ok = true;
    double prev_err = std::numeric_limits<double>::infinity();
    double last_err = 0.0;
    const double dx = 2.0 * r / (opt.space_points - 1);
    for (int n : levels) {
        const auto fn = mollify(f, n, 0, opt.horizon);
        double sup_err = 0.0, lip = 0.0, growth = 0.0;
        for (int i = 0; i <= opt.time_points; ++i) {
            const double t = opt.horizon * i / opt.time_points;
            double prev = 0.0;
            for (int j = 0; j < opt.space_points; ++j) {
                const double x = -r + dx * j;
                const double v = fn(t, x);
                growth = std::max(growth, std::abs(v) / (f.growth_C * (1.0 + std::abs(x))));
                sup_err = std::max(sup_err, std::abs(v - f(t, x)));
                if (j > 0) lip = std::max(lip, std::abs(v - prev) / dx);
                prev = v;
            }
        }
        const std::string tag = "n=" + std::to_string(n);
        rep.measured["growth_ratio_" + tag] = growth;
        rep.measured["lipschitz_" + tag] = lip;
        rep.measured["sup_error_" + tag] = sup_err;
        if (growth > 2.0) {
            growth_ok = false;
            rep.notes.emplace_back(tag + ": |f_n| exceeds 2 C (1 + |x|)");
        }
        if (!std::isfinite(lip)) {
            lipschitz_ok = false;
            rep.notes.emplace_back(tag + ": empirical Lipschitz constant not finite");
        }
        if (sup_err > prev_err + opt.monotone_slack) {
            monotone_ok = false;
            rep.notes.emplace_back(tag + ": sup error increased");
        }
        rep.worst_ratio = std::max(rep.worst_ratio, growth / 2.0);
        prev_err = sup_err;
        last_err = sup_err;
    }
    const bool final_ok = last_err <= opt.final_tolerance;
    if (!final_ok) rep.notes.emplace_back("sup error at the largest level above tolerance");
    rep.measured["final_sup_error"] = last_err;
    rep.measured["final_tolerance"] = opt.final_tolerance;
    rep.passed = growth_ok && lipschitz_ok && monotone_ok && final_ok;
    return rep;
}

}  // namespace svemp
