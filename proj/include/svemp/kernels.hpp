#pragma once

// Volterra kernels K(s, t) on the triangle {0 <= s <= t <= T}, their
// singularity-aware integrals, and grid certificates for the kernel
// integrability and regularity conditions.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "svemp/errors.hpp"
#include "svemp/quadrature.hpp"
#include "svemp/stats.hpp"

namespace svemp {

enum class KernelForm { General, Convolution };

/// Profile u -> coef * u^{-alpha}; enables closed-form cell integrals.
struct PowerLaw {
    double coef = 1.0;
    double alpha = 0.0;
};

/// Optional structure declared alongside an evaluator.
struct KernelTraits {
    double singularity = 0.0;                         ///< alpha >= 0, K ~ (t-s)^{-alpha}
    std::optional<double> bound;                      ///< sup |K| over the triangle
    std::function<double(double, double)> partial1;   ///< d/ds K(s, t), if absolutely continuous
    std::string label;
};

class KernelSpec {
public:
    using Profile = std::function<double(double)>;
    using Eval = std::function<double(double, double)>;

    /// Convolution kernel K(s,t) = profile(t - s).
    static KernelSpec convolution(Profile profile, double horizon, KernelTraits traits = {}) {
        KernelSpec k(KernelForm::Convolution, horizon, std::move(traits));
        k.state_->profile = std::move(profile);
        return k;
    }

    static KernelSpec general(Eval eval, double horizon, KernelTraits traits = {}) {
        KernelSpec k(KernelForm::General, horizon, std::move(traits));
        k.state_->general = std::move(eval);
        return k;
    }

    static KernelSpec constant(double c, double horizon) {
        KernelTraits tr;
        tr.bound = std::abs(c);
        tr.partial1 = [](double, double) { return 0.0; };
        tr.label = "constant{" + fmt_num(c) + "}";
        auto k = convolution([c](double) { return c; }, horizon, std::move(tr));
        k.state_->constant = c;
        return k;
    }

    /// (t - s)^{-alpha}, optionally scaled.
    static KernelSpec fractional(double alpha, double horizon, double coef = 1.0) {
        if (!(alpha >= 0.0 && alpha < 1.0))
            throw DomainError("fractional kernel: alpha must lie in [0, 1)");
        if (alpha == 0.0) return constant(coef, horizon);
        KernelTraits tr;
        tr.singularity = alpha;
        tr.label = "fractional{" + fmt_num(alpha) + "}";
        auto k = convolution([coef, alpha](double u) { return coef * std::pow(u, -alpha); },
                             horizon, std::move(tr));
        k.state_->power = PowerLaw{coef, alpha};
        return k;
    }

    /// exp(-lambda (t - s)).
    static KernelSpec exponential(double lambda, double horizon) {
        if (!(lambda >= 0.0)) throw DomainError("exponential kernel: lambda must be >= 0");
        KernelTraits tr;
        tr.bound = 1.0;
        tr.partial1 = [lambda](double s, double t) { return lambda * std::exp(-lambda * (t - s)); };
        tr.label = "exponential{" + fmt_num(lambda) + "}";
        return convolution([lambda](double u) { return std::exp(-lambda * u); }, horizon,
                           std::move(tr));
    }

    /// Piecewise-linear profile through (u_k, v_k); constant beyond the last knot.
    static KernelSpec lipschitz_profile(std::vector<std::pair<double, double>> table,
                                        double horizon) {
        if (table.size() < 2) throw DomainError("lipschitz_profile: need at least two knots");
        std::sort(table.begin(), table.end());
        if (table.front().first != 0.0)
            throw DomainError("lipschitz_profile: first knot must be at u = 0");
        for (std::size_t i = 1; i < table.size(); ++i)
            if (!(table[i].first > table[i - 1].first))
                throw DomainError("lipschitz_profile: knots must be strictly increasing");
        double bound = 0.0;
        for (const auto& kv : table) bound = std::max(bound, std::abs(kv.second));
        auto shared = std::make_shared<const std::vector<std::pair<double, double>>>(std::move(table));
        auto locate = [shared](double u) -> std::size_t {
            const auto& tb = *shared;
            auto it = std::upper_bound(tb.begin(), tb.end(), u,
                                       [](double x, const auto& kv) { return x < kv.first; });
            return static_cast<std::size_t>(std::distance(tb.begin(), it));
        };
        auto profile = [shared, locate](double u) {
            const auto& tb = *shared;
            const std::size_t hi = locate(u);
            if (hi == 0) return tb.front().second;
            if (hi >= tb.size()) return tb.back().second;
            const auto& [u0, v0] = tb[hi - 1];
            const auto& [u1, v1] = tb[hi];
            return v0 + (v1 - v0) * (u - u0) / (u1 - u0);
        };
        auto slope = [shared, locate](double u) {
            const auto& tb = *shared;
            const std::size_t hi = locate(u);
            if (hi == 0 || hi >= tb.size()) return 0.0;
            return (tb[hi].second - tb[hi - 1].second) / (tb[hi].first - tb[hi - 1].first);
        };
        KernelTraits tr;
        tr.bound = bound;
        tr.partial1 = [slope](double s, double t) { return -slope(t - s); };
        tr.label = "lipschitz_profile{" + std::to_string(shared->size()) + " knots}";
        return convolution(profile, horizon, std::move(tr));
    }

    KernelForm form() const { return state_->form; }
    double horizon() const { return state_->horizon; }
    double singularity() const { return state_->traits.singularity; }
    bool is_singular() const { return state_->traits.singularity > 0.0; }
    std::optional<double> bound() const { return state_->traits.bound; }
    bool has_partial1() const { return static_cast<bool>(state_->traits.partial1); }
    const std::string& label() const { return state_->traits.label; }
    std::optional<PowerLaw> power_law() const { return state_->power; }
    std::optional<double> constant_value() const { return state_->constant; }
    bool is_convolution() const { return state_->form == KernelForm::Convolution; }

    /// Raw profile; convolution kernels only.
    double profile(double u) const {
        if (!is_convolution()) throw DomainError("profile: kernel is not of convolution form");
        return state_->profile(u);
    }

    /// Raw two-argument evaluation without domain checks.
    double general_eval(double s, double t) const {
        return is_convolution() ? state_->profile(t - s) : state_->general(s, t);
    }

    double partial1(double s, double t) const {
        if (!has_partial1()) throw MissingDerivative("kernel " + label() + " has no d/ds K");
        return state_->traits.partial1(s, t);
    }

    /// K(t - w, t) in terms of the gap w > 0; exact for convolution kernels even
    /// when t - w rounds to t.
    double at_gap(double w, double t) const {
        if (is_convolution()) return state_->profile(w);
        const double s = t - w;
        if (s >= t && is_singular()) return 0.0;
        return state_->general(s, t);
    }

    /// Checked evaluation on the triangle.
    double operator()(double s, double t) const {
        const double eps = 1e-12 * horizon();
        if (!(s >= -eps && t <= horizon() + eps && s <= t + eps))
            throw DomainError("kernel " + label() + ": (s,t) = (" + fmt_num(s) + ", " +
                              fmt_num(t) + ") outside the triangle");
        if (is_singular() && s >= t)
            throw SingularityError("kernel " + label() + " is singular on the diagonal");
        return general_eval(std::min(s, t), t);
    }

private:
    struct State {
        KernelForm form;
        double horizon;
        KernelTraits traits;
        Profile profile;
        Eval general;
        std::optional<PowerLaw> power;
        std::optional<double> constant;
    };

    KernelSpec(KernelForm form, double horizon, KernelTraits traits)
        : state_(std::make_shared<State>()) {
        if (!(horizon > 0.0)) throw DomainError("kernel horizon must be positive");
        if (traits.singularity < 0.0) throw DomainError("singularity exponent must be >= 0");
        state_->form = form;
        state_->horizon = horizon;
        state_->traits = std::move(traits);
        if (state_->traits.label.empty())
            state_->traits.label = form == KernelForm::Convolution ? "convolution" : "general";
    }

    static std::string fmt_num(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", v);
        return buf;
    }

    std::shared_ptr<State> state_;
};

inline double eval(const KernelSpec& k, double s, double t) { return k(s, t); }

namespace detail {

inline void check_cell(const KernelSpec& k, double a, double b, double t) {
    const double eps = 1e-12 * k.horizon();
    if (!(a >= -eps && a < b && b <= t + eps && t <= k.horizon() + eps))
        throw DomainError("cell_integral: need 0 <= a < b <= t <= T");
}

}  // namespace detail

/// Integral of K(s, t) over s in [a, b] by graded quadrature, never using a
/// closed form. Exposed so closed forms can be checked against it.
inline double quadrature_cell_integral(const KernelSpec& k, double a, double b, double t,
                                       const quad::Options& opt = {}) {
    detail::check_cell(k, a, b, t);
    b = std::min(b, t);
    auto f = [&](double w) { return k.at_gap(w, t); };
    return quad::integrate_singular_end(f, t - b, t - a, k.singularity(), {}, opt).value;
}

/// Integral of K(s, t) over s in [a, b]. Closed form for constant and pure
/// power-law profiles, graded quadrature otherwise.
inline double cell_integral(const KernelSpec& k, double a, double b, double t,
                            const quad::Options& opt = {}) {
    detail::check_cell(k, a, b, t);
    b = std::min(b, t);
    if (auto c = k.constant_value()) return *c * (b - a);
    if (auto pl = k.power_law()) {
        const double e = 1.0 - pl->alpha;
        return pl->coef * (std::pow(t - a, e) - std::pow(t - b, e)) / e;
    }
    return quadrature_cell_integral(k, a, b, t, opt);
}

/// Cell mean of K(., t) over [a, b]; exactly the constant for constant kernels.
inline double cell_average(const KernelSpec& k, double a, double b, double t,
                           const quad::Options& opt = {}) {
    if (auto c = k.constant_value()) {
        detail::check_cell(k, a, b, t);
        return *c;
    }
    return cell_integral(k, a, b, t, opt) / (b - a);
}

/// (int_0^t |K(s,t)|^q ds)^{1/q}, by graded quadrature.
inline double lq_norm(const KernelSpec& k, double t, double q, const quad::Options& opt = {}) {
    if (!(q >= 1.0)) throw DomainError("lq_norm: q must be >= 1");
    if (!(t > 0.0 && t <= k.horizon() * (1.0 + 1e-12)))
        throw DomainError("lq_norm: need 0 < t <= T");
    const double beta = k.singularity() * q;
    if (beta >= 1.0)
        throw DivergentIntegral("kernel " + k.label() + ": |K|^" + std::to_string(q) +
                                " not integrable (alpha*q >= 1)");
    auto f = [&](double w) { return std::pow(std::abs(k.at_gap(w, t)), q); };
    const double integral = quad::integrate_singular_end(f, 0.0, t, beta, {}, opt).value;
    return std::pow(integral, 1.0 / q);
}

// ---------------------------------------------------------------------------
// Assumption certificates

struct KernelCheckReport {
    std::string assumption_id;
    bool passed = false;
    double worst_ratio = 0.0;
    std::pair<double, double> witness{0.0, 0.0};
    std::string grid_meta;
    double tolerance = 1e-9;
    std::map<std::string, double> measured;
    std::vector<std::string> branches;
    std::vector<std::string> notes;
};

inline KernelCheckReport check_base_integrability(const KernelSpec& k_mu, const KernelSpec& k_sigma,
                                                  const std::vector<double>& grid) {
    KernelCheckReport rep;
    rep.assumption_id = "kernel-integrability: K_mu(.,t) in L1, K_sigma(.,t) in L2";
    rep.grid_meta = std::to_string(grid.size()) + " times in (0,T]";
    rep.passed = true;
    double max_l1 = 0.0, max_l2 = 0.0;
    for (double t : grid) {
        if (!(t > 0.0 && t <= k_mu.horizon() * (1.0 + 1e-12)))
            throw DomainError("check_base_integrability: grid must lie in (0, T]");
        try {
            max_l1 = std::max(max_l1, lq_norm(k_mu, t, 1.0));
        } catch (const DivergentIntegral& e) {
            rep.passed = false;
            rep.witness = {t, t};
            rep.notes.emplace_back(std::string("K_mu: ") + e.what());
            break;
        }
        try {
            max_l2 = std::max(max_l2, lq_norm(k_sigma, t, 2.0));
        } catch (const DivergentIntegral& e) {
            rep.passed = false;
            rep.witness = {t, t};
            rep.notes.emplace_back(std::string("K_sigma: ") + e.what());
            break;
        }
    }
    rep.worst_ratio = rep.passed ? 0.0 : std::numeric_limits<double>::infinity();
    rep.measured["max_L1_K_mu"] = max_l1;
    rep.measured["max_L2_K_sigma"] = max_l2;
    return rep;
}

struct RegularityParams {
    double p = 0.0;
    double gamma = 0.0;
    std::optional<double> C_p;

    void validate() const {
        if (!(p > 4.0)) throw DomainError("regularity: p must exceed 4");
        if (!(gamma > 2.0 / p && gamma < 0.5))
            throw DomainError("regularity: gamma must lie in (2/p, 1/2)");
        if (C_p && !(*C_p > 0.0)) throw DomainError("regularity: C_p must be positive");
    }
};

/// Pairs (t, t + T 2^{-k}) for every base time and k in [k_min, k_max].
inline std::vector<std::pair<double, double>> dyadic_pair_grid(double horizon,
                                                               const std::vector<double>& bases,
                                                               int k_min, int k_max) {
    std::vector<std::pair<double, double>> pairs;
    for (double t : bases)
        for (int k = k_min; k <= k_max; ++k) {
            const double tp = t + horizon * std::ldexp(1.0, -k);
            if (tp <= horizon) pairs.emplace_back(t, tp);
        }
    return pairs;
}

namespace detail {

/// First and second summands of the kernel increment bound with exponent r.
inline std::pair<double, double> increment_integrals(const KernelSpec& k, double t, double tp,
                                                     double r) {
    const double beta = k.singularity() * r;
    if (beta >= 1.0)
        throw DivergentIntegral("kernel " + k.label() + ": |K|^" + std::to_string(r) +
                                " not integrable near the diagonal");
    const double h = tp - t;
    double first = 0.0;
    if (t > 0.0) {
        std::vector<double> brk;
        for (double w = h; w < t; w *= 2.0) brk.push_back(w);
        auto f = [&](double w) {
            return std::pow(std::abs(k.at_gap(w + h, tp) - k.at_gap(w, t)), r);
        };
        first = quad::integrate_singular_end(f, 0.0, t, beta, brk).value;
    }
    auto g = [&](double w) { return std::pow(std::abs(k.at_gap(w, tp)), r); };
    const double second = quad::integrate_singular_end(g, 0.0, h, beta).value;
    return {first, second};
}

}  // namespace detail

/// Certifies the two-kernel increment bounds on a pair grid: for each pair the
/// K_mu sum with exponent p/(p-1) against C |t'-t|^{gamma p/(p-1)}, and the
/// K_sigma sum with exponent 2p/(p-2) against C |t'-t|^{2 gamma p/(p-2)}.
inline KernelCheckReport check_regularity(const KernelSpec& k_mu, const KernelSpec& k_sigma,
                                          const RegularityParams& params,
                                          const std::vector<std::pair<double, double>>& pairs,
                                          double slope_tolerance = 0.02) {
    params.validate();
    const double p = params.p, gamma = params.gamma;

    std::set<long> scales;
    for (const auto& [t, tp] : pairs) {
        if (!(tp > t && t >= 0.0)) throw DomainError("check_regularity: pairs need 0 <= t < t'");
        scales.insert(std::lround(std::log2(tp - t)));
    }
    if (scales.size() < 8)
        throw GridTooCoarse("check_regularity: " + std::to_string(scales.size()) +
                            " dyadic gap scales, need at least 8");

    KernelCheckReport rep;
    rep.assumption_id = "kernel-regularity: increment bound with exponent (p, gamma)";
    rep.grid_meta = std::to_string(pairs.size()) + " pairs over " + std::to_string(scales.size()) +
                    " dyadic gap scales";
    rep.tolerance = slope_tolerance;

    struct Row {
        const KernelSpec* k;
        double r;
        double exponent;
        const char* name;
        std::map<long, double> sup_by_scale;          // sup over pairs of the bound's LHS
        std::map<long, double> second_by_scale;
        std::map<long, double> gap_by_scale;
    };
    Row rows[2] = {{&k_mu, p / (p - 1.0), gamma * p / (p - 1.0), "K_mu", {}, {}, {}},
                   {&k_sigma, 2.0 * p / (p - 2.0), 2.0 * gamma * p / (p - 2.0), "K_sigma", {}, {}, {}}};

    double fitted = 0.0;
    for (auto& row : rows) {
        for (const auto& [t, tp] : pairs) {
            std::pair<double, double> parts;
            try {
                parts = detail::increment_integrals(*row.k, t, tp, row.r);
            } catch (const DivergentIntegral& e) {
                rep.passed = false;
                rep.worst_ratio = std::numeric_limits<double>::infinity();
                rep.witness = {t, tp};
                rep.notes.emplace_back(std::string(row.name) + ": " + e.what());
                return rep;
            }
            const double h = tp - t;
            const double lhs = parts.first + parts.second;
            const double ratio = lhs / std::pow(h, row.exponent);
            if (ratio > fitted) {
                fitted = ratio;
                rep.witness = {t, tp};
            }
            const long key = std::lround(std::log2(h));
            row.sup_by_scale[key] = std::max(row.sup_by_scale[key], lhs);
            row.second_by_scale[key] = std::max(row.second_by_scale[key], parts.second);
            row.gap_by_scale[key] = h;
        }
    }

    rep.passed = std::isfinite(fitted);
    for (auto& row : rows) {
        std::vector<double> lx, ly, sx, sy;
        for (const auto& [key, v] : row.sup_by_scale) {
            if (v > 0.0) {
                lx.push_back(std::log(row.gap_by_scale[key]));
                ly.push_back(std::log(v));
            }
            const double s2 = row.second_by_scale[key];
            if (s2 > 0.0) {
                sx.push_back(std::log(row.gap_by_scale[key]));
                sy.push_back(std::log(s2));
            }
        }
        const std::string n = row.name;
        rep.measured["required_exponent_" + n] = row.exponent;
        // Identically vanishing integrals impose no constraint.
        double slope = std::numeric_limits<double>::infinity();
        if (lx.size() >= 2) slope = stats::linear_fit(lx, ly).slope;
        rep.measured["slope_" + n] = slope;
        if (sx.size() >= 2) rep.measured["slope_second_summand_" + n] = stats::linear_fit(sx, sy).slope;
        if (!(slope >= row.exponent - slope_tolerance)) {
            rep.passed = false;
            rep.notes.emplace_back(n + ": log-log slope " + std::to_string(slope) +
                                   " below required exponent " + std::to_string(row.exponent));
        }
    }
    rep.measured["fitted_C_p"] = fitted;
    if (params.C_p) {
        rep.worst_ratio = fitted / *params.C_p;
        if (rep.worst_ratio > 1.0 + rep.tolerance) {
            rep.passed = false;
            rep.notes.emplace_back("supplied C_p exceeded on the grid");
        }
    } else {
        rep.worst_ratio = rep.passed ? 1.0 : std::numeric_limits<double>::infinity();
        rep.notes.emplace_back("C_p fitted as the empirical sup ratio");
    }
    return rep;
}

enum class StructuralBranch { Any, Smooth, Convolution };

/// Uniform L1 bound of K_mu, and classification of K_sigma as bounded and
/// absolutely continuous in s (branch i) and/or convolution with L2 profile
/// (branch ii).
inline KernelCheckReport check_structural(const KernelSpec& k_mu, const KernelSpec& k_sigma,
                                          double p_struct,
                                          StructuralBranch requested = StructuralBranch::Any,
                                          int grid_points = 32) {
    if (!(p_struct > 1.0)) throw DomainError("check_structural: p must exceed 1");
    if (requested == StructuralBranch::Smooth && !k_sigma.has_partial1())
        throw MissingDerivative("check_structural: branch (i) requested but K_sigma has no d/ds K");

    const double T = k_mu.horizon();
    KernelCheckReport rep;
    rep.assumption_id = "kernel-structure: K_mu uniformly L1; K_sigma smooth or convolution";
    rep.grid_meta = std::to_string(grid_points) + " times in (0,T]";

    std::vector<double> ts;
    for (int i = 1; i <= grid_points; ++i) ts.push_back(T * i / grid_points);

    double c_mu = 0.0;
    bool mu_ok = true;
    try {
        for (double t : ts) c_mu = std::max(c_mu, lq_norm(k_mu, t, 1.0));
    } catch (const DivergentIntegral& e) {
        mu_ok = false;
        rep.notes.emplace_back(std::string("K_mu: ") + e.what());
    }
    rep.measured["sup_L1_K_mu"] = mu_ok ? c_mu : std::numeric_limits<double>::infinity();

    bool smooth = false;
    if (k_sigma.bound() && k_sigma.has_partial1() && !k_sigma.is_singular()) {
        smooth = true;
        const double bnd = *k_sigma.bound();
        double worst_ac = 0.0, sup_dp = 0.0;
        for (double t : ts) {
            for (int j = 0; j <= 8; ++j) {
                const double s = t * j / 8.0;
                const double v = k_sigma.general_eval(s, t);
                if (std::abs(v) > bnd * (1.0 + 1e-12)) smooth = false;
                if (j == 0) continue;
                auto d = [&](double u) { return k_sigma.partial1(u, t); };
                const double integ = quad::adaptive(d, 0.0, s).value;
                const double lhs = v - k_sigma.general_eval(0.0, t);
                worst_ac = std::max(worst_ac, std::abs(lhs - integ) / (1.0 + std::abs(lhs)));
            }
            auto dp = [&](double u) { return std::pow(std::abs(k_sigma.partial1(u, t)), p_struct); };
            sup_dp = std::max(sup_dp, std::pow(quad::adaptive(dp, 0.0, t).value, 1.0 / p_struct));
        }
        rep.measured["ac_identity_residual"] = worst_ac;
        rep.measured["sup_Lp_partial1_K_sigma"] = sup_dp;
        if (worst_ac > 1e-8) {
            smooth = false;
            rep.notes.emplace_back("K_sigma: d/ds K does not integrate back to K");
        }
        if (!std::isfinite(sup_dp)) smooth = false;
    }
    if (smooth) rep.branches.emplace_back("smooth");

    bool conv = false;
    if (k_sigma.is_convolution()) {
        try {
            rep.measured["L2_profile_K_sigma"] = lq_norm(k_sigma, T, 2.0);
            conv = true;
        } catch (const DivergentIntegral& e) {
            rep.notes.emplace_back(std::string("K_sigma profile: ") + e.what());
        }
    }
    if (conv) rep.branches.emplace_back("convolution");

    bool branch_ok = false;
    switch (requested) {
        case StructuralBranch::Any: branch_ok = smooth || conv; break;
        case StructuralBranch::Smooth: branch_ok = smooth; break;
        case StructuralBranch::Convolution: branch_ok = conv; break;
    }
    rep.passed = mu_ok && branch_ok;
    rep.worst_ratio = rep.passed ? 0.0 : std::numeric_limits<double>::infinity();
    return rep;
}

}  // namespace svemp
