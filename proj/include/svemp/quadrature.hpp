#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "svemp/errors.hpp"

namespace svemp::quad {

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Legendre rule on [-1, 1] with `order` nodes, via Newton iteration on
/// the three-term recurrence. Nodes are returned in increasing order and the
/// rule is exactly symmetric (node k and node order-1-k are negatives).
inline GaussRule gauss_legendre(int order) {
    if (order < 1) throw DomainError("gauss_legendre: order must be >= 1");
    const auto n = static_cast<std::size_t>(order);
    GaussRule rule{std::vector<double>(n), std::vector<double>(n)};
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (std::size_t k = 1; k <= n; ++k) {
                const double p2 = p1;
                p1 = p0;
                const auto kd = static_cast<double>(k);
                p0 = ((2.0 * kd - 1.0) * z * p1 - (kd - 1.0) * p2) / kd;
            }
            dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        rule.nodes[i] = -z;
        rule.nodes[n - 1 - i] = z;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

struct Options {
    double rel_tol = 1e-10;
    double abs_tol = 1e-15;
    /// Subdivision budget per adaptive call.
    unsigned max_segments = 2000;
    int graded_cells = 16;
};

struct Result {
    double value = 0.0;
    double error = 0.0;
};

/// Kronrod-15 estimate on [a, b] with |K15 - G7| as error and the L1 mass of f.
/// Nodes and weights come from boost; the rule itself is applied here so the
/// error is scaled with the interval (boost 1.74 returns it on [-1, 1]).
template <class F>
void kronrod15(F& f, double a, double b, double& value, double& error, double& l1) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    using G = boost::math::quadrature::gauss<double, 7>;
    const auto& x = GK::abscissa();
    const auto& wk = GK::weights();
    const auto& wg = G::weights();
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    const double f0 = f(c);
    double k = f0 * wk[0], g = f0 * wg[0], m = std::abs(f0) * wk[0];
    for (std::size_t i = 1; i < x.size(); ++i) {
        const double fp = f(c + h * x[i]), fm = f(c - h * x[i]);
        k += (fp + fm) * wk[i];
        m += (std::abs(fp) + std::abs(fm)) * wk[i];
        if (i % 2 == 0) g += (fp + fm) * wg[i / 2];
    }
    value = k * h;
    error = std::abs((k - g) * h);
    l1 = m * h;
}

/// Globally adaptive Gauss-Kronrod (7/15): the segment with the largest error
/// estimate is bisected until the total meets the tolerance, the estimate
/// reaches roundoff level, or the segment budget is spent. Nodes never touch
/// the endpoints.
template <class F>
Result adaptive(F&& f, double a, double b, const Options& opt = {}) {
    if (!(b > a)) return {};
    struct Segment {
        double a, b, value, error, l1;
        bool operator<(const Segment& o) const { return error < o.error; }
    };
    auto rule = [&](double lo, double hi) {
        Segment s{lo, hi, 0.0, 0.0, 0.0};
        kronrod15(f, lo, hi, s.value, s.error, s.l1);
        return s;
    };
    std::priority_queue<Segment> heap;
    heap.push(rule(a, b));
    double value = heap.top().value, error = heap.top().error, l1 = heap.top().l1;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (unsigned n = 1; n < opt.max_segments; ++n) {
        if (!std::isfinite(value)) break;
        if (error <= std::max(opt.abs_tol, opt.rel_tol * std::abs(value))) break;
        if (error <= 50.0 * eps * l1) break;
        const Segment s = heap.top();
        const double mid = 0.5 * (s.a + s.b);
        if (!(mid > s.a && mid < s.b)) break;
        heap.pop();
        const Segment left = rule(s.a, mid), right = rule(mid, s.b);
        value += left.value + right.value - s.value;
        error += left.error + right.error - s.error;
        l1 += left.l1 + right.l1 - s.l1;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to drop the drift of the running updates.
    value = error = 0.0;
    for (; !heap.empty(); heap.pop()) {
        value += heap.top().value;
        error += heap.top().error;
    }
    return {value, error};
}

namespace detail {

inline void check_budget(const Result& r, double l1_scale, const Options& opt,
                         const char* where) {
    if (!std::isfinite(r.value))
        throw QuadratureError(std::string(where) + ": non-finite integral");
    if (r.error > opt.rel_tol * std::max(std::abs(r.value), l1_scale) * 10.0 + opt.abs_tol)
        throw QuadratureError(std::string(where) + ": tolerance not reached (estimate " +
                              std::to_string(r.error) + ", value " +
                              std::to_string(r.value) + ")");
}

}  // namespace detail

/// Integrates F(w) over [lo, hi] where F may behave like w^{-beta} as w -> 0
/// (0 <= beta < 1). The interval is split on a mesh graded toward w = 0 with
/// exponent 2/(1-beta), merged with any caller-supplied breakpoints. The cell
/// touching w = 0 is integrated after the substitution w = v^{1/(1-beta)},
/// which makes the integrand bounded.
template <class F>
Result integrate_singular_end(F&& fn, double lo, double hi, double beta,
                              std::span<const double> breakpoints = {},
                              const Options& opt = {}) {
    if (!(hi > lo)) return {};
    if (beta < 0.0 || beta >= 1.0)
        throw DivergentIntegral("integrate_singular_end: exponent outside [0, 1)");
    if (beta == 0.0 && breakpoints.empty()) {
        const Result r = adaptive(fn, lo, hi, opt);
        detail::check_budget(r, std::abs(r.value), opt, "integrate_singular_end");
        return r;
    }

    std::vector<double> mesh;
    mesh.reserve(static_cast<std::size_t>(opt.graded_cells) + breakpoints.size() + 2);
    mesh.push_back(lo);
    const double grading = 2.0 / (1.0 - beta);
    for (int k = 1; beta > 0.0 && k < opt.graded_cells; ++k) {
        const double w = hi * std::pow(static_cast<double>(k) / opt.graded_cells, grading);
        if (w > lo && w < hi) mesh.push_back(w);
    }
    for (double b : breakpoints)
        if (b > lo && b < hi) mesh.push_back(b);
    mesh.push_back(hi);
    std::sort(mesh.begin(), mesh.end());
    mesh.erase(std::unique(mesh.begin(), mesh.end()), mesh.end());

    Result total;
    double l1_scale = 0.0;
    for (std::size_t c = 0; c + 1 < mesh.size(); ++c) {
        const double a = mesh[c], b = mesh[c + 1];
        Result r;
        if (c == 0 && beta > 0.0) {
            const double s = 1.0 / (1.0 - beta);
            auto g = [&](double v) {
                const double w = std::pow(v, s);
                if (!(w > 0.0)) return 0.0;
                return fn(w) * s * std::pow(v, s - 1.0);
            };
            r = adaptive(g, std::pow(a, 1.0 / s), std::pow(b, 1.0 / s), opt);
        } else {
            r = adaptive(fn, a, b, opt);
        }
        total.value += r.value;
        total.error += r.error;
        l1_scale += std::abs(r.value);
    }
    detail::check_budget(total, l1_scale, opt, "integrate_singular_end");
    return total;
}

}  // namespace svemp::quad
