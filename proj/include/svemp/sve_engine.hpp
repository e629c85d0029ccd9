#pragma once

// Monte Carlo paths of
//   X_t = x0(t) + int_0^t K_mu(s,t) mu(s,X_s) ds + int_0^t K_sigma(s,t) sigma(s,X_s) dB_s
// on a uniform grid, with the decomposition Z = A + M where A is the drift
// integral and M the stochastic integral. The discrete scheme is
//   X_i = x0(t_i) + sum_{j<i} Kbar_mu(j,i) dA_j + sum_{j<i} Kbar_sigma(j,i) dM_j,
// dA_j = A_{j+1} - A_j, dM_j = M_{j+1} - M_j, with Kbar the left-point value
// or the cell average of the kernel.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svemp/coefficients.hpp"
#include "svemp/errors.hpp"
#include "svemp/kernels.hpp"
#include "svemp/parallel.hpp"
#include "svemp/philox.hpp"

namespace svemp {

enum class Scheme { LeftPoint, KernelAveraged };

inline const char* to_string(Scheme s) {
    return s == Scheme::LeftPoint ? "left_point" : "kernel_averaged";
}

struct TimeGrid {
    double T = 1.0;
    std::size_t N = 2;

    double dt() const { return T / static_cast<double>(N); }
    double time(std::size_t i) const { return T * static_cast<double>(i) / static_cast<double>(N); }
    bool operator==(const TimeGrid&) const = default;
};

struct SimConfig {
    double T = 1.0;
    std::size_t steps = 256;
    std::size_t paths = 1000;
    std::uint64_t seed = 1;
    Scheme scheme = Scheme::KernelAveraged;
    std::function<double(double)> x0 = [](double) { return 0.0; };
    unsigned threads = 1;

    TimeGrid grid() const { return {T, steps}; }

    void validate() const {
        if (!(T > 0.0)) throw DomainError("SimConfig: T must be positive");
        if (steps < 2) throw DomainError("SimConfig: steps must be >= 2");
        if (paths < 1) throw DomainError("SimConfig: paths must be >= 1");
        if (!x0) throw DomainError("SimConfig: x0 missing");
    }
};

struct PathBundle {
    TimeGrid grid;
    std::vector<double> X, A, M, Z, dB;
    std::uint64_t seed = 0;
    std::size_t path_index = 0;
    Scheme scheme = Scheme::KernelAveraged;
    bool aborted = false;
    std::size_t abort_step = 0;

    void resize(const TimeGrid& g) {
        grid = g;
        X.assign(g.N + 1, 0.0);
        A.assign(g.N + 1, 0.0);
        M.assign(g.N + 1, 0.0);
        Z.assign(g.N + 1, 0.0);
        dB.assign(g.N, 0.0);
    }
};

struct Model {
    Coefficient mu;
    Coefficient sigma;
    KernelSpec k_mu;
    KernelSpec k_sigma;
};

namespace detail {

/// Dot product with four interleaved accumulators in a fixed order.
inline double dot(const double* w, const double* v, std::size_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        a0 += w[k] * v[k];
        a1 += w[k + 1] * v[k + 1];
        a2 += w[k + 2] * v[k + 2];
        a3 += w[k + 3] * v[k + 3];
    }
    double tail = 0.0;
    for (; k < n; ++k) tail += w[k] * v[k];
    return ((a0 + a1) + (a2 + a3)) + tail;
}

}  // namespace detail

/// Lower-triangular weight matrix Kbar(j, i), j < i, built once per
/// (kernel, grid, scheme) and shared read-only across paths. Constant kernels
/// collapse to c * (cumulative value); convolution kernels store one lag vector.
class VolterraWeights {
public:
    enum class Storage { Constant, Toeplitz, Packed };

    static VolterraWeights build(const KernelSpec& k, const TimeGrid& g, Scheme scheme) {
        VolterraWeights w;
        w.grid_ = g;
        w.scheme_ = scheme;
        const std::size_t N = g.N;
        const double dt = g.dt();
        if (auto c = k.constant_value()) {
            w.storage_ = Storage::Constant;
            w.constant_ = *c;
            return w;
        }
        if (scheme == Scheme::LeftPoint && k.is_singular())
            throw SingularityError("left-point weights requested for singular kernel " + k.label());
        if (k.is_convolution()) {
            w.storage_ = Storage::Toeplitz;
            // lag[m] for m = 1..N; reversed so row i is a contiguous suffix.
            std::vector<double> lag(N + 1, 0.0);
            for (std::size_t m = 1; m <= N; ++m) {
                const double tm = dt * static_cast<double>(m);
                lag[m] = scheme == Scheme::LeftPoint ? k.profile(tm)
                                                     : cell_integral(k, 0.0, dt, tm) / dt;
            }
            w.data_.resize(N);
            for (std::size_t r = 0; r < N; ++r) w.data_[r] = lag[N - r];
            return w;
        }
        w.storage_ = Storage::Packed;
        w.data_.resize(N * (N + 1) / 2);
        for (std::size_t i = 1; i <= N; ++i) {
            const double ti = g.time(i);
            double* row = w.data_.data() + offset(i);
            for (std::size_t j = 0; j < i; ++j) {
                const double tj = g.time(j);
                row[j] = scheme == Scheme::LeftPoint
                             ? k.general_eval(tj, ti)
                             : cell_integral(k, tj, g.time(j + 1), ti) / (g.time(j + 1) - tj);
            }
        }
        return w;
    }

    /// sum_{j<i} Kbar(j, i) * increments[j]; `cumulative[i]` is the running sum
    /// of the increments and is used only by constant kernels.
    double row_sum(std::size_t i, std::span<const double> increments,
                   std::span<const double> cumulative) const {
        switch (storage_) {
            case Storage::Constant: return constant_ * cumulative[i];
            case Storage::Toeplitz:
                return detail::dot(data_.data() + (grid_.N - i), increments.data(), i);
            case Storage::Packed: return detail::dot(data_.data() + offset(i), increments.data(), i);
        }
        return 0.0;
    }

    double weight(std::size_t j, std::size_t i) const {
        if (!(j < i && i <= grid_.N)) throw DomainError("VolterraWeights: need j < i <= N");
        switch (storage_) {
            case Storage::Constant: return constant_;
            case Storage::Toeplitz: return data_[grid_.N - i + j];
            case Storage::Packed: return data_[offset(i) + j];
        }
        return 0.0;
    }

    const TimeGrid& grid() const { return grid_; }
    Scheme scheme() const { return scheme_; }
    Storage storage() const { return storage_; }

private:
    static std::size_t offset(std::size_t i) { return i * (i - 1) / 2; }

    TimeGrid grid_;
    Scheme scheme_ = Scheme::KernelAveraged;
    Storage storage_ = Storage::Constant;
    double constant_ = 0.0;
    std::vector<double> data_;
};

/// Generates path p of an ensemble on demand. Immutable after construction and
/// safe to share between workers; path p depends only on (seed, p, grid, scheme,
/// model).
class Simulator {
public:
    Simulator(SimConfig cfg, Model model) : cfg_(std::move(cfg)), model_(std::move(model)) {
        cfg_.validate();
        if (cfg_.scheme == Scheme::LeftPoint &&
            (model_.k_mu.is_singular() || model_.k_sigma.is_singular())) {
            cfg_.scheme = Scheme::KernelAveraged;
            log_.emplace_back("left-point scheme replaced by kernel averaging: singular kernel");
        }
        w_mu_ = std::make_shared<const VolterraWeights>(
            VolterraWeights::build(model_.k_mu, cfg_.grid(), cfg_.scheme));
        w_sigma_ = std::make_shared<const VolterraWeights>(
            VolterraWeights::build(model_.k_sigma, cfg_.grid(), cfg_.scheme));
    }

    /// Shares prebuilt weights (same kernels, grid and scheme) with another simulator.
    Simulator(SimConfig cfg, Model model, const Simulator& weights_from)
        : cfg_(std::move(cfg)), model_(std::move(model)) {
        cfg_.validate();
        cfg_.scheme = weights_from.cfg_.scheme;
        log_ = weights_from.log_;
        if (!(cfg_.grid() == weights_from.cfg_.grid()))
            throw GridMismatch("Simulator: shared weights built for another grid");
        w_mu_ = weights_from.w_mu_;
        w_sigma_ = weights_from.w_sigma_;
    }

    void simulate_path(std::size_t p, PathBundle& out) const {
        const TimeGrid g = cfg_.grid();
        const std::size_t N = g.N;
        const double dt = g.dt();
        const double sqdt = std::sqrt(dt);
        out.resize(g);
        out.seed = cfg_.seed;
        out.path_index = p;
        out.scheme = cfg_.scheme;
        out.aborted = false;
        out.abort_step = 0;
        std::vector<double> dA(N, 0.0), dM(N, 0.0);
        for (std::size_t i = 0; i <= N; ++i) {
            const double ti = g.time(i);
            out.X[i] = cfg_.x0(ti) + w_mu_->row_sum(i, dA, out.A) + w_sigma_->row_sum(i, dM, out.M);
            if (!std::isfinite(out.X[i])) {
                out.aborted = true;
                out.abort_step = i;
                return;
            }
            if (i == N) break;
            const double mu_i = model_.mu(ti, out.X[i]);
            const double sig_i = model_.sigma(ti, out.X[i]);
            out.dB[i] = sqdt * rng::normal(cfg_.seed, p, i);
            out.A[i + 1] = out.A[i] + mu_i * dt;
            out.M[i + 1] = out.M[i] + sig_i * out.dB[i];
            out.Z[i + 1] = out.A[i + 1] + out.M[i + 1];
            dA[i] = out.A[i + 1] - out.A[i];
            dM[i] = out.M[i + 1] - out.M[i];
        }
    }

    PathBundle simulate_path(std::size_t p) const {
        PathBundle b;
        simulate_path(p, b);
        return b;
    }

    template <class F>
    void with_path(std::size_t p, F&& f) const {
        PathBundle b;
        simulate_path(p, b);
        f(static_cast<const PathBundle&>(b));
    }

    std::size_t size() const { return cfg_.paths; }
    TimeGrid grid() const { return cfg_.grid(); }
    std::uint64_t seed() const { return cfg_.seed; }
    unsigned threads() const { return cfg_.threads; }
    const SimConfig& config() const { return cfg_; }
    const Model& model() const { return model_; }
    const std::vector<std::string>& log() const { return log_; }
    const VolterraWeights& weights_mu() const { return *w_mu_; }
    const VolterraWeights& weights_sigma() const { return *w_sigma_; }

private:
    SimConfig cfg_;
    Model model_;
    std::shared_ptr<const VolterraWeights> w_mu_, w_sigma_;
    std::vector<std::string> log_;
};

/// Materialized ensemble.
struct Ensemble {
    SimConfig config;
    std::vector<PathBundle> paths;
    std::vector<std::size_t> aborted;
    std::vector<std::string> log;

    std::size_t size() const { return paths.size(); }
    TimeGrid grid() const { return config.grid(); }
    std::uint64_t seed() const { return config.seed; }
    unsigned threads() const { return config.threads; }

    template <class F>
    void with_path(std::size_t p, F&& f) const {
        f(paths[p]);
    }
};

/// Anything that can hand out path bundles by index.
template <class S>
concept PathSource = requires(const S& s, std::size_t i) {
    { s.size() } -> std::convertible_to<std::size_t>;
    { s.grid() } -> std::convertible_to<TimeGrid>;
    { s.seed() } -> std::convertible_to<std::uint64_t>;
    { s.threads() } -> std::convertible_to<unsigned>;
    s.with_path(i, [](const PathBundle&) {});
};

/// Maps every path to a value in parallel and folds the values in path order.
/// Aborted paths are passed to the map as well; callers decide how to treat them.
template <PathSource Src, class Map, class Fold>
void map_fold(const Src& src, Map&& map, Fold&& fold, std::size_t block = 1024) {
    using R = std::invoke_result_t<Map&, const PathBundle&>;
    const std::size_t n = src.size();
    std::vector<R> buf;
    for (std::size_t start = 0; start < n; start += block) {
        const std::size_t len = std::min(block, n - start);
        buf.assign(len, R{});
        parallel_for(len, src.threads(), [&](unsigned, std::size_t k) {
            src.with_path(start + k, [&](const PathBundle& b) { buf[k] = map(b); });
        }, 8);
        for (std::size_t k = 0; k < len; ++k) fold(start + k, std::move(buf[k]));
    }
}

/// Fraction of aborted paths above which a run fails.
inline constexpr double kMaxAbortFraction = 1e-3;

inline Ensemble simulate(const SimConfig& cfg, const Model& model) {
    const Simulator sim(cfg, model);
    Ensemble ens;
    ens.config = sim.config();
    ens.log = sim.log();
    ens.paths.resize(cfg.paths);
    parallel_for(cfg.paths, cfg.threads,
                 [&](unsigned, std::size_t p) { sim.simulate_path(p, ens.paths[p]); }, 16);
    for (const auto& b : ens.paths)
        if (b.aborted) ens.aborted.push_back(b.path_index);
    if (!ens.aborted.empty()) {
        const auto& first = ens.paths[ens.aborted.front()];
        ens.log.emplace_back(std::to_string(ens.aborted.size()) + " paths aborted (first: path " +
                             std::to_string(first.path_index) + ", step " +
                             std::to_string(first.abort_step) + ")");
        if (static_cast<double>(ens.aborted.size()) > kMaxAbortFraction * static_cast<double>(cfg.paths))
            throw NonFiniteState("non-finite state in path " + std::to_string(first.path_index) +
                                 " at step " + std::to_string(first.abort_step) + "; " +
                                 std::to_string(ens.aborted.size()) + " of " +
                                 std::to_string(cfg.paths) + " paths aborted");
    }
    return ens;
}

inline Ensemble simulate(const SimConfig& cfg, const Coefficient& mu, const Coefficient& sigma,
                         const KernelSpec& k_mu, const KernelSpec& k_sigma) {
    return simulate(cfg, Model{mu, sigma, k_mu, k_sigma});
}

/// One simulator per mollification level, all driven by the same Brownian
/// increments (same seed) and sharing the kernel weights.
inline std::map<int, Simulator> mollified_simulators(const SimConfig& cfg, const Model& model,
                                                     const std::vector<int>& levels) {
    std::map<int, Simulator> out;
    const Simulator* first = nullptr;
    for (int n : levels) {
        Model m{mollify(model.mu, n, 0, cfg.T).as_coefficient(),
                mollify(model.sigma, n, 0, cfg.T).as_coefficient(), model.k_mu, model.k_sigma};
        auto it = first ? out.emplace(n, Simulator(cfg, std::move(m), *first)).first
                        : out.emplace(n, Simulator(cfg, std::move(m))).first;
        if (!first) first = &it->second;
    }
    return out;
}

inline std::map<int, Ensemble> simulate_mollified_sequence(const SimConfig& cfg, const Model& model,
                                                           const std::vector<int>& levels) {
    std::map<int, Ensemble> out;
    for (int n : levels) {
        Model m{mollify(model.mu, n, 0, cfg.T).as_coefficient(),
                mollify(model.sigma, n, 0, cfg.T).as_coefficient(), model.k_mu, model.k_sigma};
        out.emplace(n, simulate(cfg, m));
    }
    return out;
}

/// x0(t_i) + sum Kbar_mu dA + sum Kbar_sigma dM from a bundle's A and M.
inline std::vector<double> reconstruct(const std::function<double(double)>& x0,
                                       const VolterraWeights& w_mu, const VolterraWeights& w_sigma,
                                       const PathBundle& b) {
    const TimeGrid g = b.grid;
    if (!(w_mu.grid() == g) || !(w_sigma.grid() == g) || b.A.size() != g.N + 1 ||
        b.M.size() != g.N + 1)
        throw GridMismatch("reconstruct: bundle grid does not match the weights");
    std::vector<double> dA(g.N), dM(g.N), out(g.N + 1);
    for (std::size_t j = 0; j < g.N; ++j) {
        dA[j] = b.A[j + 1] - b.A[j];
        dM[j] = b.M[j + 1] - b.M[j];
    }
    for (std::size_t i = 0; i <= g.N; ++i)
        out[i] = x0(g.time(i)) + w_mu.row_sum(i, dA, b.A) + w_sigma.row_sum(i, dM, b.M);
    return out;
}

inline std::vector<double> reconstruct(const std::function<double(double)>& x0,
                                       const KernelSpec& k_mu, const KernelSpec& k_sigma,
                                       const PathBundle& b) {
    return reconstruct(x0, VolterraWeights::build(k_mu, b.grid, b.scheme),
                       VolterraWeights::build(k_sigma, b.grid, b.scheme), b);
}

}  // namespace svemp
