#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "svemp/cli/archive.hpp"
#include "svemp/cli/config.hpp"
#include "svemp/svemp.hpp"

namespace svemp::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "svemp.report/1";

struct CsvRow {
    std::string quantity;
    double scale = 0.0;
    double value = 0.0;
    double stderr_ = 0.0;
};

struct Report {
    std::string check;
    std::string certifies;
    bool passed = false;
    json body = json::object();
    std::vector<CsvRow> rows;
};

struct RunOptions {
    unsigned threads = 1;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::set<std::string>> formats;
    bool write = true;
};

struct RunResult {
    bool passed = true;
    std::vector<Report> reports;
    Archive archive;
    std::string out_dir;
    std::vector<std::string> log;
};

namespace detail {

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const KernelCheckReport& r) {
    json j;
    j["assumption"] = r.assumption_id;
    j["passed"] = r.passed;
    j["worst_ratio"] = finite_or_null(r.worst_ratio);
    j["witness"] = {r.witness.first, r.witness.second};
    j["grid"] = r.grid_meta;
    j["tolerance"] = r.tolerance;
    json m = json::object();
    for (const auto& [k, v] : r.measured) m[k] = finite_or_null(v);
    j["measured"] = m;
    j["branches"] = r.branches;
    j["notes"] = r.notes;
    return j;
}

inline json to_json(const CheckReport& r) {
    json j;
    j["id"] = r.id;
    j["passed"] = r.passed;
    j["worst_ratio"] = finite_or_null(r.worst_ratio);
    json m = json::object();
    for (const auto& [k, v] : r.measured) m[k] = finite_or_null(v);
    j["measured"] = m;
    j["notes"] = r.notes;
    return j;
}

inline std::string out_dir(const RunConfig& cfg, const RunOptions& opt) {
    if (opt.out) return *opt.out;
    if (const char* env = std::getenv("SVEMP_OUT"); env && *env) return env;
    return cfg.directory;
}

inline std::vector<TestFunction> battery(const RunConfig& cfg, double scale) {
    std::vector<TestFunction> b;
    if (cfg.battery_default) b = testfn::default_battery(scale);
    for (const auto& f : cfg.battery_extra) {
        const double c = detail::param(f, "c", 0.0), w = detail::param(f, "w", 1.0);
        b.push_back(f.name == "bump" ? testfn::bump(c, w) : testfn::odd_bump(c, w));
    }
    return b;
}

inline Simulator diag_simulator(const RunConfig& cfg, std::size_t N, unsigned threads) {
    auto sc = sim_config(cfg, threads);
    sc.steps = N;
    sc.paths = std::max<std::size_t>(1, std::min(cfg.diag_paths, cfg.Mc));
    return Simulator(sc, model(cfg));
}

inline std::vector<std::size_t> refinement_steps(std::size_t N) {
    std::vector<std::size_t> out;
    for (std::size_t n : {N / 4, N / 2, N})
        if (n >= 2 && (out.empty() || n > out.back())) out.push_back(n);
    return out;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace detail

inline Report kernel_report(const RunConfig& cfg) {
    const auto m = model(cfg);
    Report rep;
    rep.check = "kernel-assumptions";
    rep.certifies = "kernel integrability (L1 drift, L2 diffusion); kernel increment regularity; "
                    "kernel structure (bounded smooth or convolution)";
    std::vector<double> grid;
    for (int k = 1; k <= 16; ++k) grid.push_back(cfg.T * k / 16.0);
    const auto base = check_base_integrability(m.k_mu, m.k_sigma, grid);
    rep.body["integrability"] = detail::to_json(base);
    rep.passed = base.passed;
    for (const auto& [k, v] : base.measured) rep.rows.push_back({"integrability." + k, 0.0, v, 0.0});
    if (base.passed && cfg.p && cfg.gamma) {
        RegularityParams params{*cfg.p, *cfg.gamma, std::nullopt};
        const auto pairs = dyadic_pair_grid(cfg.T, {0.5 * cfg.T, 0.75 * cfg.T}, 4, 13);
        const auto reg = check_regularity(m.k_mu, m.k_sigma, params, pairs);
        rep.body["regularity"] = detail::to_json(reg);
        rep.passed = rep.passed && reg.passed;
        for (const auto& [k, v] : reg.measured) rep.rows.push_back({"regularity." + k, 0.0, v, 0.0});
    }
    if (base.passed) {
        const auto st = check_structural(m.k_mu, m.k_sigma, cfg.p_struct, StructuralBranch::Any);
        rep.body["structure"] = detail::to_json(st);
        rep.passed = rep.passed && st.passed;
        for (const auto& [k, v] : st.measured) rep.rows.push_back({"structure." + k, 0.0, v, 0.0});
    }
    return rep;
}

/// Ensemble statistics recorded in the archive and compared on replay. All sums
/// run in path order, so they are bitwise reproducible for any worker count.
template <PathSource Src>
std::vector<Statistic> ensemble_statistics(const Src& src) {
    const TimeGrid g = src.grid();
    const std::size_t probes[3] = {g.N / 4, g.N / 2, g.N};
    struct PathStats {
        bool aborted = false;
        double x[3] = {0, 0, 0};
        double a = 0, m = 0, sup = 0;
        std::uint64_t digest = 0;
    };
    double sx[3] = {0, 0, 0}, sxx = 0, sa = 0, sm = 0, ssup = 0;
    std::size_t used = 0, aborted = 0;
    std::uint64_t digest = 0xcbf29ce484222325ull;
    map_fold(
        src,
        [&](const PathBundle& b) {
            PathStats ps;
            ps.aborted = b.aborted;
            std::uint64_t h = fnv1a(&b.aborted, sizeof b.aborted);
            if (!b.aborted) {
                for (int k = 0; k < 3; ++k) ps.x[k] = b.X[probes[k]];
                ps.a = b.A.back();
                ps.m = b.M.back();
                for (double x : b.X) ps.sup = std::max(ps.sup, std::abs(x));
                h = fnv1a(b.X.data(), b.X.size() * sizeof(double), h);
                h = fnv1a(b.A.data(), b.A.size() * sizeof(double), h);
                h = fnv1a(b.M.data(), b.M.size() * sizeof(double), h);
            }
            ps.digest = h;
            return ps;
        },
        [&](std::size_t, PathStats&& ps) {
            digest = fnv1a(&ps.digest, sizeof ps.digest, digest);
            if (ps.aborted) {
                ++aborted;
                return;
            }
            ++used;
            for (int k = 0; k < 3; ++k) sx[k] += ps.x[k];
            sxx += ps.x[2] * ps.x[2];
            sa += ps.a;
            sm += ps.m;
            ssup += ps.sup;
        });
    const double n = used > 0 ? static_cast<double>(used) : 1.0;
    return {Statistic::real("paths_used", static_cast<double>(used)),
            Statistic::real("paths_aborted", static_cast<double>(aborted)),
            Statistic::real("mean.X(T/4)", sx[0] / n),
            Statistic::real("mean.X(T/2)", sx[1] / n),
            Statistic::real("mean.X(T)", sx[2] / n),
            Statistic::real("mean.X(T)^2", sxx / n),
            Statistic::real("mean.A(T)", sa / n),
            Statistic::real("mean.M(T)", sm / n),
            Statistic::real("mean.sup|X|", ssup / n),
            Statistic::digest("digest.paths", digest)};
}

namespace detail {

inline Report reconstruction_report(const RunConfig& cfg, const Simulator& sim) {
    Report rep;
    rep.check = "reconstruction";
    rep.certifies = "reconstruction identity X = x0 + int K_mu dA + int K_sigma dM";
    const std::size_t n = std::min(cfg.diag_paths, sim.size());
    const auto x0 = sim.config().x0;
    std::size_t mismatched = 0, checked = 0;
    for (std::size_t p = 0; p < n; ++p) {
        const auto b = sim.simulate_path(p);
        if (b.aborted) continue;
        ++checked;
        const auto xr = reconstruct(x0, sim.weights_mu(), sim.weights_sigma(), b);
        if (std::memcmp(xr.data(), b.X.data(), xr.size() * sizeof(double)) != 0) ++mismatched;
    }
    rep.passed = mismatched == 0;
    rep.body["paths_checked"] = checked;
    rep.body["paths_not_bitwise_equal"] = mismatched;
    rep.rows.push_back({"reconstruction.mismatched_paths", 0.0, static_cast<double>(mismatched), 0.0});
    return rep;
}

inline Report martingale_report(const RunConfig& cfg, const Simulator& sim) {
    Report rep;
    rep.check = "martingale";
    rep.certifies = "local martingale property of M^f = f(Z) - int A^f ds";
    const double scale = battery_scale(sim);
    const auto bat = battery(cfg, scale);
    const auto res = martingale_battery(sim, sim.model().mu, sim.model().sigma, bat,
                                        default_lags(sim.grid()), all_statistics());
    rep.passed = res.passed;
    rep.body["battery_scale"] = scale;
    rep.body["max_abs_z"] = res.max_abs_z;
    rep.body["note"] = res.note;
    json fs = json::array();
    for (const auto& f : res.functions) {
        json jf;
        jf["f"] = f.f_label;
        jf["threshold"] = f.threshold;
        jf["max_abs_z"] = finite_or_null(f.max_abs_z);
        jf["paths_used"] = f.paths_used;
        jf["passed"] = f.passed;
        json es = json::array();
        for (const auto& e : f.entries) {
            es.push_back({{"f", f.f_label},
                          {"lag", {e.lag.first, e.lag.second}},
                          {"statistic", to_string(e.statistic)},
                          {"mean", e.mean},
                          {"stderr", e.stderr_},
                          {"z", finite_or_null(e.z)},
                          {"passed", std::abs(e.z) <= f.threshold}});
            rep.rows.push_back({"z[" + f.f_label + "," + to_string(e.statistic) + "]",
                                e.lag.second - e.lag.first, e.z, 1.0});
        }
        jf["entries"] = es;
        fs.push_back(jf);
    }
    rep.body["functions"] = fs;
    return rep;
}

inline Report qv_report(const Simulator& sim) {
    Report rep;
    rep.check = "qv";
    rep.certifies = "semimartingale characteristic: <M> = int sigma(s, X_s)^2 ds";
    const auto q = qv_test(sim, sim.model().sigma);
    rep.passed = q.passed;
    rep.body["steps"] = q.steps;
    rep.body["median_relative_error"] = q.median_relative_error;
    rep.body["threshold"] = q.threshold;
    rep.body["mean_realized"] = q.mean_realized;
    rep.body["mean_integrated"] = q.mean_integrated;
    rep.rows.push_back({"qv.median_relative_error", static_cast<double>(q.steps), q.median_relative_error, 0.0});
    return rep;
}

inline Report holder_report(const RunConfig& cfg, const Simulator& sim) {
    Report rep;
    rep.check = "holder";
    rep.certifies = "Hoelder modification: increment moment scaling";
    HolderOptions opt;
    opt.gamma = cfg.gamma;
    opt.regularity_p = cfg.p;
    opt.expected_beta = cfg.holder_expected;
    const auto h = holder_estimate(sim, cfg.holder_p, sim.config().x0, opt);
    rep.passed = h.passed;
    rep.body["p"] = h.p;
    rep.body["gaps"] = h.gaps;
    rep.body["moments"] = h.moments;
    rep.body["slope"] = h.slope;
    rep.body["r2"] = h.r2;
    rep.body["beta_hat"] = h.beta_hat;
    rep.body["band"] = {h.band_low, h.band_high ? json(*h.band_high) : json(nullptr)};
    if (h.expected_beta) rep.body["expected_beta"] = *h.expected_beta;
    for (std::size_t k = 0; k < h.gaps.size(); ++k)
        rep.rows.push_back({"holder.increment_moment", h.gaps[k], h.moments[k], 0.0});
    rep.rows.push_back({"holder.beta_hat", 0.0, h.beta_hat, 0.0});
    return rep;
}

inline Report moments_report(const RunConfig& cfg, const Simulator& sim) {
    Report rep;
    rep.check = "moments";
    rep.certifies = "finite moments sup_t E|X_t|^q (empirical)";
    rep.passed = true;
    json arr = json::array();
    for (double q : cfg.q) {
        const auto m = moment_sup(sim, q);
        const bool ok = std::isfinite(m.value) && std::isfinite(m.stderr_);
        rep.passed = rep.passed && ok;
        arr.push_back({{"q", q}, {"value", finite_or_null(m.value)}, {"argmax_time", m.argmax_time},
                       {"stderr", finite_or_null(m.stderr_)}});
        rep.rows.push_back({"moment_sup", q, m.value, m.stderr_});
    }
    rep.body["moments"] = arr;
    rep.body["note"] = "law-level integrability is not verifiable by simulation; finite empirical moments only";
    return rep;
}

template <class Residual>
Report refinement_report(const RunConfig& cfg, unsigned threads, const std::string& check,
                         const std::string& certifies, Residual&& residual) {
    Report rep;
    rep.check = check;
    rep.certifies = certifies;
    std::vector<std::size_t> steps;
    std::vector<double> res;
    for (std::size_t N : refinement_steps(cfg.N)) {
        const auto sim = diag_simulator(cfg, N, threads);
        std::vector<double> per(sim.size(), -1.0);
        parallel_for(sim.size(), threads, [&](unsigned, std::size_t p) {
            const auto b = sim.simulate_path(p);
            if (!b.aborted) per[p] = residual(sim, b);
        }, 4);
        std::vector<double> ok;
        for (double v : per)
            if (v >= 0.0) ok.push_back(v);
        steps.push_back(N);
        res.push_back(mean(ok));
        rep.rows.push_back({check + ".mean_sup_residual", static_cast<double>(N), res.back(), 0.0});
    }
    const bool exact = std::all_of(res.begin(), res.end(), [](double v) { return v <= 1e-12; });
    rep.body["steps"] = steps;
    rep.body["mean_sup_residual"] = res;
    rep.body["paths_per_level"] = std::min(cfg.diag_paths, cfg.Mc);
    if (exact) {
        rep.passed = true;
        rep.body["exact"] = true;
    } else if (steps.size() >= 2) {
        const auto study = refinement_rate(steps, res);
        rep.body["rate"] = study.rate;
        rep.body["r2"] = study.r2;
        rep.body["min_rate"] = 0.5;
        rep.body["min_r2"] = 0.95;
        rep.passed = study.rate >= 0.5 && study.r2 >= 0.95;
    } else {
        rep.passed = false;
        rep.body["note"] = "grid too coarse for a refinement study";
    }
    return rep;
}

inline Report converge_report(const RunConfig& cfg, unsigned threads) {
    Report rep;
    rep.check = "converge";
    rep.certifies = "convergence of the mollified Lipschitz approximations (coupled noise)";
    const auto sims = mollified_simulators(sim_config(cfg, threads), model(cfg), cfg.levels);
    const auto c = convergence_report(sims);
    rep.passed = c.monotone;
    rep.body["levels"] = c.levels;
    rep.body["probe_time"] = c.probe_time;
    rep.body["paths_used"] = c.paths_used;
    rep.body["monotone_median"] = c.monotone;
    rep.body["monotone_q90"] = c.monotone_q90;
    rep.body["note"] = c.note;
    json pairs = json::array();
    for (const auto& lp : c.pairs) {
        pairs.push_back({{"from", lp.from}, {"to", lp.to}, {"median_sup", lp.median_sup},
                         {"q90_sup", lp.q90_sup}, {"max_sup", lp.max_sup}, {"ks_distance", lp.ks_distance}});
        rep.rows.push_back({"converge.median_sup", static_cast<double>(lp.from), lp.median_sup, 0.0});
        rep.rows.push_back({"converge.q90_sup", static_cast<double>(lp.from), lp.q90_sup, 0.0});
        rep.rows.push_back({"converge.ks_distance", static_cast<double>(lp.from), lp.ks_distance, 0.0});
    }
    rep.body["pairs"] = pairs;
    return rep;
}

/// Runs one check; library errors other than configuration errors become a
/// failed report carrying the message.
template <class F>
Report guarded(const std::string& check, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        Report rep;
        rep.check = check;
        rep.passed = false;
        rep.body["error"] = e.what();
        return rep;
    }
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    out << s;
}

inline std::string csv_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline json report_json(const Report& r, const std::string& hash) {
    json j;
    j["schema"] = kReportSchema;
    j["check"] = r.check;
    j["certifies"] = r.certifies;
    j["config_hash"] = hash;
    j["passed"] = r.passed;
    for (const auto& [k, v] : r.body.items()) j[k] = v;
    return j;
}

/// CSV columns: quantity,scale,value,stderr.
inline std::string report_csv(const Report& r) {
    std::string s = "quantity,scale,value,stderr\n";
    for (const auto& row : r.rows)
        s += row.quantity + "," + detail::csv_number(row.scale) + "," + detail::csv_number(row.value) +
             "," + detail::csv_number(row.stderr_) + "\n";
    return s;
}

/// One row per grid point per path: path_id,t,X,A,M,Z,dB (dB empty at t = T).
template <PathSource Src>
std::string paths_csv(const Src& src, std::size_t count) {
    std::string s = "path_id,t,X,A,M,Z,dB\n";
    const TimeGrid g = src.grid();
    for (std::size_t p = 0; p < std::min(count, src.size()); ++p)
        src.with_path(p, [&](const PathBundle& b) {
            const std::size_t last = b.aborted ? b.abort_step : g.N;
            for (std::size_t i = 0; i <= last && i <= g.N; ++i) {
                s += std::to_string(p) + "," + detail::csv_number(g.time(i)) + "," +
                     detail::csv_number(b.X[i]) + "," + detail::csv_number(b.A[i]) + "," +
                     detail::csv_number(b.M[i]) + "," + detail::csv_number(b.Z[i]) + ",";
                if (i < g.N) s += detail::csv_number(b.dB[i]);
                s += "\n";
            }
        });
    return s;
}

inline void write_reports(const RunResult& res, const RunConfig& cfg, const RunOptions& opt,
                          bool with_archive = true) {
    namespace fs = std::filesystem;
    fs::create_directories(res.out_dir);
    const auto formats = opt.formats.value_or(cfg.formats);
    const std::string hash = config_hash(cfg);
    json summary;
    summary["schema"] = kReportSchema;
    summary["check"] = "summary";
    summary["config_hash"] = hash;
    summary["passed"] = res.passed;
    json checks = json::object();
    for (const auto& r : res.reports) {
        checks[r.check] = r.passed;
        if (formats.count("json")) detail::write_text(fs::path(res.out_dir) / (r.check + ".json"), report_json(r, hash).dump(2) + "\n");
        if (formats.count("csv")) detail::write_text(fs::path(res.out_dir) / (r.check + ".csv"), report_csv(r));
    }
    summary["checks"] = checks;
    summary["log"] = res.log;
    json st = json::object();
    for (const auto& s : res.archive.stats) st[s.name] = s.show();
    summary["statistics"] = st;
    detail::write_text(fs::path(res.out_dir) / "summary.json", summary.dump(2) + "\n");
    if (with_archive) write_archive((fs::path(res.out_dir) / "run.svarc").string(), res.archive);
}

/// Applies command-line overrides to a parsed configuration.
inline RunConfig apply_overrides(RunConfig cfg, const RunOptions& opt) {
    if (opt.seed) cfg.seed = *opt.seed;
    return cfg;
}

inline RunResult run_pipeline(RunConfig cfg, const RunOptions& opt = {}) {
    cfg = apply_overrides(std::move(cfg), opt);
    validate(cfg);
    RunResult res;
    res.out_dir = detail::out_dir(cfg, opt);
    const unsigned threads = std::max(1u, opt.threads);

    // Integrability gates the simulation; the full kernel report is produced on request.
    const auto m = model(cfg);
    std::vector<double> grid;
    for (int k = 1; k <= 16; ++k) grid.push_back(cfg.T * k / 16.0);
    const bool integrable = check_base_integrability(m.k_mu, m.k_sigma, grid).passed;
    if (cfg.wants("kernel-assumptions"))
        res.reports.push_back(detail::guarded("kernel-assumptions", [&] { return kernel_report(cfg); }));
    if (!integrable) {
        res.log.emplace_back("kernel integrability failed; simulation skipped");
        res.passed = false;
        res.archive = {cfg.canonical, cfg.seed, {}};
        if (opt.write) write_reports(res, cfg, opt);
        return res;
    }

    const Simulator sim(sim_config(cfg, threads), m);
    res.log = sim.log();
    res.archive = {cfg.canonical, cfg.seed, ensemble_statistics(sim)};
    const double aborted = std::bit_cast<double>(res.archive.stats[1].bits);
    if (aborted > kMaxAbortFraction * static_cast<double>(cfg.Mc)) {
        res.log.emplace_back(std::to_string(static_cast<long long>(aborted)) +
                             " paths hit a non-finite state; run failed");
        res.passed = false;
    }

    res.reports.push_back(detail::reconstruction_report(cfg, sim));
    if (cfg.wants("martingale"))
        res.reports.push_back(detail::guarded("martingale", [&] { return detail::martingale_report(cfg, sim); }));
    if (cfg.wants("qv")) res.reports.push_back(detail::guarded("qv", [&] { return detail::qv_report(sim); }));
    if (cfg.wants("holder"))
        res.reports.push_back(detail::guarded("holder", [&] { return detail::holder_report(cfg, sim); }));
    if (cfg.wants("moments"))
        res.reports.push_back(detail::guarded("moments", [&] { return detail::moments_report(cfg, sim); }));
    if (cfg.wants("ibp"))
        res.reports.push_back(detail::guarded("ibp", [&] {
            return detail::refinement_report(
                cfg, threads, "ibp", "integration-by-parts identity for bounded smooth K_sigma",
                [](const Simulator& s, const PathBundle& b) {
                    return ibp_identity_residual(b, s.config().x0, s.weights_mu(), s.model().k_sigma,
                                                 s.model().mu);
                });
        }));
    if (cfg.wants("fubini"))
        res.reports.push_back(detail::guarded("fubini", [&] {
            // Midpoint lag weights give a refinement study; exact cell integrals
            // make the identity the discrete adjoint of the scheme.
            auto rep = detail::refinement_report(
                cfg, threads, "fubini", "Fubini identity for convolution kernels",
                [&m](const Simulator& s, const PathBundle& b) {
                    return fubini_identity_residual(b, s.config().x0, m.k_mu, m.k_sigma, LagRule::Midpoint);
                });
            const auto sim = detail::diag_simulator(cfg, cfg.N, threads);
            const LagIntegrals c_mu(m.k_mu, sim.grid()), c_sigma(m.k_sigma, sim.grid());
            std::vector<double> per(sim.size(), 0.0);
            parallel_for(sim.size(), threads, [&](unsigned, std::size_t p) {
                const auto b = sim.simulate_path(p);
                if (!b.aborted) per[p] = fubini_identity_residual(b, sim.config().x0, c_mu, c_sigma);
            }, 4);
            const double cell = per.empty() ? 0.0 : *std::max_element(per.begin(), per.end());
            rep.body["lag_rule"] = "midpoint";
            rep.body["cell_rule_max_residual"] = cell;
            rep.rows.push_back({"fubini.cell_rule_max_residual", static_cast<double>(cfg.N), cell, 0.0});
            rep.passed = rep.passed && cell <= 1e-10;
            return rep;
        }));
    if (cfg.wants("converge"))
        res.reports.push_back(detail::guarded("converge", [&] { return detail::converge_report(cfg, threads); }));

    for (const auto& r : res.reports) res.passed = res.passed && r.passed;
    if (opt.write) {
        write_reports(res, cfg, opt);
        if (cfg.export_paths > 0)
            detail::write_text(std::filesystem::path(res.out_dir) / "paths.csv", paths_csv(sim, cfg.export_paths));
    }
    return res;
}

struct ReplayResult {
    bool match = true;
    std::string first_difference;
    std::vector<Statistic> recorded, replayed;
};

/// Regenerates the archived ensemble and compares its statistics bit for bit.
inline ReplayResult replay_archive(const Archive& a, unsigned threads) {
    auto cfg = parse_config(a.config_text);
    cfg.seed = a.seed;
    validate(cfg);
    ReplayResult out;
    out.recorded = a.stats;
    const Simulator sim(sim_config(cfg, std::max(1u, threads)), model(cfg));
    out.replayed = a.stats.empty() ? std::vector<Statistic>{} : ensemble_statistics(sim);
    if (out.recorded.size() != out.replayed.size()) {
        out.match = false;
        out.first_difference = "statistics count: recorded " + std::to_string(out.recorded.size()) +
                               ", replayed " + std::to_string(out.replayed.size());
        return out;
    }
    for (std::size_t k = 0; k < out.recorded.size(); ++k) {
        const auto& r = out.recorded[k];
        const auto& p = out.replayed[k];
        if (r.name != p.name || r.bits != p.bits) {
            out.match = false;
            out.first_difference = r.name + ": recorded " + r.show() + ", replayed " + p.show();
            return out;
        }
    }
    return out;
}

inline Report mollify_report(const RunConfig& cfg) {
    Report rep;
    rep.check = "mollify";
    rep.certifies = "mollified coefficients: growth 2C, Lipschitz, locally uniform convergence";
    MollifyCheckOptions opt;
    opt.horizon = cfg.T;
    opt.final_tolerance = cfg.mollify_tolerance;
    rep.passed = true;
    for (const auto& [name, fam] : {std::pair{"mu", cfg.mu}, std::pair{"sigma", cfg.sigma}}) {
        const auto f = make_coefficient(fam, std::string("model.") + name);
        const auto r = verify_mollified_properties(f, cfg.levels, cfg.radius, opt);
        rep.body[name] = detail::to_json(r);
        rep.passed = rep.passed && r.passed;
        for (int n : cfg.levels) {
            const std::string tag = "n=" + std::to_string(n);
            rep.rows.push_back({std::string(name) + ".sup_error", static_cast<double>(n),
                                r.measured.at("sup_error_" + tag), 0.0});
            rep.rows.push_back({std::string(name) + ".lipschitz", static_cast<double>(n),
                                r.measured.at("lipschitz_" + tag), 0.0});
        }
    }
    return rep;
}

}  // namespace svemp::cli
