#pragma once

// Run configuration: a key-value text file with [model], [sim], [checks] and
// [output] sections. Model entries name a family with parameters, e.g.
//   K_sigma = fractional{alpha=0.25}
// See README.md for the full grammar.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "svemp/coefficients.hpp"
#include "svemp/errors.hpp"
#include "svemp/kernels.hpp"
#include "svemp/sve_engine.hpp"

namespace svemp::cli {

struct Family {
    std::string name;
    std::map<std::string, double> params;
    std::string text;
};

struct RunConfig {
    // [model]
    Family x0{"constant", {{"c", 0.0}}, "constant{c=0}"};
    Family mu{"constant", {{"c", 0.0}}, "constant{c=0}"};
    Family sigma{"constant", {{"c", 1.0}}, "constant{c=1}"};
    Family k_mu{"constant", {{"c", 1.0}}, "constant{c=1}"};
    Family k_sigma{"constant", {{"c", 1.0}}, "constant{c=1}"};
    // [sim]
    double T = 1.0;
    std::size_t N = 256;
    std::size_t Mc = 10000;
    std::uint64_t seed = 1;
    Scheme scheme = Scheme::KernelAveraged;
    // [checks]
    std::vector<std::string> checks;
    std::optional<double> p;
    std::optional<double> gamma;
    double p_struct = 2.0;
    std::vector<double> q{2.0};
    double holder_p = 2.0;
    std::optional<double> holder_expected;
    std::vector<int> levels{2, 4, 8, 16};
    std::vector<Family> battery_extra;
    bool battery_default = true;
    std::size_t diag_paths = 200;
    double radius = 4.0;
    double mollify_tolerance = 0.05;
    // [output]
    std::string directory = "svemp-out";
    std::set<std::string> formats{"json", "csv"};
    std::size_t export_paths = 0;

    /// Normalized text the run was parsed from (after overrides); archived.
    std::string canonical;

    bool wants(const std::string& check) const {
        return std::find(checks.begin(), checks.end(), check) != checks.end();
    }
};

inline const std::set<std::string>& known_checks() {
    static const std::set<std::string> k{"kernel-assumptions", "martingale", "qv", "holder",
                                         "moments", "ibp", "fubini", "converge"};
    return k;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : s) {
        if (c == '{') ++depth;
        if (c == '}') --depth;
        if (c == sep && depth == 0) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
        const auto u = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

inline Family parse_family(const std::string& key, const std::string& v) {
    Family f;
    f.text = v;
    const auto open = v.find('{');
    if (open == std::string::npos) {
        f.name = trim(v);
    } else {
        if (v.back() != '}') throw ConfigError(key + ": unbalanced braces in '" + v + "'");
        f.name = trim(v.substr(0, open));
        const std::string body = v.substr(open + 1, v.size() - open - 2);
        for (const auto& item : split(body, ',')) {
            if (item.empty()) continue;
            const auto eq = item.find('=');
            if (eq == std::string::npos)
                throw ConfigError(key + ": parameter '" + item + "' needs name=value");
            const std::string pname = trim(item.substr(0, eq));
            f.params[pname] = to_double(key + "." + pname, trim(item.substr(eq + 1)));
        }
    }
    if (f.name.empty()) throw ConfigError(key + ": missing family name");
    return f;
}

inline void expect_params(const std::string& key, const Family& f,
                          const std::set<std::string>& allowed) {
    for (const auto& [name, value] : f.params)
        if (!allowed.count(name))
            throw ConfigError(key + ": family '" + f.name + "' has no parameter '" + name + "'");
}

inline double param(const Family& f, const std::string& name, double fallback) {
    auto it = f.params.find(name);
    return it == f.params.end() ? fallback : it->second;
}

}  // namespace detail

/// Builds the initial condition x0(t).
inline std::function<double(double)> make_x0(const Family& f, const std::string& key = "model.x0") {
    using detail::param;
    if (f.name == "constant") {
        detail::expect_params(key, f, {"c"});
        const double c = param(f, "c", 0.0);
        return [c](double) { return c; };
    }
    if (f.name == "cos") {
        detail::expect_params(key, f, {"a", "omega"});
        const double a = param(f, "a", 1.0), w = param(f, "omega", 1.0);
        return [a, w](double t) { return a * std::cos(w * t); };
    }
    if (f.name == "linear") {
        detail::expect_params(key, f, {"a", "b"});
        const double a = param(f, "a", 0.0), b = param(f, "b", 0.0);
        return [a, b](double t) { return a + b * t; };
    }
    throw ConfigError(key + ": unknown initial-condition family '" + f.name + "'");
}

inline Coefficient make_coefficient(const Family& f, const std::string& key) {
    using detail::param;
    if (f.name == "constant") {
        detail::expect_params(key, f, {"c"});
        return coef::constant(param(f, "c", 0.0));
    }
    if (f.name == "linear") {
        detail::expect_params(key, f, {"a", "b"});
        return coef::linear(param(f, "a", 0.0), param(f, "b", 0.0));
    }
    if (f.name == "sqrt_abs") {
        detail::expect_params(key, f, {});
        return coef::sqrt_abs();
    }
    if (f.name == "cir_drift") {
        detail::expect_params(key, f, {"kappa", "theta"});
        return coef::cir_drift(param(f, "kappa", 1.0), param(f, "theta", 0.0));
    }
    if (f.name == "sin_tx") {
        detail::expect_params(key, f, {});
        return coef::sin_tx();
    }
    throw ConfigError(key + ": unknown coefficient family '" + f.name + "'");
}

inline KernelSpec make_kernel(const Family& f, double T, const std::string& key) {
    using detail::param;
    if (f.name == "constant") {
        detail::expect_params(key, f, {"c"});
        return KernelSpec::constant(param(f, "c", 1.0), T);
    }
    if (f.name == "fractional") {
        detail::expect_params(key, f, {"alpha", "coef"});
        const double alpha = param(f, "alpha", 0.0);
        if (!(alpha >= 0.0 && alpha < 1.0))
            throw ConfigError(key + ".alpha: alpha must lie in [0, 1)");
        return KernelSpec::fractional(alpha, T, param(f, "coef", 1.0));
    }
    if (f.name == "exponential") {
        detail::expect_params(key, f, {"lambda"});
        const double lambda = param(f, "lambda", 1.0);
        if (!(lambda >= 0.0)) throw ConfigError(key + ".lambda: lambda must be >= 0");
        return KernelSpec::exponential(lambda, T);
    }
    throw ConfigError(key + ": unknown kernel family '" + f.name + "'");
}

/// Parses configuration text. Unknown sections or keys are errors.
inline RunConfig parse_config(const std::string& text) {
    using namespace detail;
    RunConfig cfg;
    std::string section;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool checks_given = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "model" && section != "sim" && section != "checks" && section != "output")
                throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" +
                                  section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
        const std::string name = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string key = section + "." + name;
        if (!seen.insert(key).second) throw ConfigError(key + ": given twice");

        if (section == "model") {
            if (name == "x0") cfg.x0 = parse_family(key, value);
            else if (name == "mu") cfg.mu = parse_family(key, value);
            else if (name == "sigma") cfg.sigma = parse_family(key, value);
            else if (name == "K_mu") cfg.k_mu = parse_family(key, value);
            else if (name == "K_sigma") cfg.k_sigma = parse_family(key, value);
            else throw ConfigError(key + ": unknown key");
        } else if (section == "sim") {
            if (name == "T") cfg.T = to_double(key, value);
            else if (name == "N") cfg.N = to_uint(key, value);
            else if (name == "Mc") cfg.Mc = to_uint(key, value);
            else if (name == "seed") cfg.seed = to_uint(key, value);
            else if (name == "scheme") {
                if (value == "left_point") cfg.scheme = Scheme::LeftPoint;
                else if (value == "kernel_averaged") cfg.scheme = Scheme::KernelAveraged;
                else throw ConfigError(key + ": expected left_point or kernel_averaged");
            } else throw ConfigError(key + ": unknown key");
        } else if (section == "checks") {
            if (name == "run") {
                checks_given = true;
                for (const auto& c : split(value, ',')) {
                    if (c.empty()) continue;
                    if (!known_checks().count(c)) throw ConfigError(key + ": unknown check '" + c + "'");
                    cfg.checks.push_back(c);
                }
            } else if (name == "p") cfg.p = to_double(key, value);
            else if (name == "gamma") cfg.gamma = to_double(key, value);
            else if (name == "p_struct") cfg.p_struct = to_double(key, value);
            else if (name == "q") {
                cfg.q.clear();
                for (const auto& v : split(value, ',')) cfg.q.push_back(to_double(key, v));
            } else if (name == "holder_p") cfg.holder_p = to_double(key, value);
            else if (name == "holder_expected") cfg.holder_expected = to_double(key, value);
            else if (name == "levels") {
                cfg.levels.clear();
                for (const auto& v : split(value, ','))
                    cfg.levels.push_back(static_cast<int>(to_uint(key, v)));
            } else if (name == "battery") {
                cfg.battery_default = false;
                for (const auto& v : split(value, ',')) {
                    if (v == "default") cfg.battery_default = true;
                    else cfg.battery_extra.push_back(parse_family(key, v));
                }
            } else if (name == "diag_paths") cfg.diag_paths = to_uint(key, value);
            else if (name == "radius") cfg.radius = to_double(key, value);
            else if (name == "mollify_tolerance") cfg.mollify_tolerance = to_double(key, value);
            else throw ConfigError(key + ": unknown key");
        } else {
            if (name == "directory") cfg.directory = value;
            else if (name == "formats") {
                cfg.formats.clear();
                for (const auto& v : split(value, ',')) {
                    if (v != "json" && v != "csv") throw ConfigError(key + ": unknown format '" + v + "'");
                    cfg.formats.insert(v);
                }
            } else if (name == "export_paths") cfg.export_paths = to_uint(key, value);
            else throw ConfigError(key + ": unknown key");
        }
    }
    if (!checks_given) cfg.checks = {"martingale", "qv"};
    cfg.canonical = text;
    return cfg;
}

/// Range checks that need the whole file.
inline void validate(const RunConfig& cfg) {
    if (!(cfg.T > 0.0)) throw ConfigError("sim.T: horizon must be positive");
    if (cfg.N < 2) throw ConfigError("sim.N: N must be >= 2");
    if (cfg.Mc < 1) throw ConfigError("sim.Mc: Mc must be >= 1");
    make_x0(cfg.x0);
    make_coefficient(cfg.mu, "model.mu");
    make_coefficient(cfg.sigma, "model.sigma");
    make_kernel(cfg.k_mu, cfg.T, "model.K_mu");
    make_kernel(cfg.k_sigma, cfg.T, "model.K_sigma");
    if (cfg.wants("kernel-assumptions") && (cfg.p || cfg.gamma)) {
        if (!cfg.p) throw ConfigError("checks.p: required when checks.gamma is given");
        if (!cfg.gamma) throw ConfigError("checks.gamma: required when checks.p is given");
        if (!(*cfg.p > 4.0)) throw ConfigError("checks.p: p must exceed 4");
        if (!(*cfg.gamma > 2.0 / *cfg.p && *cfg.gamma < 0.5))
            throw ConfigError("checks.gamma: gamma must lie in (2/p, 1/2)");
    }
    if (!(cfg.p_struct > 1.0)) throw ConfigError("checks.p_struct: must exceed 1");
    for (double q : cfg.q)
        if (!(q >= 1.0)) throw ConfigError("checks.q: moments need q >= 1");
    if (!(cfg.holder_p > 0.0)) throw ConfigError("checks.holder_p: must be positive");
    if (cfg.wants("converge")) {
        if (cfg.levels.empty()) throw ConfigError("checks.levels: at least one level required");
        for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
            if (cfg.levels[i] < 1) throw ConfigError("checks.levels: levels must be >= 1");
            if (i > 0 && cfg.levels[i] <= cfg.levels[i - 1])
                throw ConfigError("checks.levels: levels must be strictly increasing");
        }
    }
    for (const auto& f : cfg.battery_extra) {
        if (f.name != "bump" && f.name != "odd_bump")
            throw ConfigError("checks.battery: unknown test function '" + f.name + "'");
        detail::expect_params("checks.battery", f, {"c", "w"});
        if (!(detail::param(f, "w", 1.0) > 0.0))
            throw ConfigError("checks.battery: width w must be positive");
    }
    if (!(cfg.radius > 0.0)) throw ConfigError("checks.radius: must be positive");
    if (!(cfg.mollify_tolerance > 0.0)) throw ConfigError("checks.mollify_tolerance: must be positive");
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    auto cfg = parse_config(ss.str());
    validate(cfg);
    return cfg;
}

inline SimConfig sim_config(const RunConfig& cfg, unsigned threads) {
    SimConfig s;
    s.T = cfg.T;
    s.steps = cfg.N;
    s.paths = cfg.Mc;
    s.seed = cfg.seed;
    s.scheme = cfg.scheme;
    s.x0 = make_x0(cfg.x0);
    s.threads = threads;
    return s;
}

inline Model model(const RunConfig& cfg) {
    return Model{make_coefficient(cfg.mu, "model.mu"), make_coefficient(cfg.sigma, "model.sigma"),
                 make_kernel(cfg.k_mu, cfg.T, "model.K_mu"),
                 make_kernel(cfg.k_sigma, cfg.T, "model.K_sigma")};
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the configuration text and the effective seed.
inline std::string config_hash(const RunConfig& cfg) {
    std::uint64_t h = fnv1a(cfg.canonical.data(), cfg.canonical.size());
    h = fnv1a(&cfg.seed, sizeof cfg.seed, h);
    return hex64(h);
}

}  // namespace svemp::cli
