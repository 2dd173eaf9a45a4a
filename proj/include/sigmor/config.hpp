#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sigmor/io.hpp"
#include "sigmor/models.hpp"
#include "sigmor/words.hpp"

namespace sigmor {

/// Flat sectioned key=value configuration. Parsing is schema-checked: unknown
/// sections or keys fail with the offending line number, as do malformed
/// values. Missing keys fall back to the documented defaults.
struct PipelineConfig {
    // [model]
    std::string model_type;  // "bergomi" | "rough_bergomi"
    BergomiConfig bergomi;
    RoughBergomiConfig rough;

    // [signature]
    int d = 0;
    int m = 0;

    // [fitting]
    double fit_lambda = -1.0;  // < 0 means automatic
    double fit_split = 0.8;
    std::int64_t fit_paths = 1024;
    std::int64_t fit_steps = 64;

    // [reduction]
    double rank_tol = 1e-12;
    double horizon = 1.0;
    std::vector<std::int64_t> n_list;

    // [pricing]
    std::vector<double> maturities{1.0};
    std::int64_t price_paths = 20000;
    std::int64_t steps_per_year = 256;
    std::int64_t l2_paths = 10000;
    std::int64_t l2_steps = 256;
    bool antithetic = false;
    std::vector<std::int64_t> smile_dims;

    // [io]
    std::filesystem::path out = "out";
    std::uint64_t seed = 7;

    int drivers() const { return d - 1; }

    NoiseCovariance noise() const {
        if (model_type == "bergomi") return NoiseCovariance{bergomi.noise_covariance()};
        if (model_type == "rough_bergomi") return NoiseCovariance{rough.noise_covariance()};
        throw std::logic_error("config: model type not set");
    }

    /// Canonical dump of one section's effective values; stable across
    /// formatting differences in the source file.
    std::string canonical_section(const std::string& name) const;

    void validate() const;
};

namespace detail {

struct ConfigLine {
    std::string section;
    std::string key;
    std::string value;
    std::size_t lineno = 0;
};

[[noreturn]] inline void config_fail(const std::string& origin, std::size_t lineno,
                                     const std::string& msg) {
    throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": " + msg);
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<ConfigLine> parse_config_lines(const std::string& text,
                                                  const std::string& origin) {
    std::vector<ConfigLine> out;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') config_fail(origin, lineno, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) config_fail(origin, lineno, "empty section name");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            config_fail(origin, lineno, "expected key = value, found '" + line + "'");
        ConfigLine cl;
        cl.section = section;
        cl.key = trim(line.substr(0, eq));
        cl.value = trim(line.substr(eq + 1));
        cl.lineno = lineno;
        if (section.empty()) config_fail(origin, lineno, "key outside any [section]");
        if (cl.key.empty()) config_fail(origin, lineno, "empty key");
        out.push_back(std::move(cl));
    }
    return out;
}

inline double value_double(const ConfigLine& cl, const std::string& origin) {
    try {
        return parse_double(cl.value);
    } catch (const std::exception&) {
        config_fail(origin, cl.lineno, "key '" + cl.key + "' needs a number, got '" + cl.value +
                                           "'");
    }
}

inline std::int64_t value_int(const ConfigLine& cl, const std::string& origin) {
    try {
        return parse_int(cl.value);
    } catch (const std::exception&) {
        config_fail(origin, cl.lineno, "key '" + cl.key + "' needs an integer, got '" + cl.value +
                                           "'");
    }
}

inline bool value_bool(const ConfigLine& cl, const std::string& origin) {
    if (cl.value == "true" || cl.value == "1") return true;
    if (cl.value == "false" || cl.value == "0") return false;
    config_fail(origin, cl.lineno, "key '" + cl.key + "' needs true or false");
}

inline std::vector<double> value_double_list(const ConfigLine& cl, const std::string& origin) {
    std::vector<double> out;
    std::istringstream is(cl.value);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) config_fail(origin, cl.lineno, "empty entry in list '" + cl.value + "'");
        try {
            out.push_back(parse_double(tok));
        } catch (const std::exception&) {
            config_fail(origin, cl.lineno, "bad number '" + tok + "' in key '" + cl.key + "'");
        }
    }
    if (out.empty()) config_fail(origin, cl.lineno, "key '" + cl.key + "' needs a list");
    return out;
}

/// Integer list with ranges: "1..30,40" expands to 1,2,...,30,40.
inline std::vector<std::int64_t> value_int_ranges(const ConfigLine& cl,
                                                  const std::string& origin) {
    std::vector<std::int64_t> out;
    std::istringstream is(cl.value);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        tok = trim(tok);
        auto as_int = [&](std::string_view part) {
            try {
                return parse_int(part);
            } catch (const std::runtime_error&) {
                config_fail(origin, cl.lineno, "bad integer entry '" + tok + "' in key '" +
                                                   cl.key + "'");
            }
        };
        const std::size_t dots = tok.find("..");
        if (dots == std::string::npos) {
            out.push_back(as_int(tok));
        } else {
            const std::int64_t a = as_int(trim(tok.substr(0, dots)));
            const std::int64_t b = as_int(trim(tok.substr(dots + 2)));
            if (b < a) config_fail(origin, cl.lineno, "descending range '" + tok + "'");
            if (b - a > 100000) config_fail(origin, cl.lineno, "range '" + tok + "' too wide");
            for (std::int64_t v = a; v <= b; ++v) out.push_back(v);
        }
    }
    if (out.empty()) config_fail(origin, cl.lineno, "key '" + cl.key + "' needs a list");
    return out;
}

} // namespace detail

inline PipelineConfig parse_config(const std::string& text, const std::string& origin) {
    const auto lines = detail::parse_config_lines(text, origin);
    PipelineConfig cfg;

    // The model type gates which [model] keys are legal, so find it first.
    for (const auto& cl : lines)
        if (cl.section == "model" && cl.key == "type") {
            if (cl.value != "bergomi" && cl.value != "rough_bergomi")
                detail::config_fail(origin, cl.lineno,
                                    "model type must be bergomi or rough_bergomi, got '" +
                                        cl.value + "'");
            cfg.model_type = cl.value;
        }

    std::map<std::string, std::size_t> seen;
    for (const auto& cl : lines) {
        const std::string full = cl.section + "." + cl.key;
        if (auto it = seen.find(full); it != seen.end())
            detail::config_fail(origin, cl.lineno,
                                "duplicate key '" + full + "' (first at line " +
                                    std::to_string(it->second) + ")");
        seen[full] = cl.lineno;

        if (cl.section == "model") {
            if (cfg.model_type.empty())
                detail::config_fail(origin, cl.lineno, "[model] needs a type key");
            if (cl.key == "type") continue;
            bool known = false;
            if (cfg.model_type == "bergomi") {
                known = true;
                if (cl.key == "omega") cfg.bergomi.omega = detail::value_double(cl, origin);
                else if (cl.key == "k1") cfg.bergomi.k1 = detail::value_double(cl, origin);
                else if (cl.key == "k2") cfg.bergomi.k2 = detail::value_double(cl, origin);
                else if (cl.key == "theta1") cfg.bergomi.theta1 = detail::value_double(cl, origin);
                else if (cl.key == "rho12") cfg.bergomi.rho12 = detail::value_double(cl, origin);
                else if (cl.key == "rho_s1") cfg.bergomi.rho_s1 = detail::value_double(cl, origin);
                else if (cl.key == "rho_s2") cfg.bergomi.rho_s2 = detail::value_double(cl, origin);
                else if (cl.key == "spot") cfg.bergomi.spot = detail::value_double(cl, origin);
                else if (cl.key == "xi0") cfg.bergomi.xi0 = detail::value_double(cl, origin);
                else known = false;
            } else {
                known = true;
                if (cl.key == "hurst") cfg.rough.hurst = detail::value_double(cl, origin);
                else if (cl.key == "eta") cfg.rough.eta = detail::value_double(cl, origin);
                else if (cl.key == "rho") cfg.rough.rho = detail::value_double(cl, origin);
                else if (cl.key == "spot") cfg.rough.spot = detail::value_double(cl, origin);
                else if (cl.key == "xi0") cfg.rough.xi0 = detail::value_double(cl, origin);
                else known = false;
            }
            if (!known)
                detail::config_fail(origin, cl.lineno,
                                    "unknown key '" + cl.key + "' for model type " +
                                        cfg.model_type);
        } else if (cl.section == "signature") {
            if (cl.key == "d") cfg.d = static_cast<int>(detail::value_int(cl, origin));
            else if (cl.key == "m") cfg.m = static_cast<int>(detail::value_int(cl, origin));
            else detail::config_fail(origin, cl.lineno, "unknown key '" + cl.key + "' in [signature]");
        } else if (cl.section == "fitting") {
            if (cl.key == "lambda") {
                if (cl.value == "auto") cfg.fit_lambda = -1.0;
                else {
                    cfg.fit_lambda = detail::value_double(cl, origin);
                    if (cfg.fit_lambda < 0.0)
                        detail::config_fail(origin, cl.lineno, "lambda must be >= 0 or auto");
                }
            } else if (cl.key == "split") cfg.fit_split = detail::value_double(cl, origin);
            else if (cl.key == "paths") cfg.fit_paths = detail::value_int(cl, origin);
            else if (cl.key == "steps") cfg.fit_steps = detail::value_int(cl, origin);
            else detail::config_fail(origin, cl.lineno, "unknown key '" + cl.key + "' in [fitting]");
        } else if (cl.section == "reduction") {
            if (cl.key == "rank_tol") cfg.rank_tol = detail::value_double(cl, origin);
            else if (cl.key == "horizon") cfg.horizon = detail::value_double(cl, origin);
            else if (cl.key == "n_list") cfg.n_list = detail::value_int_ranges(cl, origin);
            else detail::config_fail(origin, cl.lineno, "unknown key '" + cl.key + "' in [reduction]");
        } else if (cl.section == "pricing") {
            if (cl.key == "maturities") cfg.maturities = detail::value_double_list(cl, origin);
            else if (cl.key == "paths") cfg.price_paths = detail::value_int(cl, origin);
            else if (cl.key == "steps_per_year") cfg.steps_per_year = detail::value_int(cl, origin);
            else if (cl.key == "l2_paths") cfg.l2_paths = detail::value_int(cl, origin);
            else if (cl.key == "l2_steps") cfg.l2_steps = detail::value_int(cl, origin);
            else if (cl.key == "antithetic") cfg.antithetic = detail::value_bool(cl, origin);
            else if (cl.key == "smile_dims") cfg.smile_dims = detail::value_int_ranges(cl, origin);
            else detail::config_fail(origin, cl.lineno, "unknown key '" + cl.key + "' in [pricing]");
        } else if (cl.section == "io") {
            if (cl.key == "out") cfg.out = cl.value;
            else if (cl.key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::value_int(cl, origin));
            else detail::config_fail(origin, cl.lineno, "unknown key '" + cl.key + "' in [io]");
        } else {
            detail::config_fail(origin, cl.lineno, "unknown section [" + cl.section + "]");
        }
    }

    cfg.validate();
    return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_text_file(path), path.string());
}

inline void PipelineConfig::validate() const {
    if (model_type.empty()) throw std::runtime_error("config: [model] type is required");
    if (model_type == "bergomi") bergomi.validate();
    else rough.validate();
    if (d < 2) throw std::runtime_error("config: [signature] d must be at least 2");
    if (m < 1) throw std::runtime_error("config: [signature] m must be at least 1");
    const int expected_d = model_type == "bergomi" ? 4 : 3;
    if (d != expected_d)
        throw std::runtime_error("config: model " + model_type + " drives d = " +
                                 std::to_string(expected_d) + " coordinates, got d = " +
                                 std::to_string(d));
    const std::int64_t n = dim_truncated(d, m);
    if (!(fit_split > 0.0 && fit_split <= 1.0))
        throw std::runtime_error("config: [fitting] split must lie in (0, 1]");
    if (fit_paths < 1 || fit_steps < 1)
        throw std::runtime_error("config: [fitting] paths and steps must be positive");
    if (!(rank_tol > 0.0 && rank_tol < 1.0))
        throw std::runtime_error("config: [reduction] rank_tol must lie in (0, 1)");
    if (!(horizon > 0.0)) throw std::runtime_error("config: [reduction] horizon must be positive");
    for (std::int64_t nt : n_list)
        if (nt < 1 || nt > n)
            throw std::runtime_error("config: [reduction] n_list entry " + std::to_string(nt) +
                                     " outside [1, " + std::to_string(n) + "]");
    for (double T : maturities)
        if (!(T > 0.0)) throw std::runtime_error("config: [pricing] maturities must be positive");
    if (price_paths < 2 || l2_paths < 2)
        throw std::runtime_error("config: [pricing] path counts must be at least 2");
    if (steps_per_year < 1 || l2_steps < 1)
        throw std::runtime_error("config: [pricing] step counts must be positive");
    for (std::int64_t nt : smile_dims) {
        if (nt < 1 || nt > n)
            throw std::runtime_error("config: [pricing] smile_dims entry " + std::to_string(nt) +
                                     " outside [1, " + std::to_string(n) + "]");
        if (std::find(n_list.begin(), n_list.end(), nt) == n_list.end())
            throw std::runtime_error("config: [pricing] smile_dims entry " + std::to_string(nt) +
                                     " is not in [reduction] n_list, so no reduced system would "
                                     "exist for it");
    }
}

inline std::string PipelineConfig::canonical_section(const std::string& name) const {
    std::ostringstream os;
    os << "[" << name << "]";
    auto put = [&os](const char* key, const std::string& value) {
        os << key << "=" << value << ";";
    };
    auto putd = [&](const char* key, double v) { put(key, format_double(v)); };
    auto puti = [&](const char* key, std::int64_t v) { put(key, std::to_string(v)); };
    auto put_list = [&](const char* key, const auto& values, auto fmt) {
        std::string s;
        for (const auto& v : values) {
            if (!s.empty()) s += ",";
            s += fmt(v);
        }
        put(key, s);
    };
    if (name == "model") {
        put("type", model_type);
        if (model_type == "bergomi") {
            putd("omega", bergomi.omega);
            putd("k1", bergomi.k1);
            putd("k2", bergomi.k2);
            putd("theta1", bergomi.theta1);
            putd("rho12", bergomi.rho12);
            putd("rho_s1", bergomi.rho_s1);
            putd("rho_s2", bergomi.rho_s2);
            putd("spot", bergomi.spot);
            putd("xi0", bergomi.xi0);
        } else {
            putd("hurst", rough.hurst);
            putd("eta", rough.eta);
            putd("rho", rough.rho);
            putd("spot", rough.spot);
            putd("xi0", rough.xi0);
        }
    } else if (name == "signature") {
        puti("d", d);
        puti("m", m);
    } else if (name == "fitting") {
        put("lambda", fit_lambda < 0.0 ? "auto" : format_double(fit_lambda));
        putd("split", fit_split);
        puti("paths", fit_paths);
        puti("steps", fit_steps);
    } else if (name == "reduction") {
        putd("rank_tol", rank_tol);
        putd("horizon", horizon);
        put_list("n_list", n_list, [](std::int64_t v) { return std::to_string(v); });
    } else if (name == "pricing") {
        put_list("maturities", maturities, [](double v) { return format_double(v); });
        puti("paths", price_paths);
        puti("steps_per_year", steps_per_year);
        puti("l2_paths", l2_paths);
        puti("l2_steps", l2_steps);
        put("antithetic", antithetic ? "true" : "false");
        put_list("smile_dims", smile_dims, [](std::int64_t v) { return std::to_string(v); });
    } else if (name == "seed") {
        put("seed", std::to_string(seed));
    } else {
        throw std::logic_error("canonical_section: unknown section " + name);
    }
    return os.str();
}

} // namespace sigmor
