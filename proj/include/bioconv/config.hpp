#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bioconv/basestate.hpp"
#include "bioconv/errors.hpp"

namespace bioconv {

struct CaseConfig {
    double Sc = 20.0;
    double Vc = 15.0;
    double tauH = 0.5;
    double omega = 0.4;
    double A1 = 0.0;
    double B = 0.26;
    double theta_i_deg = 0.0;
    double n0 = 1.333;
    double Upsilon = 0.252;
    int n_tau = 401;
    int n_z = 129;
    int n_polar = 16;    // Gauss nodes per polar panel
    int n_azimuth = 4;   // Gauss nodes per azimuthal panel
    double k_min = 1.2;
    double k_max = 4.4;
    int n_k = 17;
    std::string out_dir = ".";
    bool use_cache = true;
    // keys given explicitly in the parsed document
    std::set<std::string> explicit_keys;

    SuspensionParams suspension() const {
        SuspensionParams p;
        p.Sc = Sc;
        p.Vc = Vc;
        p.tauH = tauH;
        p.omega = omega;
        p.A1 = A1;
        p.B = B;
        p.theta_i_deg = theta_i_deg;
        p.n0 = n0;
        p.curve = PhototaxisCurve::with_upsilon(Upsilon);
        return p;
    }

    // Human-readable dump of every key, marking the defaulted ones.
    std::string echo() const;
};

namespace detail {

struct ConfigKey {
    std::function<void(CaseConfig&, double)> set;
    std::function<double(const CaseConfig&)> get;
    bool integer;
    std::function<bool(double)> valid;
    const char* range;
};

inline const std::vector<std::pair<std::string, ConfigKey>>& config_keys() {
    auto real = [](double CaseConfig::*f, std::function<bool(double)> ok, const char* range) {
        return ConfigKey{[f](CaseConfig& c, double v) { c.*f = v; }, [f](const CaseConfig& c) { return c.*f; }, false, ok, range};
    };
    auto whole = [](int CaseConfig::*f, std::function<bool(double)> ok, const char* range) {
        return ConfigKey{[f](CaseConfig& c, double v) { c.*f = static_cast<int>(v); },
                         [f](const CaseConfig& c) { return static_cast<double>(c.*f); }, true, ok, range};
    };
    static const std::vector<std::pair<std::string, ConfigKey>> keys = {
        {"Sc", real(&CaseConfig::Sc, [](double v) { return v > 0; }, "> 0")},
        {"Vc", real(&CaseConfig::Vc, [](double v) { return v >= 0; }, ">= 0")},
        {"tauH", real(&CaseConfig::tauH, [](double v) { return v > 0; }, "> 0")},
        {"omega", real(&CaseConfig::omega, [](double v) { return v >= 0 && v <= 1; }, "in [0, 1]")},
        {"A1", real(&CaseConfig::A1, [](double v) { return v > -1 && v <= 1; }, "in (-1, 1]")},
        {"B", real(&CaseConfig::B, [](double v) { return v >= 0; }, ">= 0")},
        {"theta_i_deg", real(&CaseConfig::theta_i_deg, [](double v) { return v >= 0 && v <= 89.9; }, "in [0, 89.9]")},
        {"n0", real(&CaseConfig::n0, [](double v) { return v > 1; }, "> 1")},
        {"Upsilon", real(&CaseConfig::Upsilon, [](double v) { return v > 0; }, "> 0")},
        {"n_tau", whole(&CaseConfig::n_tau, [](double v) { return v >= 21 && v <= 100001; }, "in [21, 100001]")},
        {"n_z", whole(&CaseConfig::n_z, [](double v) { return v >= 65 && v <= 2049; }, "in [65, 2049]")},
        {"n_polar", whole(&CaseConfig::n_polar, [](double v) { return v >= 1 && v <= 256; }, "in [1, 256]")},
        {"n_azimuth", whole(&CaseConfig::n_azimuth, [](double v) { return v >= 1 && v <= 256; }, "in [1, 256]")},
        {"k_min", real(&CaseConfig::k_min, [](double v) { return v > 0; }, "> 0")},
        {"k_max", real(&CaseConfig::k_max, [](double v) { return v > 0; }, "> 0")},
        {"n_k", whole(&CaseConfig::n_k, [](double v) { return v >= 2 && v <= 10000; }, "in [2, 10000]")},
    };
    return keys;
}

inline std::string_view trim(std::string_view s) {
    const char* ws = " \t\r\n";
    auto a = s.find_first_not_of(ws);
    if (a == std::string_view::npos) return {};
    auto b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
}

}  // namespace detail

inline std::string CaseConfig::echo() const {
    std::ostringstream os;
    os.precision(17);
    for (const auto& [name, key] : detail::config_keys())
        os << name << " = " << key.get(*this) << (explicit_keys.count(name) ? "" : "  # default") << '\n';
    return os.str();
}

// Flat "key = value" text. '#' starts a comment; several assignments may share a line separated by commas.
inline CaseConfig parse_config(std::string_view text) {
    CaseConfig cfg;
    const auto& keys = detail::config_keys();
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
        if (detail::trim(line).empty()) continue;
        std::size_t p = 0;
        while (p <= line.size()) {
            auto c = line.find(',', p);
            std::string_view item = detail::trim(line.substr(p, c == std::string_view::npos ? std::string_view::npos : c - p));
            p = c == std::string_view::npos ? line.size() + 1 : c + 1;
            auto where = " (line " + std::to_string(line_no) + ")";
            if (item.empty()) throw ConfigError("empty assignment" + where, {}, line_no);
            auto eq = item.find('=');
            if (eq == std::string_view::npos) throw ConfigError("expected key = value" + where, {}, line_no);
            std::string name(detail::trim(item.substr(0, eq)));
            std::string_view val = detail::trim(item.substr(eq + 1));
            auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return k.first == name; });
            if (it == keys.end()) throw ConfigError("unknown key '" + name + "'" + where, name, line_no);
            double v = 0.0;
            auto [end, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
            if (val.empty() || ec != std::errc() || end != val.data() + val.size() || !std::isfinite(v))
                throw ConfigError("bad number for '" + name + "': '" + std::string(val) + "'" + where, name, line_no);
            const detail::ConfigKey& key = it->second;
            if (key.integer && v != std::floor(v)) throw ConfigError("'" + name + "' must be an integer" + where, name, line_no);
            if (!key.valid(v))
                throw ConfigError("'" + name + "' = " + std::string(val) + " out of range, must be " + key.range + where, name, line_no);
            key.set(cfg, v);
            cfg.explicit_keys.insert(name);
        }
    }
    if (!(cfg.k_max > cfg.k_min)) throw ConfigError("'k_max' must exceed k_min", "k_max", 0);
    return cfg;
}

}  // namespace bioconv
