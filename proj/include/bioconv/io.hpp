#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"

#include "bioconv/basestate.hpp"
#include "bioconv/config.hpp"
#include "bioconv/radiative.hpp"
#include "bioconv/stability.hpp"

namespace bioconv {

using CsvCell = std::variant<double, long long, std::string>;

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<CsvCell>> rows;
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_field(const CsvCell& c) {
    if (auto d = std::get_if<double>(&c)) return format_double(*d);
    if (auto i = std::get_if<long long>(&c)) return std::to_string(*i);
    const auto& s = std::get<std::string>(c);
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

inline void write_csv(std::ostream& os, const CsvTable& t) {
    auto line = [&](const auto& cells, auto&& fmt) {
        for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << fmt(cells[i]);
        os << "\r\n";
    };
    line(t.header, [](const std::string& s) { return csv_field(s); });
    for (const auto& r : t.rows) {
        if (r.size() != t.header.size()) throw std::invalid_argument("write_csv: row width differs from header");
        line(r, [](const CsvCell& c) { return csv_field(c); });
    }
}

inline void write_csv_file(const std::filesystem::path& path, const CsvTable& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_csv(f, t);
    if (!f) throw std::runtime_error("write failed for " + path.string());
}

inline CsvTable radiation_csv(const BasicRadiation& rad) {
    CsvTable t{{"tau", "G", "q", "G_collimated", "q_collimated"}, {}};
    for (std::size_t i = 0; i < rad.tau_grid.size(); ++i)
        t.rows.push_back({rad.tau_grid[i], rad.G[i], rad.q[i], rad.G_coll[i], rad.q_coll[i]});
    return t;
}

inline CsvTable base_state_csv(const BaseState& bs) {
    CsvTable t{{"z", "n_s", "tau", "G_s", "q_s", "G_s_collimated", "M_s", "dM_dG"}, {}};
    for (std::size_t i = 0; i < bs.size(); ++i)
        t.rows.push_back({bs.z_grid[i], bs.n_s[i], bs.tau_of_z[i], bs.G_s[i], bs.q_s[i], bs.G_s_coll[i], bs.M_s[i], bs.dMdG[i]});
    return t;
}

inline CsvTable neutral_curve_csv(const NeutralCurve& c) {
    CsvTable t{{"k", "R", "sigma", "branch_kind"}, {}};
    for (const auto& b : c.branches)
        for (const auto& p : b.points) t.rows.push_back({p.k, p.R, p.sigma, std::string(to_string(b.kind))});
    return t;
}

inline std::vector<std::string> critical_header() {
    return {"V_c", "tau_H", "omega", "B", "theta_i", "A1", "lambda_c", "R_c", "Im_gamma", "k_c", "overstable", "mode_number"};
}

inline std::vector<CsvCell> critical_row(const CaseConfig& c, const CriticalMode& m) {
    return {c.Vc, c.tauH, c.omega, c.B, c.theta_i_deg, c.A1, m.lambda_c, m.R_c, m.sigma_c, m.k_c,
            static_cast<long long>(m.overstable), static_cast<long long>(m.mode_number)};
}

inline nlohmann::json config_json(const CaseConfig& c) {
    nlohmann::json in;
    for (const auto& [name, key] : detail::config_keys()) {
        double v = key.get(c);
        if (key.integer) in[name] = static_cast<long long>(v);
        else in[name] = v;
    }
    return in;
}

struct ResultRecord {
    CaseConfig config;
    CriticalMode critical;
    double bc_residual = 0.0;
    double equation_residual = 0.0;
    double wall_time_s = 0.0;
    std::vector<std::pair<double, std::string>> failures;

    nlohmann::json to_json() const {
        nlohmann::json f = nlohmann::json::array();
        for (const auto& [k, why] : failures) f.push_back({{"k", k}, {"reason", why}});
        return {{"inputs", config_json(config)},
                {"lambda_c", critical.lambda_c},
                {"k_c", critical.k_c},
                {"R_c", critical.R_c},
                {"Im_gamma", critical.sigma_c},
                {"overstable", critical.overstable},
                {"mode_number", critical.mode_number},
                {"diagnostics",
                 {{"n_tau", config.n_tau},
                  {"n_z", config.n_z},
                  {"n_polar", config.n_polar},
                  {"n_azimuth", config.n_azimuth},
                  {"bc_residual", bc_residual},
                  {"equation_residual", equation_residual},
                  {"wall_time_s", wall_time_s},
                  {"failures", f}}}};
    }
};

// Binary cache: magic, format version, kind, FNV-1a hash of the generating parameters, then length-prefixed
// little-endian float64 arrays. Anything that does not match is ignored by the loader.
namespace cache {

static_assert(std::endian::native == std::endian::little, "cache format assumes a little-endian host");

inline constexpr char magic[8] = {'B', 'I', 'O', 'C', 'O', 'N', 'V', '\0'};
inline constexpr std::uint32_t version = 1;
enum class Kind : std::uint32_t { Radiation = 1, BaseState = 2 };

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string radiation_key(const RadiationParams& p, int n_tau) {
    return "rad;" + format_double(p.omega) + ";" + format_double(p.A1) + ";" + format_double(p.B) + ";" +
           format_double(p.tauH) + ";" + format_double(p.cos_theta0) + ";" + std::to_string(n_tau);
}

inline std::string base_state_key(const SuspensionParams& p, int n_tau, int n_z) {
    const auto& c = p.curve;
    std::string s = "base;" + radiation_key(p.radiation_params(), n_tau) + ";" + format_double(p.Vc) + ";" + std::to_string(n_z);
    for (double v : {c.Upsilon, c.amp1, c.amp2, c.freq1, c.freq2, c.pivot}) s += ";" + format_double(v);
    return s;
}

namespace detail {

inline void put_array(std::ostream& os, const std::vector<double>& v) {
    std::uint64_t n = v.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

inline bool get_array(std::istream& is, std::vector<double>& v, std::uint64_t max_len) {
    std::uint64_t n = 0;
    if (!is.read(reinterpret_cast<char*>(&n), sizeof n) || n > max_len) return false;
    v.resize(n);
    return static_cast<bool>(is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))));
}

inline void write_file(const std::filesystem::path& path, Kind kind, const std::string& key, const std::vector<std::vector<double>>& arrays) {
    auto tmp = path;
    tmp += "." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write cache file " + tmp.string());
        std::uint64_t h = fnv1a(key);
        auto k = static_cast<std::uint32_t>(kind);
        std::uint32_t na = static_cast<std::uint32_t>(arrays.size());
        f.write(magic, sizeof magic);
        f.write(reinterpret_cast<const char*>(&version), sizeof version);
        f.write(reinterpret_cast<const char*>(&k), sizeof k);
        f.write(reinterpret_cast<const char*>(&h), sizeof h);
        f.write(reinterpret_cast<const char*>(&na), sizeof na);
        for (const auto& a : arrays) put_array(f, a);
        if (!f) throw std::runtime_error("cache write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::optional<std::vector<std::vector<double>>> read_file(const std::filesystem::path& path, Kind kind, const std::string& key,
                                                                 std::size_t n_arrays, std::string* warning) {
    auto fail = [&](const std::string& why) -> std::optional<std::vector<std::vector<double>>> {
        if (warning) *warning = "cache " + path.string() + " ignored: " + why;
        return std::nullopt;
    };
    std::ifstream f(path, std::ios::binary);
    if (!f) return fail("cannot open");
    char m[sizeof magic];
    std::uint32_t ver = 0, k = 0, na = 0;
    std::uint64_t h = 0;
    if (!f.read(m, sizeof m) || !std::equal(m, m + sizeof m, magic)) return fail("bad magic");
    if (!f.read(reinterpret_cast<char*>(&ver), sizeof ver) || ver != version) return fail("format version mismatch");
    if (!f.read(reinterpret_cast<char*>(&k), sizeof k) || k != static_cast<std::uint32_t>(kind)) return fail("wrong record kind");
    if (!f.read(reinterpret_cast<char*>(&h), sizeof h) || h != fnv1a(key)) return fail("parameter hash mismatch");
    if (!f.read(reinterpret_cast<char*>(&na), sizeof na) || na != n_arrays) return fail("unexpected array count");
    std::vector<std::vector<double>> out(na);
    auto size = std::filesystem::file_size(path);
    for (auto& a : out)
        if (!get_array(f, a, size / sizeof(double))) return fail("truncated");
    if (f.peek() != std::char_traits<char>::eof()) return fail("trailing bytes");
    return out;
}

}  // namespace detail

inline void save(const std::filesystem::path& path, const BasicRadiation& r, int n_tau) {
    detail::write_file(path, Kind::Radiation, radiation_key(r.params, n_tau),
                       {r.tau_grid.points, r.G, r.q, r.G_coll, r.q_coll, r.G_cell, r.q_cell,
                        {static_cast<double>(r.iterations), r.residual}});
}

inline std::optional<BasicRadiation> load_radiation(const std::filesystem::path& path, const RadiationParams& p, int n_tau,
                                                    std::string* warning = nullptr) {
    auto a = detail::read_file(path, Kind::Radiation, radiation_key(p, n_tau), 8, warning);
    if (!a) return std::nullopt;
    auto& v = *a;
    const std::size_t n = v[0].size();
    for (int i = 1; i < 5; ++i)
        if (v[i].size() != n) {
            if (warning) *warning = "cache " + path.string() + " ignored: inconsistent array sizes";
            return std::nullopt;
        }
    if (v[7].size() != 2 || n < 2) {
        if (warning) *warning = "cache " + path.string() + " ignored: bad scalar block";
        return std::nullopt;
    }
    BasicRadiation r;
    r.params = p;
    try {
        r.tau_grid = Grid1D(v[0]);
    } catch (const std::invalid_argument&) {
        if (warning) *warning = "cache " + path.string() + " ignored: bad grid";
        return std::nullopt;
    }
    r.G = std::move(v[1]);
    r.q = std::move(v[2]);
    r.G_coll = std::move(v[3]);
    r.q_coll = std::move(v[4]);
    r.G_cell = std::move(v[5]);
    r.q_cell = std::move(v[6]);
    r.iterations = static_cast<int>(v[7][0]);
    r.residual = v[7][1];
    return r;
}

inline void save(const std::filesystem::path& path, const BaseState& b, int n_tau) {
    detail::write_file(path, Kind::BaseState, base_state_key(b.params, n_tau, static_cast<int>(b.size())),
                       {b.z_grid.points, b.n_s, b.tau_of_z, b.G_s, b.q_s, b.G_s_coll, b.M_s, b.dMdG,
                        {b.cos_theta0, b.n_top, static_cast<double>(b.shooting_evaluations)}});
}

inline std::optional<BaseState> load_base_state(const std::filesystem::path& path, const SuspensionParams& p, int n_tau, int n_z,
                                                std::string* warning = nullptr) {
    auto a = detail::read_file(path, Kind::BaseState, base_state_key(p, n_tau, n_z), 9, warning);
    if (!a) return std::nullopt;
    auto& v = *a;
    bool ok = v[0].size() == static_cast<std::size_t>(n_z) && v[8].size() == 3;
    for (int i = 1; i < 8; ++i) ok = ok && v[i].size() == v[0].size();
    if (!ok) {
        if (warning) *warning = "cache " + path.string() + " ignored: inconsistent array sizes";
        return std::nullopt;
    }
    BaseState b;
    b.params = p;
    try {
        b.z_grid = Grid1D(v[0]);
    } catch (const std::invalid_argument&) {
        if (warning) *warning = "cache " + path.string() + " ignored: bad grid";
        return std::nullopt;
    }
    b.n_s = std::move(v[1]);
    b.tau_of_z = std::move(v[2]);
    b.G_s = std::move(v[3]);
    b.q_s = std::move(v[4]);
    b.G_s_coll = std::move(v[5]);
    b.M_s = std::move(v[6]);
    b.dMdG = std::move(v[7]);
    b.cos_theta0 = v[8][0];
    b.n_top = v[8][1];
    b.shooting_evaluations = static_cast<int>(v[8][2]);
    return b;
}

}  // namespace cache

}  // namespace bioconv
