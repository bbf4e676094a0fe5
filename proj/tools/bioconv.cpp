#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "bioconv/config.hpp"
#include "bioconv/io.hpp"
#include "bioconv/stability.hpp"

namespace fs = std::filesystem;
using namespace bioconv;

namespace {

struct StageError : std::runtime_error {
    StageError(std::string stage, const std::string& what) : std::runtime_error(what), stage(std::move(stage)) {}
    std::string stage;
};

template <class F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

class Log {
public:
    explicit Log(const fs::path& file) : f_(file) {}
    void operator()(const std::string& msg) {
        std::lock_guard lk(mu());
        std::cerr << msg << '\n';
        f_ << msg << '\n';
    }

private:
    static std::mutex& mu() {
        static std::mutex m;
        return m;
    }
    std::ofstream f_;
};

std::string hex(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

struct Pipeline {
    const CaseConfig& cfg;
    fs::path cache_dir;
    Log& log;

    BasicRadiation radiation() const {
        return stage("radiation", [&] {
            auto p = cfg.suspension();
            p.validate();
            auto rp = p.radiation_params();
            fs::path file = cache_dir / ("radiation_" + hex(cache::fnv1a(cache::radiation_key(rp, cfg.n_tau))) + ".bin");
            if (cfg.use_cache) {
                std::string warn;
                if (fs::exists(file)) {
                    if (auto r = cache::load_radiation(file, rp, cfg.n_tau, &warn)) return *r;
                    log("warning: " + warn + ", recomputing");
                }
            }
            auto r = solve_basic_radiation(rp, cfg.n_tau);
            if (cfg.use_cache) {
                fs::create_directories(cache_dir);
                cache::save(file, r, cfg.n_tau);
            }
            return r;
        });
    }

    BaseState base_state(const BasicRadiation& rad) const {
        return stage("base-state", [&] {
            auto p = cfg.suspension();
            fs::path file = cache_dir / ("base_" + hex(cache::fnv1a(cache::base_state_key(p, cfg.n_tau, cfg.n_z))) + ".bin");
            if (cfg.use_cache) {
                std::string warn;
                if (fs::exists(file)) {
                    if (auto b = cache::load_base_state(file, p, cfg.n_tau, cfg.n_z, &warn)) return *b;
                    log("warning: " + warn + ", recomputing");
                }
            }
            auto b = solve_base_state(p, rad, cfg.n_z);
            if (cfg.use_cache) {
                fs::create_directories(cache_dir);
                cache::save(file, b, cfg.n_tau);
            }
            return b;
        });
    }
};

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream f(path);
    f << j.dump(2) << '\n';
}

struct CaseResult {
    ResultRecord record;
    NeutralCurve curve;
};

CaseResult run_critical(const CaseConfig& cfg, const fs::path& out, const fs::path& cache_dir, Log& log) {
    auto t0 = std::chrono::steady_clock::now();
    Pipeline pl{cfg, cache_dir, log};
    auto rad = pl.radiation();
    auto bs = pl.base_state(rad);
    CaseResult res;
    res.record.config = cfg;
    auto solver = stage("stability", [&] {
        return std::make_shared<StabilitySolver>(bs, AngularQuadrature::build(cfg.n_polar, cfg.n_azimuth));
    });
    res.curve = stage("neutral-curve", [&] { return solver->trace_neutral_curve(cfg.k_min, cfg.k_max, cfg.n_k, cfg.Sc); });
    res.record.failures = res.curve.failures;
    write_csv_file(out / "neutral_curve.csv", neutral_curve_csv(res.curve));
    for (const auto& [k, why] : res.curve.failures) log("warning: no neutral point at k = " + format_double(k) + ": " + why);
    res.record.critical = stage("critical", [&] { return solver->critical_mode(res.curve, cfg.Sc); });
    res.record.bc_residual = res.record.critical.bc_residual;
    res.record.equation_residual = res.record.critical.equation_residual;
    res.record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

CaseConfig load_config(const std::string& path) {
    if (path.empty()) return parse_config("");
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

// Parameter grid of the published study, in table order.
std::vector<CaseConfig> table_cases(const CaseConfig& base) {
    std::vector<CaseConfig> out;
    for (double Vc : {15.0, 10.0, 20.0})
        for (auto [tauH, B] : {std::pair{0.5, 0.26}, std::pair{1.0, 0.48}})
            for (double theta : {0.0, 40.0, 80.0})
                for (double A1 : {0.0, 0.4, 0.8}) {
                    CaseConfig c = base;
                    c.Vc = Vc;
                    c.tauH = tauH;
                    c.B = B;
                    c.theta_i_deg = theta;
                    c.A1 = A1;
                    out.push_back(c);
                }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear stability of phototactic bioconvection under oblique and diffuse light"};
    app.require_subcommand(1);
    std::string config_path, out_dir = "out";
    bool no_cache = false;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--config", config_path, "flat key = value configuration file");
    app.add_option("--out", out_dir, "output directory");
    app.add_flag("--no-cache", no_cache, "neither read nor write cached intermediates");
    app.add_option("--threads", threads, "worker threads for the table command")->check(CLI::Range(1u, 1024u));
    app.fallthrough();
    auto* c_rad = app.add_subcommand("radiation", "basic-state radiation field G(tau), q(tau)");
    auto* c_base = app.add_subcommand("base-state", "equilibrium concentration profile");
    auto* c_curve = app.add_subcommand("neutral-curve", "neutral curve R(k) on all branches");
    auto* c_crit = app.add_subcommand("critical", "most unstable mode");
    auto* c_table = app.add_subcommand("table", "critical modes over the full parameter grid");
    CLI11_PARSE(app, argc, argv);

    CaseConfig cfg;
    try {
        cfg = load_config(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    cfg.out_dir = out_dir;
    cfg.use_cache = !no_cache;
    fs::path out(out_dir);
    fs::create_directories(out);
    fs::path cache_dir = out / "cache";
    Log log(out / "run.log");
    log("configuration:\n" + cfg.echo());

    try {
        if (c_rad->parsed()) {
            auto rad = Pipeline{cfg, cache_dir, log}.radiation();
            write_csv_file(out / "radiation.csv", radiation_csv(rad));
            write_json(out / "radiation.json", {{"inputs", config_json(cfg)}, {"n_tau", cfg.n_tau}, {"iterations", rad.iterations}, {"residual", rad.residual}});
        } else if (c_base->parsed()) {
            Pipeline pl{cfg, cache_dir, log};
            auto bs = pl.base_state(pl.radiation());
            write_csv_file(out / "base_state.csv", base_state_csv(bs));
            auto d = sublayer_diagnostics(bs, bs.params.curve.critical_intensity());
            write_json(out / "base_state.json", {{"inputs", config_json(cfg)},
                                                 {"n_top", bs.n_top},
                                                 {"z_star", d.z_star},
                                                 {"HUZ", d.HUZ},
                                                 {"CDUZ", d.CDUZ},
                                                 {"peak_count", d.peak_count}});
        } else if (c_curve->parsed()) {
            Pipeline pl{cfg, cache_dir, log};
            auto bs = pl.base_state(pl.radiation());
            StabilitySolver s(bs, AngularQuadrature::build(cfg.n_polar, cfg.n_azimuth));
            auto curve = stage("neutral-curve", [&] { return s.trace_neutral_curve(cfg.k_min, cfg.k_max, cfg.n_k, cfg.Sc); });
            write_csv_file(out / "neutral_curve.csv", neutral_curve_csv(curve));
            nlohmann::json j{{"inputs", config_json(cfg)}, {"partial", !curve.failures.empty()}};
            for (const auto& b : curve.branches)
                j["branches"].push_back({{"kind", to_string(b.kind)}, {"points", b.points.size()}, {"k_b", b.k_b ? nlohmann::json(*b.k_b) : nlohmann::json()}});
            for (const auto& [k, why] : curve.failures) j["failures"].push_back({{"k", k}, {"reason", why}});
            write_json(out / "neutral_curve.json", j);
            if (!curve.failures.empty()) log("warning: neutral curve is partial, see neutral_curve.json");
        } else if (c_crit->parsed()) {
            auto r = run_critical(cfg, out, cache_dir, log);
            write_csv_file(out / "critical.csv", {critical_header(), {critical_row(cfg, r.record.critical)}});
            write_json(out / "critical.json", r.record.to_json());
        } else if (c_table->parsed()) {
            auto cases = table_cases(cfg);
            std::vector<std::optional<CaseResult>> results(cases.size());
            std::vector<std::string> errors(cases.size());
            std::atomic<std::size_t> next{0};
            auto worker = [&] {
                for (std::size_t i; (i = next++) < cases.size();) {
                    char name[16];
                    std::snprintf(name, sizeof name, "case_%02zu", i + 1);
                    fs::path dir = out / name;
                    fs::create_directories(dir);
                    try {
                        auto r = run_critical(cases[i], dir, cache_dir, log);
                        write_csv_file(dir / "critical.csv", {critical_header(), {critical_row(cases[i], r.record.critical)}});
                        write_json(dir / "critical.json", r.record.to_json());
                        results[i] = std::move(r);
                    } catch (const StageError& e) {
                        errors[i] = e.stage + ": " + e.what();
                        log(std::string(name) + " failed in stage " + e.stage + ": " + e.what());
                    }
                }
            };
            std::vector<std::thread> pool;
            for (unsigned t = 0; t < std::min<std::size_t>(threads, cases.size()); ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
            CsvTable table{critical_header(), {}};
            nlohmann::json summary = nlohmann::json::array();
            bool failed = false;
            for (std::size_t i = 0; i < cases.size(); ++i) {
                if (results[i]) {
                    table.rows.push_back(critical_row(cases[i], results[i]->record.critical));
                    summary.push_back(results[i]->record.to_json());
                } else {
                    failed = true;
                    summary.push_back({{"case", i + 1}, {"error", errors[i]}});
                }
            }
            write_csv_file(out / "table.csv", table);
            write_json(out / "table.json", {{"partial", failed}, {"cases", summary}});
            if (failed) {
                log("table: some cases failed, table.csv is partial");
                return 1;
            }
        }
    } catch (const StageError& e) {
        log("error in stage " + e.stage + ": " + e.what());
        return 1;
    } catch (const std::exception& e) {
        log(std::string("error: ") + e.what());
        return 1;
    }
    return 0;
}
