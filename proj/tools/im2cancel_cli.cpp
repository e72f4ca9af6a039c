// im2cancel command line: run, sweep, replay, selftest.

#include <im2cancel/im2cancel.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "checks.hpp"

namespace fs = std::filesystem;
using namespace im2cancel;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, divergence = 3 };

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    long long seed = -1;
    int seeds = 0;
    std::string out_dir = ".";
};

ScenarioConfig load(const Common& o) {
    auto c = load_config(o.config);
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
        set_config_value(c, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
    }
    if (o.seed >= 0) c.seed = static_cast<std::uint64_t>(o.seed);
    if (o.seeds > 0) c.seeds = o.seeds;
    c.validate();
    return c;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw InputError("cannot write " + p.string());
    return f;
}

void report(const RunSummary& s) {
    std::printf("seed %llu: sinr %.2f -> %.2f dB, iip2 %.2f -> %.2f dBm, nmse %.2f dB%s\n",
                static_cast<unsigned long long>(s.seed), s.sinr_before_db, s.sinr_after_db, s.iip2_before_dbm,
                s.iip2_after_dbm, s.nmse_final_db, s.diverged ? (" DIVERGED: " + s.message).c_str() : "");
}

int cmd_run(const Common& o, bool recordings) {
    const auto c = load(o);
    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    auto summary = open_out(dir / "summary.csv");
    summary << summary_header() << '\n';
    bool diverged = false;
    run_scenario(c, [&](const RunResult& r) {
        const auto seed = std::to_string(r.summary.seed);
        auto trace = open_out(dir / ("trace_seed" + seed + ".csv"));
        write_trace_csv(trace, r);
        write_summary_row(summary, r.summary);
        report(r.summary);
        diverged = diverged || r.summary.diverged;
        if (recordings) {
            const auto link = simulate(c, r.summary.seed);
            write_recording((dir / ("tx_seed" + seed + ".raw")).string(), link.x_ref);
            write_recording((dir / ("rx_seed" + seed + ".raw")).string(), link.fe.d);
        }
    });
    return diverged ? divergence : ok;
}

std::vector<double> parse_powers(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto comma = s.find(',', pos);
        const auto item = detail::trim(s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        out.push_back(detail::parse_double("powers", item));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw ConfigError("powers: at least one power point is required");
    return out;
}

int cmd_sweep(const Common& o, const std::string& powers) {
    auto c = load(o);
    const auto pts = parse_powers(powers);
    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    auto csv = open_out(dir / "sweep.csv");
    csv << "tx_power_dbm,seed,diverged,sinr_before_db,sinr_after_db,iip2_after_dbm,residual_dbm\n";
    bool diverged = false;
    for (double p : pts) {
        c.tx_power_dbm = p;
        c.validate();
        double before = 0.0, after = 0.0;
        const auto sums = run_scenario(c);
        for (const auto& s : sums) {
            csv << p << ',' << s.seed << ',' << (s.diverged ? 1 : 0) << ',' << s.sinr_before_db << ','
                << s.sinr_after_db << ',' << s.iip2_after_dbm << ',' << s.residual_dbm << '\n';
            before += s.sinr_before_db / static_cast<double>(sums.size());
            after += s.sinr_after_db / static_cast<double>(sums.size());
            diverged = diverged || s.diverged;
        }
        std::printf("%6.2f dBm: sinr %.2f -> %.2f dB (mean of %zu)\n", p, before, after, sums.size());
    }
    return diverged ? divergence : ok;
}

int cmd_replay(const Common& o, const std::string& tx_path, const std::string& rx_path, long long align) {
    auto c = load(o);
    if (align != std::numeric_limits<long long>::min()) c.align_offset = align;
    const auto tx = read_recording(tx_path);
    const auto rx = read_recording(rx_path);
    const auto r = replay(tx, rx, c);
    for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    RunResult rr;
    rr.cancel = r.cancel;
    rr.nmse_db.assign(r.cancel.e_i.size(), std::numeric_limits<double>::quiet_NaN());
    auto trace = open_out(dir / "replay_trace.csv");
    write_trace_csv(trace, rr);
    std::printf("residual %.2f dBm -> %.2f dBm (%.2f dB), sign %+d, eps_hat %.4f%s\n", r.before_dbm, r.after_dbm,
                r.before_dbm - r.after_dbm, r.cancel.sign, r.cancel.eps_hat,
                r.cancel.diverged ? (" DIVERGED: " + r.cancel.message).c_str() : "");
    return r.cancel.diverged ? divergence : ok;
}

int cmd_selftest() {
    using namespace checks;
    const std::vector<Check> all = {link_budget_arithmetic(), two_tone_self_consistency(), oracle_equivalences(),
                                    structural_invariants(), qpath_and_sign(), complexity_formulas()};
    bool pass = true;
    for (const auto& c : all) {
        print(c);
        pass = pass && c.pass;
    }
    return pass ? ok : failure;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"IMD2 self-interference simulation and cancellation"};
    app.require_subcommand(1);

    Common o;
    auto common = [&o](CLI::App* s) {
        s->add_option("--set", o.overrides, "override a config key, key=value");
        s->add_option("--seed", o.seed, "first seed");
        s->add_option("--seeds", o.seeds, "number of seeds")->check(CLI::PositiveNumber);
        s->add_option("--out-dir", o.out_dir, "output directory");
    };

    bool recordings = false;
    auto* run = app.add_subcommand("run", "simulate a scenario and write traces");
    run->add_option("config", o.config, "scenario file")->required();
    run->add_flag("--write-recordings", recordings, "also write tx/rx recordings per seed");
    common(run);

    std::string powers;
    auto* sweep = app.add_subcommand("sweep", "repeat a scenario over Tx powers");
    sweep->add_option("config", o.config, "scenario file")->required();
    sweep->add_option("--powers", powers, "comma separated Tx powers in dBm")->required();
    common(sweep);

    std::string tx, rx;
    long long align = std::numeric_limits<long long>::min();
    auto* rep = app.add_subcommand("replay", "cancel a recorded Tx/Rx pair");
    rep->add_option("--tx", tx, "Tx recording")->required();
    rep->add_option("--rx", rx, "Rx recording")->required();
    rep->add_option("--config", o.config, "scenario file")->required();
    rep->add_option("--align-offset", align, "Rx sample paired with Tx sample 0");
    common(rep);

    auto* self = app.add_subcommand("selftest", "run the fast oracle checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*run) return cmd_run(o, recordings);
        if (*sweep) return cmd_sweep(o, powers);
        if (*rep) return cmd_replay(o, tx, rx, align);
        if (*self) return cmd_selftest();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return config_error;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return failure;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "diverged: %s\n", e.what());
        return divergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return failure;
    }
    return failure;
}
