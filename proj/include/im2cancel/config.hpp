#ifndef IM2CANCEL_CONFIG_HPP
#define IM2CANCEL_CONFIG_HPP

// Scenario description and its flat "key = value" file format.
// Lines starting with '#' are comments; `schema = 1` is mandatory.

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "canceller.hpp"
#include "frontend.hpp"
#include "txgen.hpp"

namespace im2cancel {

/// How the IMD2 level is set: from the two-tone IIP2 alone, or so that the
/// filtered IMD2 power equals the link-budget figure 2 P_TxL - IIP2 - CF.
enum class Imd2Level { TwoTone, LinkBudget };

struct ScenarioConfig {
    int schema = 1;
    std::string name = "scenario";

    // transmitter
    std::string allocation = "full";
    int slots = 20;
    double tx_power_dbm = 23.0;

    // front end
    double isolation_db = 50.0;
    /// "canonical" (the built-in response scaled to isolation_db) or
    /// native-rate taps "re:im, re:im, ...".
    std::string duplexer = "canonical";
    double lna_gain_db = 20.0;
    double iip2_dbm = 50.0;
    double qpath_ratio = 0.5;
    int imd2_sign = 1;
    Imd2Level imd2_level = Imd2Level::TwoTone;
    double cf_db = 13.4;
    double rx_power_dbm = -97.0;
    double thermal_noise_dbm = -104.5;
    double noise_figure_db = 4.5;
    std::optional<double> rx_snr_db;
    bool include_wanted = true;
    bool include_noise = true;
    bool dc_removal = true;
    double notch_pole = 0.998;
    double csf_passband_hz = 4.5e6;
    int csf_taps = 129;

    // canceller
    Algorithm algorithm = Algorithm::Im2Rls;
    int n_w = 15;
    double lambda = 0.9999;
    double nu = 100.0;
    double w_init = 1e-6;
    /// Replica notch; unset follows dc_removal.
    std::optional<bool> replica_notch;
    ZfStrategy zf = ZfStrategy::DelayApprox;
    RegKind reg_kind = RegKind::Identity;
    double sigma = 3e-7;
    bool qpath = true;
    double qpath_lambda = 0.9999;
    double qpath_p0 = 1e7;
    bool sign_detection = false;

    // harness
    int seeds = 10;
    std::uint64_t seed = 1;
    int cond_interval = 1000;
    bool track_unregularized = false;
    int nmse_window = 500;
    int trace_decimation = 1;
    long long align_offset = 0;

    bool notch_in_replica() const { return replica_notch.value_or(dc_removal); }
    LteGridConfig grid() const { return lte10(); }
    AllocationMask mask() const { return AllocationMask::parse(allocation, grid()); }

    DuplexerChannel duplexer_channel() const {
        if (duplexer == "canonical") return canonical_duplexer(isolation_db);
        std::vector<cd> taps;
        std::stringstream ss(duplexer);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
            if (b == std::string::npos) throw ConfigError("duplexer: empty tap entry");
            item = item.substr(b, e - b + 1);
            const auto colon = item.find(':');
            try {
                std::size_t used = 0;
                const std::string re = item.substr(0, colon);
                const double r = std::stod(re, &used);
                if (used != re.size()) throw std::invalid_argument(re);
                double i = 0.0;
                if (colon != std::string::npos) {
                    const std::string im = item.substr(colon + 1);
                    i = std::stod(im, &used);
                    if (used != im.size()) throw std::invalid_argument(im);
                }
                taps.emplace_back(r, i);
            } catch (const std::logic_error&) {
                throw ConfigError("duplexer: cannot parse tap '" + item + "'");
            }
        }
        if (taps.empty()) throw ConfigError("duplexer: no taps given");
        return make_duplexer(std::move(taps));
    }

    void validate() const {
        if (schema != 1) throw ConfigError("unsupported config schema " + std::to_string(schema));
        (void)mask();
        (void)duplexer_channel();
        if (slots < 1) throw ConfigError("slots must be at least 1");
        if (n_w < 1) throw ConfigError("n_w must be at least 1");
        if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in (0, 1]");
        if (!(nu > 0.0)) throw ConfigError("nu must be positive");
        if (w_init == 0.0) throw ConfigError("w_init = 0 stalls the recursion: zero-gain vector");
        if (!(sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
        if (imd2_sign != 1 && imd2_sign != -1) throw ConfigError("imd2_sign must be 1 or -1");
        if (!(notch_pole >= 0.9 && notch_pole < 1.0)) throw ConfigError("notch_pole must lie in [0.9, 1)");
        if (seeds < 1) throw ConfigError("seeds must be at least 1");
        if (cond_interval < 1) throw ConfigError("cond_interval must be at least 1");
        if (nmse_window < 1) throw ConfigError("nmse_window must be at least 1");
        if (trace_decimation < 1) throw ConfigError("trace_decimation must be at least 1");
        if (csf_taps < 3 || csf_taps % 2 == 0) throw ConfigError("csf_taps must be odd and at least 3");
        if (algorithm == Algorithm::RIm2Rls && reg_kind != RegKind::Identity && n_w < 2)
            throw ConfigError("derivative regularizers need n_w >= 2");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::logic_error&) {
    }
    if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

inline long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end) throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

} // namespace detail

inline const char* to_string(Algorithm a) { return a == Algorithm::Im2Rls ? "im2rls" : "r-im2rls"; }
inline const char* to_string(ZfStrategy z) {
    return z == ZfStrategy::Exact ? "exact" : z == ZfStrategy::ScalarApprox ? "scalar" : "delay";
}
inline const char* to_string(RegKind k) {
    return k == RegKind::Identity ? "identity" : k == RegKind::FirstDerivative ? "first-derivative" : "second-derivative";
}
inline const char* to_string(Imd2Level l) { return l == Imd2Level::TwoTone ? "two-tone" : "link-budget"; }

/// Applies one `key = value` pair. Throws ConfigError on unknown keys or bad values.
inline void set_config_value(ScenarioConfig& c, const std::string& key, const std::string& v) {
    using namespace detail;
    auto num = [&] { return parse_double(key, v); };
    auto integer = [&] { return parse_int(key, v); };
    auto flag = [&] { return parse_bool(key, v); };

    if (key == "schema") c.schema = static_cast<int>(integer());
    else if (key == "name") c.name = v;
    else if (key == "allocation") c.allocation = v;
    else if (key == "slots") c.slots = static_cast<int>(integer());
    else if (key == "tx_power_dbm") c.tx_power_dbm = num();
    else if (key == "isolation_db") c.isolation_db = num();
    else if (key == "duplexer") c.duplexer = v;
    else if (key == "lna_gain_db") c.lna_gain_db = num();
    else if (key == "iip2_dbm") c.iip2_dbm = num();
    else if (key == "qpath_ratio") c.qpath_ratio = num();
    else if (key == "imd2_sign") c.imd2_sign = static_cast<int>(integer());
    else if (key == "imd2_level") {
        if (v == "two-tone") c.imd2_level = Imd2Level::TwoTone;
        else if (v == "link-budget") c.imd2_level = Imd2Level::LinkBudget;
        else throw ConfigError("key 'imd2_level': expected two-tone or link-budget, got '" + v + "'");
    } else if (key == "cf_db") c.cf_db = num();
    else if (key == "rx_power_dbm") c.rx_power_dbm = num();
    else if (key == "thermal_noise_dbm") c.thermal_noise_dbm = num();
    else if (key == "noise_figure_db") c.noise_figure_db = num();
    else if (key == "rx_snr_db") c.rx_snr_db = num();
    else if (key == "include_wanted") c.include_wanted = flag();
    else if (key == "include_noise") c.include_noise = flag();
    else if (key == "dc_removal") c.dc_removal = flag();
    else if (key == "notch_pole") c.notch_pole = num();
    else if (key == "csf_passband_hz") c.csf_passband_hz = num();
    else if (key == "csf_taps") c.csf_taps = static_cast<int>(integer());
    else if (key == "algorithm") {
        if (v == "im2rls") c.algorithm = Algorithm::Im2Rls;
        else if (v == "r-im2rls") c.algorithm = Algorithm::RIm2Rls;
        else throw ConfigError("key 'algorithm': expected im2rls or r-im2rls, got '" + v + "'");
    } else if (key == "n_w") c.n_w = static_cast<int>(integer());
    else if (key == "lambda") c.lambda = num();
    else if (key == "nu") c.nu = num();
    else if (key == "w_init") c.w_init = num();
    else if (key == "replica_notch") c.replica_notch = flag();
    else if (key == "zf") {
        if (v == "exact") c.zf = ZfStrategy::Exact;
        else if (v == "scalar") c.zf = ZfStrategy::ScalarApprox;
        else if (v == "delay") c.zf = ZfStrategy::DelayApprox;
        else throw ConfigError("key 'zf': expected exact, scalar or delay, got '" + v + "'");
    } else if (key == "reg_kind") {
        if (v == "identity") c.reg_kind = RegKind::Identity;
        else if (v == "first-derivative") c.reg_kind = RegKind::FirstDerivative;
        else if (v == "second-derivative") c.reg_kind = RegKind::SecondDerivative;
        else throw ConfigError("key 'reg_kind': expected identity, first-derivative or second-derivative, got '" + v + "'");
    } else if (key == "sigma") c.sigma = num();
    else if (key == "qpath") c.qpath = flag();
    else if (key == "qpath_lambda") c.qpath_lambda = num();
    else if (key == "qpath_p0") c.qpath_p0 = num();
    else if (key == "sign_detection") c.sign_detection = flag();
    else if (key == "seeds") c.seeds = static_cast<int>(integer());
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(integer());
    else if (key == "cond_interval") c.cond_interval = static_cast<int>(integer());
    else if (key == "track_unregularized") c.track_unregularized = flag();
    else if (key == "nmse_window") c.nmse_window = static_cast<int>(integer());
    else if (key == "trace_decimation") c.trace_decimation = static_cast<int>(integer());
    else if (key == "align_offset") c.align_offset = integer();
    else throw ConfigError("unknown config key '" + key + "'");
}

inline ScenarioConfig parse_config(std::istream& in) {
    ScenarioConfig c;
    std::string line;
    int lineno = 0;
    bool saw_schema = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        try {
            set_config_value(c, key, val);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (key == "schema") saw_schema = true;
    }
    if (!saw_schema) throw ConfigError("missing 'schema = 1'");
    c.validate();
    return c;
}

inline ScenarioConfig parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in);
}

/// Canonical text form; parse_config(format_config(c)) reproduces c.
inline std::string format_config(const ScenarioConfig& c) {
    std::ostringstream o;
    o.precision(17);
    o << "schema = " << c.schema << "\n"
      << "name = " << c.name << "\n"
      << "allocation = " << c.allocation << "\n"
      << "slots = " << c.slots << "\n"
      << "tx_power_dbm = " << c.tx_power_dbm << "\n"
      << "isolation_db = " << c.isolation_db << "\n"
      << "duplexer = " << c.duplexer << "\n"
      << "lna_gain_db = " << c.lna_gain_db << "\n"
      << "iip2_dbm = " << c.iip2_dbm << "\n"
      << "qpath_ratio = " << c.qpath_ratio << "\n"
      << "imd2_sign = " << c.imd2_sign << "\n"
      << "imd2_level = " << to_string(c.imd2_level) << "\n"
      << "cf_db = " << c.cf_db << "\n"
      << "rx_power_dbm = " << c.rx_power_dbm << "\n"
      << "thermal_noise_dbm = " << c.thermal_noise_dbm << "\n"
      << "noise_figure_db = " << c.noise_figure_db << "\n";
    if (c.rx_snr_db) o << "rx_snr_db = " << *c.rx_snr_db << "\n";
    o << "include_wanted = " << (c.include_wanted ? "true" : "false") << "\n"
      << "include_noise = " << (c.include_noise ? "true" : "false") << "\n"
      << "dc_removal = " << (c.dc_removal ? "true" : "false") << "\n"
      << "notch_pole = " << c.notch_pole << "\n"
      << "csf_passband_hz = " << c.csf_passband_hz << "\n"
      << "csf_taps = " << c.csf_taps << "\n"
      << "algorithm = " << to_string(c.algorithm) << "\n"
      << "n_w = " << c.n_w << "\n"
      << "lambda = " << c.lambda << "\n"
      << "nu = " << c.nu << "\n"
      << "w_init = " << c.w_init << "\n";
    if (c.replica_notch) o << "replica_notch = " << (*c.replica_notch ? "true" : "false") << "\n";
    o << "zf = " << to_string(c.zf) << "\n"
      << "reg_kind = " << to_string(c.reg_kind) << "\n"
      << "sigma = " << c.sigma << "\n"
      << "qpath = " << (c.qpath ? "true" : "false") << "\n"
      << "qpath_lambda = " << c.qpath_lambda << "\n"
      << "qpath_p0 = " << c.qpath_p0 << "\n"
      << "sign_detection = " << (c.sign_detection ? "true" : "false") << "\n"
      << "seeds = " << c.seeds << "\n"
      << "seed = " << c.seed << "\n"
      << "cond_interval = " << c.cond_interval << "\n"
      << "track_unregularized = " << (c.track_unregularized ? "true" : "false") << "\n"
      << "nmse_window = " << c.nmse_window << "\n"
      << "trace_decimation = " << c.trace_decimation << "\n"
      << "align_offset = " << c.align_offset << "\n";
    return o.str();
}

} // namespace im2cancel

#endif
