#ifndef IM2CANCEL_FRONTEND_HPP
#define IM2CANCEL_FRONTEND_HPP

// Direct-conversion receiver model: Tx leakage through the duplexer, the
// second-order mixer product, channel-select filtering, DC notch, wanted
// signal and thermal noise.

#include <cstdint>
#include <optional>
#include <random>

#include "dsp.hpp"
#include "txgen.hpp"

namespace im2cancel {

/// Built-in duplexer Tx-to-Rx stopband response, native 15.36 MHz rate.
inline std::vector<cd> fig4_duplexer_taps() {
    static const double re[] = {-0.002529, -0.001155, 0.002579, 0.000973, -0.001857, 0.000031, -0.000659, -0.000013,
                                -0.000053, -0.000069, -0.000128, 0.000038, -0.000042, -0.000045, 0.000023};
    static const double im[] = {-0.000461, -0.002185, 0.002956, 0.000382, -0.000348, -0.000202, -0.000300, -0.000141,
                                0.000080,  -0.000008, -0.000107, 0.000110, 0.000014,  -0.000007, 0.000081};
    std::vector<cd> h(15);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = {re[i], im[i]};
    return h;
}

struct DuplexerChannel {
    std::vector<cd> taps_native;
    double native_rate_hz = 15.36e6;
    /// Response at twice the native rate, used on the OSF-2 signal path.
    std::vector<cd> taps;

    double sample_rate_hz() const { return 2.0 * native_rate_hz; }
    /// 10 log10 of the reciprocal tap energy at the native rate.
    double isolation_db() const {
        double e = 0.0;
        for (const auto& v : taps_native) e += std::norm(v);
        return -10.0 * std::log10(e);
    }
};

/// Builds the OSF-2 response by band-limited interpolation of the native taps.
/// Scaling by the sample period keeps the frequency response unchanged.
inline DuplexerChannel make_duplexer(std::vector<cd> taps_native, double native_rate_hz = 15.36e6,
                                     std::size_t osf2_length = 0) {
    if (taps_native.empty()) throw ConfigError("duplexer needs at least one tap");
    check_finite(std::span<const cd>(taps_native), "duplexer taps");
    if (osf2_length == 0) osf2_length = 2 * taps_native.size();
    const auto& lp = interpolation_lowpass();
    const std::size_t delay = static_cast<std::size_t>(lp.group_delay);
    std::vector<cd> stuffed(osf2_length + delay, cd{});
    for (std::size_t i = 0; i < taps_native.size() && 2 * i < stuffed.size(); ++i) stuffed[2 * i] = taps_native[i];
    auto y = fir_apply(stuffed, lp);
    DuplexerChannel ch;
    ch.taps_native = std::move(taps_native);
    ch.native_rate_hz = native_rate_hz;
    ch.taps.assign(y.begin() + static_cast<std::ptrdiff_t>(delay), y.end());
    return ch;
}

/// The built-in response rescaled to the requested isolation.
inline DuplexerChannel canonical_duplexer(double isolation_db = 50.0) {
    if (!std::isfinite(isolation_db)) throw ConfigError("isolation must be finite");
    auto h = fig4_duplexer_taps();
    double e = 0.0;
    for (const auto& v : h) e += std::norm(v);
    const double g = std::sqrt(std::pow(10.0, -isolation_db / 10.0) / e);
    for (auto& v : h) v *= g;
    return make_duplexer(std::move(h));
}

/// Tx leakage at the LNA input for an OSF-2 PA output.
inline ComplexSignal txl_signal(const ComplexSignal& x, const DuplexerChannel& ch) {
    if (std::abs(x.sample_rate_hz - ch.sample_rate_hz()) > 1e-6 * ch.sample_rate_hz())
        throw InputError("signal rate " + std::to_string(x.sample_rate_hz) + " Hz does not match channel rate " +
                         std::to_string(ch.sample_rate_hz()) + " Hz");
    return ComplexSignal(fir_apply(x.samples, ComplexFir(ch.taps, 0.0)), x.sample_rate_hz);
}

/// Second-order mixer product alpha2/2 |y|^2.
inline std::vector<cd> imd2_generate(std::span<const cd> y, cd alpha2) {
    std::vector<cd> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = 0.5 * alpha2 * std::norm(y[i]);
    return out;
}

inline std::vector<cd> imd2_generate(const std::vector<cd>& y, cd alpha2) {
    return imd2_generate(std::span<const cd>(y), alpha2);
}

/// Channel-select lowpass: Kaiser-windowed sinc (beta 5.5), cutoff 100 kHz
/// above the passband edge. Throws when the response cannot reach 60 dB of
/// rejection from 1.25x the passband edge up to Nyquist.
inline RealFir design_csf(double fs_hz, double passband_hz, std::size_t n_taps = 129) {
    if (!(fs_hz > 0.0) || !(passband_hz > 0.0)) throw ConfigError("CSF rates must be positive");
    if (n_taps < 3 || n_taps % 2 == 0) throw ConfigError("CSF length must be odd and at least 3");
    const double cutoff = (passband_hz + 100e3) / fs_hz;
    const double stop = 1.25 * passband_hz / fs_hz;
    if (stop >= 0.5 || cutoff >= 0.5) throw ConfigError("CSF passband too wide for the sample rate");
    auto f = design_lowpass(n_taps, cutoff, 1.0, Window::Kaiser, 5.5);
    for (double v = stop; v <= 0.5; v += 0.25 / static_cast<double>(n_taps)) {
        if (std::abs(frequency_response(f, v)) > 1e-3)
            throw ConfigError("CSF infeasible: stopband from " + std::to_string(stop * fs_hz) +
                              " Hz cannot reach 60 dB with " + std::to_string(n_taps) + " taps");
    }
    return f;
}

/// Mixer IMD2 coefficient with the I/Q split alpha2_Q = qpath_ratio * alpha2_I.
/// Its magnitude is set so that the total complex product meets the given IIP2.
struct Imd2Model {
    double iip2_dbm = 50.0;
    double qpath_ratio = 0.5;
    int sign = +1;
    cd alpha1{1.0, 0.0};
};

struct ReceiverConfig {
    double tx_power_dbm = 23.0;
    /// PA gain between the given Tx signal and the antenna; 0 when the Tx power is specified at the antenna.
    double pa_gain_db = 0.0;
    double lna_gain_db = 20.0;
    cd alpha1{1.0, 0.0};
    cd alpha2{0.0, 0.0};
    double rx_power_dbm = -97.0;
    double thermal_noise_dbm = -104.5;
    double noise_figure_db = 4.5;
    std::optional<double> rx_snr_db;
    bool include_wanted = true;
    bool include_noise = true;
    bool dc_removal = true;
    double notch_pole = 0.998;
    double csf_passband_hz = 4.5e6;

    /// Noise power at the LNA output within the channel.
    double noise_dbm() const {
        if (rx_snr_db) return rx_power_dbm + lna_gain_db - *rx_snr_db;
        return thermal_noise_dbm + noise_figure_db + lna_gain_db;
    }
    double wanted_dbm() const { return rx_power_dbm + lna_gain_db; }
};

/// Two tones of total power p_in_dbm at f1 and f2 through the mixer model; the
/// IIP2 follows from the beat at f2 - f1 referred to the input:
/// IIP2 = 2 p_in - P(f2 - f1) - 6 dB, with P the two-sided beat power over |alpha1|^2.
inline double two_tone_iip2(const ReceiverConfig& cfg, double p_in_dbm, double f1_hz, double f2_hz,
                            double fs_hz = 30.72e6) {
    constexpr std::size_t n = 30720;
    const double bin = fs_hz / static_cast<double>(n);
    const double df = f2_hz - f1_hz;
    if (!std::isfinite(p_in_dbm) || !std::isfinite(f1_hz) || !std::isfinite(f2_hz))
        throw ConfigError("two-tone inputs must be finite");
    if (f1_hz == f2_hz) throw ConfigError("two-tone test needs distinct frequencies");
    if (std::abs(f1_hz) >= fs_hz / 4.0 || std::abs(f2_hz) >= fs_hz / 4.0)
        throw ConfigError("two-tone frequency outside the modelling band");
    if (std::abs(df) > cfg.csf_passband_hz) throw ConfigError("tone spacing outside the channel bandwidth");
    for (double f : {f1_hz, f2_hz})
        if (std::abs(f / bin - std::round(f / bin)) > 1e-9)
            throw ConfigError("tone frequencies must be multiples of " + std::to_string(bin) + " Hz");
    if (std::abs(cfg.alpha1) == 0.0) throw ConfigError("alpha1 must be nonzero");
    if (std::abs(cfg.alpha2) == 0.0) return std::numeric_limits<double>::infinity();

    const double a = std::sqrt(dbm_to_watts(p_in_dbm) / 2.0);
    std::vector<cd> x(n);
    const double tau = 2.0 * std::numbers::pi;
    const long long k1 = std::llround(f1_hz / bin), k2 = std::llround(f2_hz / bin);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = a * (std::polar(1.0, tau * std::fmod(static_cast<double>(k1) * static_cast<double>(i), n) / n) +
                    std::polar(1.0, tau * std::fmod(static_cast<double>(k2) * static_cast<double>(i), n) / n));
    }
    const auto y = imd2_generate(x, cfg.alpha2);
    const long long kd = k2 - k1;
    cd pos{}, neg{};
    for (std::size_t i = 0; i < n; ++i) {
        const double ph = tau * std::fmod(static_cast<double>(kd) * static_cast<double>(i), n) / n;
        pos += y[i] * std::polar(1.0, -ph);
        neg += y[i] * std::polar(1.0, ph);
    }
    pos /= static_cast<double>(n);
    neg /= static_cast<double>(n);
    const double p_beat = (std::norm(pos) + std::norm(neg)) / std::norm(cfg.alpha1);
    return 2.0 * p_in_dbm - watts_to_dbm(p_beat) - 6.0;
}

/// Finds alpha2 whose two-tone IIP2 equals `model.iip2_dbm`.
inline cd calibrate_alpha2(const Imd2Model& model) {
    if (std::isnan(model.iip2_dbm)) throw ConfigError("IIP2 must be a number");
    if (!std::isfinite(model.qpath_ratio)) throw ConfigError("Q-path ratio must be finite");
    if (model.sign != 1 && model.sign != -1) throw ConfigError("IMD2 sign must be +1 or -1");
    if (model.iip2_dbm == std::numeric_limits<double>::infinity()) return {0.0, 0.0};
    if (!std::isfinite(model.iip2_dbm)) throw ConfigError("IIP2 must be finite or +inf");

    const cd dir = cd(1.0, model.qpath_ratio) / std::sqrt(1.0 + model.qpath_ratio * model.qpath_ratio) *
                   static_cast<double>(model.sign);
    ReceiverConfig cfg;
    cfg.alpha1 = model.alpha1;
    cfg.alpha2 = dir * std::abs(model.alpha1);
    constexpr double p_in = -7.0, f1 = 1e6, f2 = 2e6;
    for (int it = 0; it < 4; ++it) {
        const double m = two_tone_iip2(cfg, p_in, f1, f2);
        if (std::abs(m - model.iip2_dbm) < 1e-9) return cfg.alpha2;
        cfg.alpha2 *= std::pow(10.0, (m - model.iip2_dbm) / 20.0);
    }
    const double m = two_tone_iip2(cfg, p_in, f1, f2);
    if (std::abs(m - model.iip2_dbm) > 1e-6)
        throw Error("alpha2 calibration did not converge: measured " + std::to_string(m) + " dBm");
    return cfg.alpha2;
}

struct FrontendOutput {
    /// Received baseband after CSF (and DC notch when enabled).
    ComplexSignal d;
    /// IMD2 component of d.
    std::vector<cd> imd2;
    std::vector<cd> wanted;
    std::vector<cd> noise;
    /// Tx leakage at the mixer input, after the LNA.
    ComplexSignal txl;
};

namespace detail {

inline std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), 0x1f2eu};
    return std::mt19937_64(seq);
}

template <typename T>
std::vector<T> filter_chain(const std::vector<T>& x, const RealFir& csf, bool notch, double pole) {
    auto y = fir_apply(x, csf);
    if (notch) y = dc_notch_apply(y, pole);
    return y;
}

} // namespace detail

inline std::vector<cd> complex_noise(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, std::sqrt(0.5));
    std::vector<cd> v(n);
    for (auto& s : v) {
        const double re = g(rng);
        s = {re, g(rng)};
    }
    return v;
}

/// Full receive path for an OSF-2 PA output `x_pa` (power already set).
inline FrontendOutput receiver_chain(const ComplexSignal& x_pa, const ReceiverConfig& cfg, const DuplexerChannel& ch,
                                     const RealFir& csf, std::uint64_t seed) {
    check_finite(std::span<const cd>(x_pa.samples), "PA output");
    if (x_pa.size() == 0) throw InputError("empty Tx signal");
    const std::size_t n = x_pa.size();
    const double fs = x_pa.sample_rate_hz;

    FrontendOutput out;
    out.txl = txl_signal(x_pa, ch);
    const double gain = db_to_amplitude(cfg.pa_gain_db + cfg.lna_gain_db);
    for (auto& v : out.txl.samples) v *= gain;

    out.imd2 = detail::filter_chain(imd2_generate(out.txl.samples, cfg.alpha2), csf, cfg.dc_removal, cfg.notch_pole);

    out.wanted.assign(n, cd{});
    if (cfg.include_wanted) {
        const auto g = lte10();
        const int native_slot = g.slot_length();
        const int slots = static_cast<int>((n / 2 + native_slot - 1) / native_slot);
        auto w = upsample2(generate_tx(g, AllocationMask::full(g), std::max(slots, 1), seed ^ 0x5eed5eedULL).signal);
        w.samples.resize(n);
        auto wf = fir_apply(w.samples, csf);
        set_power_dbm(wf, cfg.wanted_dbm());
        if (cfg.dc_removal) wf = dc_notch_apply(wf, cfg.notch_pole);
        out.wanted = std::move(wf);
    }

    out.noise.assign(n, cd{});
    if (cfg.include_noise) {
        auto rng = detail::derived_rng(seed, 7);
        auto nf = fir_apply(complex_noise(n, rng), csf);
        set_power_dbm(nf, cfg.noise_dbm());
        if (cfg.dc_removal) nf = dc_notch_apply(nf, cfg.notch_pole);
        out.noise = std::move(nf);
    }

    std::vector<cd> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = cfg.alpha1 * (out.wanted[i] + out.noise[i]) + out.imd2[i];
    out.d = ComplexSignal(std::move(d), fs);
    return out;
}

} // namespace im2cancel

#endif
