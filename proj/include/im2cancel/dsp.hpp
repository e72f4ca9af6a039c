#ifndef IM2CANCEL_DSP_HPP
#define IM2CANCEL_DSP_HPP

// Signal containers and the small DSP toolbox shared by every module:
// power conversions, FIR filtering (batch and streaming), the DC notch,
// tapped delay lines, 2x interpolation and a Welch PSD estimator.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "errors.hpp"

namespace im2cancel {

using cd = std::complex<double>;

/// Complex baseband samples plus their rate. Power is referred to 1 ohm.
struct ComplexSignal {
    std::vector<cd> samples;
    double sample_rate_hz = 0.0;

    ComplexSignal() = default;
    ComplexSignal(std::vector<cd> s, double rate) : samples(std::move(s)), sample_rate_hz(rate) {
        if (!(rate > 0.0) || !std::isfinite(rate))
            throw InputError("sample rate must be positive and finite");
    }
    std::size_t size() const { return samples.size(); }
};

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }
inline double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }

template <typename T>
double mean_power(std::span<const T> x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& v : x) acc += std::norm(v);
    return acc / static_cast<double>(x.size());
}

template <typename T>
double mean_power(const std::vector<T>& x) { return mean_power(std::span<const T>(x)); }

/// 10 log10(mean |s|^2) + 30. Returns -inf for an all-zero or empty input.
template <typename T>
double power_dbm(std::span<const T> x) {
    const double p = mean_power(x);
    return p > 0.0 ? watts_to_dbm(p) : -std::numeric_limits<double>::infinity();
}

template <typename T>
double power_dbm(const std::vector<T>& x) { return power_dbm(std::span<const T>(x)); }

inline double power_dbm(const ComplexSignal& s) { return power_dbm(s.samples); }

/// Rescale in place so that the mean power equals `dbm`.
template <typename T>
void set_power_dbm(std::vector<T>& x, double dbm) {
    const double p = mean_power(x);
    if (!(p > 0.0)) throw InputError("cannot set the power of a zero signal");
    if (!std::isfinite(dbm)) throw ConfigError("target power must be finite");
    const double g = std::sqrt(dbm_to_watts(dbm) / p);
    for (auto& v : x) v *= g;
}

inline ComplexSignal set_power(ComplexSignal s, double dbm) {
    set_power_dbm(s.samples, dbm);
    return s;
}

template <typename T>
void check_finite(std::span<const T> x, const char* what) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        bool ok;
        if constexpr (std::is_floating_point_v<T>) ok = std::isfinite(x[i]);
        else ok = std::isfinite(x[i].real()) && std::isfinite(x[i].imag());
        if (!ok) throw InputError(std::string(what) + ": non-finite sample at index " + std::to_string(i));
    }
}

/// FIR filter with real or complex taps.
template <typename Tap>
struct Fir {
    std::vector<Tap> taps;
    double group_delay = 0.0;

    Fir() = default;
    explicit Fir(std::vector<Tap> h, double gd = -1.0) : taps(std::move(h)) {
        if (taps.empty()) throw ConfigError("FIR filter needs at least one tap");
        group_delay = gd >= 0.0 ? gd : 0.5 * static_cast<double>(taps.size() - 1);
    }
    std::size_t size() const { return taps.size(); }
};

using RealFir = Fir<double>;
using ComplexFir = Fir<cd>;

template <typename A, typename B>
using product_t = decltype(std::declval<A>() * std::declval<B>());

/// Causal convolution truncated to the input length: y[n] = sum_k h[k] x[n-k].
template <typename Tap, typename S>
std::vector<product_t<Tap, S>> fir_apply(std::span<const S> x, const Fir<Tap>& f) {
    if (f.taps.empty()) throw ConfigError("FIR filter needs at least one tap");
    using R = product_t<Tap, S>;
    const std::size_t L = f.taps.size();
    std::vector<R> y(x.size(), R{});
    for (std::size_t n = 0; n < x.size(); ++n) {
        const std::size_t kmax = std::min(L, n + 1);
        R acc{};
        for (std::size_t k = 0; k < kmax; ++k) acc += f.taps[k] * x[n - k];
        y[n] = acc;
    }
    return y;
}

template <typename Tap, typename S>
std::vector<product_t<Tap, S>> fir_apply(const std::vector<S>& x, const Fir<Tap>& f) {
    return fir_apply(std::span<const S>(x), f);
}

/// Sliding window of the last `depth` values, newest first.
/// Pushing is O(1) and view() is contiguous.
template <typename T>
class DelayLine {
public:
    explicit DelayLine(std::size_t depth = 1) : depth_(depth), buf_(2 * depth, T{}), pos_(0) {
        if (depth == 0) throw ConfigError("delay line depth must be at least 1");
    }

    void push(const T& v) {
        pos_ = pos_ == 0 ? depth_ - 1 : pos_ - 1;
        buf_[pos_] = v;
        buf_[pos_ + depth_] = v;
    }

    /// Element k is the value pushed k steps ago.
    const T& operator[](std::size_t k) const { return buf_[pos_ + k]; }
    std::span<const T> view() const { return {buf_.data() + pos_, depth_}; }
    std::size_t depth() const { return depth_; }

    void reset() {
        std::fill(buf_.begin(), buf_.end(), T{});
        pos_ = 0;
    }

private:
    std::size_t depth_;
    std::vector<T> buf_;
    std::size_t pos_;
};

/// Sample-by-sample FIR. Produces the same output as fir_apply.
template <typename Tap, typename S>
class FirStream {
public:
    using R = product_t<Tap, S>;

    explicit FirStream(const Fir<Tap>& f) : taps_(f.taps), line_(f.taps.size()) {}

    R push(const S& x) {
        line_.push(x);
        const auto v = line_.view();
        R acc{};
        for (std::size_t k = 0; k < taps_.size(); ++k) acc += taps_[k] * v[k];
        return acc;
    }

    void reset() { line_.reset(); }

private:
    std::vector<Tap> taps_;
    DelayLine<S> line_;
};

/// First-order DC notch: y[n] = a y[n-1] + x[n] - x[n-1].
template <typename S>
class DcNotch {
public:
    explicit DcNotch(double a = 0.998) : a_(a) {
        if (!(a >= 0.9 && a < 1.0)) throw ConfigError("DC notch pole must lie in [0.9, 1)");
    }

    S step(const S& x) {
        const S y = a_ * prev_out_ + x - prev_in_;
        prev_in_ = x;
        prev_out_ = y;
        return y;
    }

    double pole() const { return a_; }
    void reset() { prev_in_ = S{}; prev_out_ = S{}; }

private:
    double a_;
    S prev_in_{};
    S prev_out_{};
};

template <typename S>
std::vector<S> dc_notch_apply(std::span<const S> x, double a = 0.998) {
    DcNotch<S> n(a);
    std::vector<S> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = n.step(x[i]);
    return y;
}

template <typename S>
std::vector<S> dc_notch_apply(const std::vector<S>& x, double a = 0.998) {
    return dc_notch_apply(std::span<const S>(x), a);
}

enum class Window { Rectangular, Hamming, Hann, Kaiser };

/// Symmetric window of length n. `beta` is used by the Kaiser window only.
inline std::vector<double> make_window(std::size_t n, Window w, double beta = 5.5) {
    std::vector<double> v(n, 1.0);
    if (n < 2 || w == Window::Rectangular) return v;
    const double den = static_cast<double>(n - 1);
    if (w == Window::Kaiser) {
        const double i0b = std::cyl_bessel_i(0.0, beta);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = 2.0 * static_cast<double>(i) / den - 1.0;
            v[i] = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
        }
        return v;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double c = std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / den);
        v[i] = w == Window::Hamming ? 0.54 - 0.46 * c : 0.5 - 0.5 * c;
    }
    return v;
}

/// Windowed-sinc lowpass. `cutoff` is in cycles per sample (0.5 = Nyquist);
/// taps are scaled to a DC gain of `gain`.
inline RealFir design_lowpass(std::size_t n_taps, double cutoff, double gain = 1.0,
                              Window w = Window::Hamming, double beta = 5.5) {
    if (n_taps == 0) throw ConfigError("lowpass needs at least one tap");
    if (!(cutoff > 0.0 && cutoff < 0.5)) throw ConfigError("lowpass cutoff must lie in (0, 0.5) cycles/sample");
    const auto win = make_window(n_taps, w, beta);
    const double mid = 0.5 * static_cast<double>(n_taps - 1);
    std::vector<double> h(n_taps);
    double sum = 0.0;
    for (std::size_t i = 0; i < n_taps; ++i) {
        const double t = static_cast<double>(i) - mid;
        const double s = t == 0.0 ? 2.0 * cutoff
                                  : std::sin(2.0 * std::numbers::pi * cutoff * t) / (std::numbers::pi * t);
        h[i] = s * win[i];
        sum += h[i];
    }
    for (auto& v : h) v *= gain / sum;
    return RealFir(std::move(h), mid);
}

/// H(f) at `f` cycles per sample.
template <typename Tap>
cd frequency_response(const Fir<Tap>& f, double freq) {
    cd acc{};
    for (std::size_t k = 0; k < f.taps.size(); ++k)
        acc += f.taps[k] * std::polar(1.0, -2.0 * std::numbers::pi * freq * static_cast<double>(k));
    return acc;
}

/// The interpolation lowpass used for 2x upsampling, at unit DC gain.
/// 63 taps, cutoff at a quarter of the output rate.
inline const RealFir& interpolation_lowpass() {
    static const RealFir f = design_lowpass(63, 0.25, 1.0);
    return f;
}

/// Zero-stuff by two and lowpass. The filter delay is removed so that output
/// sample 2n lines up with input sample n; the output is twice as long.
inline ComplexSignal upsample2(const ComplexSignal& x) {
    const auto& lp = interpolation_lowpass();
    const std::size_t n = x.size();
    const std::size_t delay = static_cast<std::size_t>(lp.group_delay);
    std::vector<cd> stuffed(2 * n + delay, cd{});
    for (std::size_t i = 0; i < n; ++i) stuffed[2 * i] = 2.0 * x.samples[i];
    auto y = fir_apply(stuffed, lp);
    std::vector<cd> out(y.begin() + static_cast<std::ptrdiff_t>(delay), y.end());
    return ComplexSignal(std::move(out), 2.0 * x.sample_rate_hz);
}

/// PSD on a centred frequency grid. Each entry is the power in one bin of
/// width `bin_hz`; `dbm_per_rbw` rescales that to the requested RBW.
struct Spectrum {
    std::vector<double> freq_hz;
    std::vector<double> bin_power_w;
    double bin_hz = 0.0;
    double rbw_hz = 0.0;

    double dbm_per_rbw(std::size_t k) const {
        return watts_to_dbm(bin_power_w[k] * rbw_hz / bin_hz);
    }
    double total_power_w() const {
        double s = 0.0;
        for (double p : bin_power_w) s += p;
        return s;
    }
};

inline std::size_t welch_segment_length(double fs, double rbw) {
    const double ratio = fs / rbw;
    const double e = std::round(std::log2(ratio));
    return static_cast<std::size_t>(std::llround(std::pow(2.0, std::max(e, 1.0))));
}

/// Welch estimate: Hann window, 50 % overlap, segment length fs/rbw rounded
/// to a power of two.
inline Spectrum psd_estimate(const ComplexSignal& x, double rbw_hz) {
    if (!(rbw_hz > 0.0) || rbw_hz >= x.sample_rate_hz)
        throw ConfigError("RBW must be positive and below the sample rate");
    const std::size_t nseg = welch_segment_length(x.sample_rate_hz, rbw_hz);
    if (x.size() < nseg)
        throw InputError("signal too short for PSD: need at least " + std::to_string(nseg) + " samples, got " +
                         std::to_string(x.size()));
    const auto win = make_window(nseg + 1, Window::Hann);  // periodic Hann
    double wpow = 0.0;
    for (std::size_t i = 0; i < nseg; ++i) wpow += win[i] * win[i];

    Eigen::FFT<double> fft;
    std::vector<cd> seg(nseg), spec(nseg);
    std::vector<double> acc(nseg, 0.0);
    const std::size_t hop = nseg / 2;
    std::size_t count = 0;
    for (std::size_t start = 0; start + nseg <= x.size(); start += hop) {
        for (std::size_t i = 0; i < nseg; ++i) seg[i] = x.samples[start + i] * win[i];
        fft.fwd(spec, seg);
        for (std::size_t i = 0; i < nseg; ++i) acc[i] += std::norm(spec[i]);
        ++count;
    }
    Spectrum s;
    s.bin_hz = x.sample_rate_hz / static_cast<double>(nseg);
    s.rbw_hz = rbw_hz;
    s.freq_hz.resize(nseg);
    s.bin_power_w.resize(nseg);
    const double norm = 1.0 / (static_cast<double>(count) * static_cast<double>(nseg) * wpow);
    for (std::size_t i = 0; i < nseg; ++i) {
        const std::size_t src = (i + nseg / 2) % nseg;
        const long long k = static_cast<long long>(src) - (src >= nseg / 2 ? static_cast<long long>(nseg) : 0);
        s.freq_hz[i] = static_cast<double>(k) * s.bin_hz;
        s.bin_power_w[i] = acc[src] * norm;
    }
    return s;
}

} // namespace im2cancel

#endif
