#include <im2cancel/frontend.hpp>
#include <im2cancel/metrics.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace im2cancel;

namespace {

/// Power of the two-tone IMD2 in the DC bin and at +-(f2 - f1), single sided.
struct TwoTonePowers {
    double dc, pos, neg, total;
};

TwoTonePowers two_tone_split(cd alpha2, double p_in_dbm, int k1, int k2, std::size_t n = 4096) {
    const double a = std::sqrt(dbm_to_watts(p_in_dbm) / 2.0);
    std::vector<cd> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
        x[i] = a * (std::polar(1.0, t * k1) + std::polar(1.0, t * k2));
    }
    const auto y = imd2_generate(x, alpha2);
    auto bin = [&](int k) {
        cd acc{};
        for (std::size_t i = 0; i < n; ++i)
            acc += y[i] * std::polar(1.0, -2.0 * std::numbers::pi * k * static_cast<double>(i) / static_cast<double>(n));
        return std::norm(acc / static_cast<double>(n));
    };
    return {watts_to_dbm(bin(0)), watts_to_dbm(bin(k2 - k1)), watts_to_dbm(bin(k1 - k2)), power_dbm(y)};
}

} // namespace

TEST(Duplexer, CanonicalTaps) {
    const auto h = fig4_duplexer_taps();
    EXPECT_EQ(h[0], cd(-0.002529, -0.000461));
    EXPECT_EQ(h[2], cd(0.002579, 0.002956));
}

TEST(Duplexer, CanonicalIsolation) {
    const auto ch = canonical_duplexer(50.0);
    EXPECT_NEAR(ch.isolation_db(), 50.0, 1e-9);
    EXPECT_EQ(ch.sample_rate_hz(), 30.72e6);
    EXPECT_EQ(ch.taps.size(), 30u);
}

TEST(Duplexer, ImpulseGivesOsf2Taps) {
    const auto ch = canonical_duplexer(50.0);
    std::vector<cd> x(64);
    x[0] = 1.0;
    const auto y = txl_signal(ComplexSignal(x, 30.72e6), ch);
    for (std::size_t i = 0; i < ch.taps.size(); ++i) EXPECT_EQ(y.samples[i], ch.taps[i]);
    EXPECT_THROW(txl_signal(ComplexSignal(x, 15.36e6), ch), InputError);
}

TEST(Duplexer, LeakagePower) {
    const auto g = lte10();
    auto x = upsample2(generate_tx(g, AllocationMask::full(g), 2, 1).signal);
    set_power_dbm(x.samples, 23.0);
    const auto y = txl_signal(x, canonical_duplexer(50.0));
    EXPECT_NEAR(power_dbm(y), -27.0, 1.0);
}

TEST(Imd2, ZeroAndRealAlpha) {
    std::mt19937_64 rng(1);
    const auto y = oracle::white(100, rng);
    for (const auto& v : imd2_generate(y, cd{})) EXPECT_EQ(v, cd{});
    for (const auto& v : imd2_generate(y, cd(0.3, 0.0))) EXPECT_EQ(v.imag(), 0.0);
}

TEST(Imd2, TwoToneSplit) {
    ReceiverConfig rc;
    rc.alpha2 = calibrate_alpha2({60.0, 0.0, 1, rc.alpha1});
    const auto p = two_tone_split(rc.alpha2, -7.0, 100, 300);
    EXPECT_NEAR(p.dc, -80.0 + 10.0 * std::log10(2.0), 0.01);
    EXPECT_NEAR(p.dc, -77.0, 0.05);
    // The beat at f2 - f1 carries -80 dBm counting both of its sidebands.
    EXPECT_NEAR(watts_to_dbm(dbm_to_watts(p.pos) + dbm_to_watts(p.neg)), -80.0, 0.01);
    EXPECT_NEAR(p.pos, p.neg, 1e-9);
    // A squarer puts twice the beat power at DC, so DC and beat sum to -75.2 dBm.
    EXPECT_NEAR(p.total, watts_to_dbm(dbm_to_watts(-77.0) + dbm_to_watts(-80.0)), 0.01);
}

TEST(TwoTone, SelfConsistent) {
    for (double iip2 : {50.0, 55.0, 60.0, 70.0}) {
        ReceiverConfig rc;
        rc.alpha2 = calibrate_alpha2({iip2, 0.5, 1, rc.alpha1});
        EXPECT_NEAR(two_tone_iip2(rc, -7.0, 1e6, 2e6), iip2, 0.1);
        EXPECT_NEAR(two_tone_iip2(rc, -15.0, -2e6, 0.5e6), iip2, 0.1);
    }
}

TEST(TwoTone, SecondOrderSlope) {
    ReceiverConfig rc;
    rc.alpha2 = calibrate_alpha2({60.0, 0.5, 1, rc.alpha1});
    const auto a = two_tone_split(rc.alpha2, -10.0, 10, 30);
    const auto b = two_tone_split(rc.alpha2, -7.0, 10, 30);
    EXPECT_NEAR(b.pos - a.pos, 6.0, 1e-9);
}

TEST(TwoTone, InputValidation) {
    ReceiverConfig rc;
    rc.alpha2 = 1e-3;
    EXPECT_THROW(two_tone_iip2(rc, -7.0, 1e6, 1e6), ConfigError);
    EXPECT_THROW(two_tone_iip2(rc, -7.0, 1e6, 9e6), ConfigError);
    EXPECT_THROW(two_tone_iip2(rc, -7.0, 1.0005e6, 2e6), ConfigError);
    rc.alpha2 = 0.0;
    EXPECT_TRUE(std::isinf(two_tone_iip2(rc, -7.0, 1e6, 2e6)));
}

TEST(Calibrate, ScalingAndLimits) {
    const cd a60 = calibrate_alpha2({60.0, 0.5, 1, {1.0, 0.0}});
    const cd a50 = calibrate_alpha2({50.0, 0.5, 1, {1.0, 0.0}});
    EXPECT_NEAR(std::abs(a50) / std::abs(a60), std::pow(10.0, 0.5), 1e-9);
    EXPECT_NEAR(a60.imag() / a60.real(), 0.5, 1e-12);
    const cd neg = calibrate_alpha2({60.0, 0.5, -1, {1.0, 0.0}});
    EXPECT_NEAR(std::abs(neg + a60), 0.0, 1e-15);
    EXPECT_EQ(calibrate_alpha2({std::numeric_limits<double>::infinity(), 0.5, 1, {1.0, 0.0}}), cd{});
    EXPECT_THROW(calibrate_alpha2({60.0, 0.5, 0, {1.0, 0.0}}), ConfigError);
}

TEST(Csf, DesignProperties) {
    const auto f = design_csf(30.72e6, 4.5e6);
    EXPECT_EQ(f.taps.size(), 129u);
    EXPECT_EQ(f.group_delay, 64.0);
    for (std::size_t i = 0; i < 129; ++i) EXPECT_NEAR(f.taps[i], f.taps[128 - i], 1e-12);
    // Impulse peak sits at the group delay.
    const auto peak = std::max_element(f.taps.begin(), f.taps.end()) - f.taps.begin();
    EXPECT_EQ(peak, 64);
    for (double v = 1.25 * 4.5e6 / 30.72e6; v <= 0.5; v += 1e-3)
        EXPECT_LT(20.0 * std::log10(std::abs(frequency_response(f, v))), -60.0);
    EXPECT_THROW(design_csf(30.72e6, 14e6), ConfigError);
    EXPECT_THROW(design_csf(30.72e6, 4.5e6, 128), ConfigError);
}

TEST(Csf, WhiteNoiseLoss) {
    const auto f = design_csf(30.72e6, 4.5e6);
    double e = 0.0;
    for (double v : f.taps) e += v * v;
    EXPECT_NEAR(-10.0 * std::log10(e), 10.0 * std::log10(30.72 / 9.0), 0.3);
}

TEST(ReceiverChain, LevelsAndNoImd2) {
    const auto g = lte10();
    auto x = upsample2(generate_tx(g, AllocationMask::full(g), 2, 1).signal);
    set_power_dbm(x.samples, 23.0);
    ReceiverConfig rc;
    const auto csf = design_csf(30.72e6, 4.5e6);
    const auto out = receiver_chain(x, rc, canonical_duplexer(50.0), csf, 42);
    EXPECT_NEAR(power_dbm(out.txl), -7.0, 1.0);
    // Wanted and noise are set to their levels before the DC notch.
    EXPECT_NEAR(power_dbm(out.wanted), -77.0, 0.05);
    EXPECT_NEAR(power_dbm(out.noise), -80.0, 0.05);
    EXPECT_NEAR(sinr_db(std::span<const cd>(out.wanted), std::span<const cd>(out.noise)), 3.0, 0.1);
    for (std::size_t i = 0; i < out.d.size(); ++i) {
        EXPECT_EQ(out.imd2[i], cd{});
        EXPECT_EQ(out.d.samples[i], out.wanted[i] + out.noise[i]);
    }
}

TEST(ReceiverChain, Deterministic) {
    const auto g = lte10();
    auto x = upsample2(generate_tx(g, AllocationMask::full(g), 1, 1).signal);
    set_power_dbm(x.samples, 23.0);
    ReceiverConfig rc;
    rc.alpha2 = calibrate_alpha2({50.0, 0.5, 1, rc.alpha1});
    const auto csf = design_csf(30.72e6, 4.5e6);
    const auto a = receiver_chain(x, rc, canonical_duplexer(), csf, 3);
    const auto b = receiver_chain(x, rc, canonical_duplexer(), csf, 3);
    EXPECT_EQ(a.d.samples, b.d.samples);
}
