#include <im2cancel/im2cancel.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace im2cancel;

namespace {

ScenarioConfig short_scenario() {
    ScenarioConfig c;
    c.slots = 2;
    c.seeds = 1;
    c.iip2_dbm = 50.0;
    c.imd2_level = Imd2Level::LinkBudget;
    return c;
}

} // namespace

TEST(Config, RoundTrip) {
    ScenarioConfig c;
    c.allocation = "9-11,29-46";
    c.algorithm = Algorithm::RIm2Rls;
    c.reg_kind = RegKind::SecondDerivative;
    c.sigma = 3e-7;
    c.rx_snr_db = 3.0;
    c.replica_notch = false;
    c.zf = ZfStrategy::Exact;
    c.imd2_level = Imd2Level::LinkBudget;
    c.iip2_dbm = std::numeric_limits<double>::infinity();
    const auto text = format_config(c);
    const auto back = parse_config_string(text);
    EXPECT_EQ(format_config(back), text);
    EXPECT_EQ(back.allocation, c.allocation);
    EXPECT_EQ(back.algorithm, Algorithm::RIm2Rls);
    EXPECT_EQ(back.sigma, 3e-7);
    EXPECT_EQ(*back.rx_snr_db, 3.0);
    EXPECT_TRUE(std::isinf(back.iip2_dbm));
}

TEST(Config, Defaults) {
    const auto c = parse_config_string("schema = 1\n");
    EXPECT_EQ(c.slots, 20);
    EXPECT_EQ(c.n_w, 15);
    EXPECT_EQ(c.lambda, 0.9999);
    EXPECT_EQ(c.nu, 100.0);
    EXPECT_EQ(c.notch_pole, 0.998);
    EXPECT_EQ(c.qpath_p0, 1e7);
    EXPECT_EQ(c.seeds, 10);
    EXPECT_EQ(c.duplexer, "canonical");
}

TEST(Config, Errors) {
    auto msg = [](const std::string& text) {
        try {
            parse_config_string(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(msg("slots = 3\n").find("schema"), std::string::npos);
    EXPECT_NE(msg("schema = 1\nbogus = 2\n").find("line 2"), std::string::npos);
    EXPECT_NE(msg("schema = 1\n# c\nslots = x\n").find("line 3"), std::string::npos);
    EXPECT_NE(msg("schema = 2\n").find("schema"), std::string::npos);
    EXPECT_NE(msg("schema = 1\nw_init = 0\n").find("zero"), std::string::npos);
    EXPECT_NE(msg("schema = 1\nallocation = 0-4\n").find("outside"), std::string::npos);
    EXPECT_NE(msg("schema = 1\nlambda = 1.5\n").find("lambda"), std::string::npos);
    EXPECT_NE(msg("schema = 1\nduplexer = 1:x\n").find("duplexer"), std::string::npos);
    EXPECT_NE(msg("schema = 1\nno equals sign\n").find("line 2"), std::string::npos);
}

TEST(Config, CustomDuplexerTaps) {
    const auto c = parse_config_string("schema = 1\nduplexer = 0.001:0.0005, -0.0002, 0:1e-4\n");
    const auto ch = c.duplexer_channel();
    ASSERT_EQ(ch.taps_native.size(), 3u);
    EXPECT_EQ(ch.taps_native[0], cd(0.001, 0.0005));
    EXPECT_EQ(ch.taps_native[1], cd(-0.0002, 0.0));
    EXPECT_EQ(ch.taps.size(), 6u);
}

TEST(Recording, RoundTripBitExact) {
    std::vector<cd> v{{1.5, -2.25}, {1e-300, -0.0}, {3.14159, 2.71828}};
    std::stringstream ss;
    write_recording(ss, ComplexSignal(v, 30.72e6));
    const auto r = read_recording(ss);
    EXPECT_EQ(r.sample_rate_hz, 30.72e6);
    ASSERT_EQ(r.samples.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.samples[i], v[i]);
}

TEST(Recording, MalformedReportsOffset) {
    auto offset_of = [](const std::string& bytes) -> long long {
        std::stringstream ss(bytes);
        try {
            read_recording(ss);
        } catch (const FormatError& e) {
            EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
            return e.offset;
        }
        return -1;
    };
    EXPECT_EQ(offset_of("not a recording\n"), 0);
    const std::string good = "im2cancel-raw v1; rate_hz=1000; format=cf64le; length=2\n";
    EXPECT_EQ(offset_of(good + std::string(20, '\0')), static_cast<long long>(good.size()) + 20);
    EXPECT_GT(offset_of("im2cancel-raw v1; rate_hz=1000; colour=blue; length=2\n"), 0);
    EXPECT_GT(offset_of("im2cancel-raw v1; rate_hz=abc; format=cf64le; length=2\n"), 0);
    EXPECT_EQ(offset_of("im2cancel-raw v1; rate_hz=1000; format=cf32le; length=2\n"), 32);
}

TEST(Scenario, Deterministic) {
    const auto c = short_scenario();
    std::ostringstream a, b;
    write_trace_csv(a, run_seed(c, 4));
    write_trace_csv(b, run_seed(c, 4));
    EXPECT_EQ(a.str(), b.str());
    EXPECT_FALSE(a.str().empty());
}

TEST(Scenario, TraceShape) {
    const auto c = short_scenario();
    const auto r = run_seed(c, 2);
    std::ostringstream o;
    write_trace_csv(o, r);
    std::istringstream in(o.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("n,e_i,e_q,nmse_db,w0_abs", 0), 0u);
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, static_cast<std::size_t>(c.slots) * 15360u);
}

TEST(Scenario, SummaryConsistency) {
    const auto c = short_scenario();
    const auto s = run_seed(c, 3).summary;
    EXPECT_NEAR(iip2_after_cancellation(s.p_txl_dbm, s.residual_dbm, c.cf_db), s.iip2_after_dbm, 1e-9);
    EXPECT_NEAR(s.desense_db, s.sinr_no_imd2_db - s.sinr_after_db, 1e-12);
    EXPECT_GT(s.sinr_after_db, s.sinr_before_db);
}

TEST(Scenario, NoImd2) {
    auto c = short_scenario();
    c.iip2_dbm = std::numeric_limits<double>::infinity();
    c.imd2_level = Imd2Level::TwoTone;
    const auto s = run_seed(c, 1).summary;
    EXPECT_NEAR(s.sinr_before_db, s.sinr_no_imd2_db, 1e-12);
    // The canceller still fits a little of the wanted signal and noise.
    EXPECT_NEAR(s.sinr_after_db, s.sinr_before_db, 0.05);
    EXPECT_NEAR(s.sinr_before_db, 3.0, 0.2);
    EXPECT_TRUE(std::isnan(s.nmse_final_db));
}

TEST(Scenario, LinkBudgetLevel) {
    auto c = short_scenario();
    c.iip2_dbm = 60.0;
    const auto l = simulate(c, 1);
    const std::size_t from = l.slot_samples;
    EXPECT_NEAR(power_dbm(std::span<const cd>(l.fe.imd2.data() + from, l.fe.imd2.size() - from)), -87.4, 1e-9);
}

TEST(Scenario, EmptyAllocationRejected) {
    auto c = short_scenario();
    c.allocation = "none";
    EXPECT_THROW(simulate(c, 1), InputError);
}

TEST(Scenario, SeedsRunInOrder) {
    auto c = short_scenario();
    c.slots = 1;
    c.seeds = 3;
    c.seed = 7;
    std::vector<std::uint64_t> seen;
    const auto sums = run_scenario(c, [&](const RunResult& r) { seen.push_back(r.summary.seed); });
    EXPECT_EQ(seen, (std::vector<std::uint64_t>{7, 8, 9}));
    ASSERT_EQ(sums.size(), 3u);
    EXPECT_EQ(sums[1].sinr_after_db, run_seed(c, 8).summary.sinr_after_db);
}

TEST(Replay, ReproducesSimulation) {
    const auto c = short_scenario();
    const auto link = simulate(c, 5);
    const auto sim = run_seed(c, 5);
    std::stringstream tx, rx;
    write_recording(tx, link.x_ref);
    write_recording(rx, link.fe.d);
    const auto r = replay(read_recording(tx), read_recording(rx), c);
    EXPECT_TRUE(r.warnings.empty());
    ASSERT_EQ(r.cancel.e_i.size(), sim.cancel.e_i.size());
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < r.cancel.e_i.size(); ++i) {
        scale = std::max(scale, std::abs(sim.cancel.replica_i[i]));
        diff = std::max(diff, std::abs(r.cancel.replica_i[i] - sim.cancel.replica_i[i]));
        diff = std::max(diff, std::abs(r.cancel.replica_q[i] - sim.cancel.replica_q[i]));
    }
    EXPECT_LE(diff, 1e-9 * scale);
    EXPECT_LE((r.cancel.w_final - sim.cancel.w_final).norm(), 1e-9 * sim.cancel.w_final.norm());
}

TEST(Replay, SignFlipWithDetection) {
    auto c = short_scenario();
    c.sign_detection = true;
    auto flipped = c;
    flipped.imd2_sign = -1;
    const auto a = simulate(c, 6), b = simulate(flipped, 6);
    const auto ra = replay(a.x_ref, a.fe.d, c);
    const auto rb = replay(b.x_ref, b.fe.d, c);
    EXPECT_EQ(ra.cancel.sign, 1);
    EXPECT_EQ(rb.cancel.sign, -1);
    EXPECT_NEAR(ra.after_dbm, rb.after_dbm, 0.5);
    EXPECT_LT(rb.after_dbm, rb.before_dbm - 1.0);
}

TEST(Replay, TruncatesWithWarning) {
    const auto c = short_scenario();
    const auto link = simulate(c, 1);
    ComplexSignal rx = link.fe.d;
    rx.samples.resize(rx.size() - 100);
    const auto r = replay(link.x_ref, rx, c);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("truncated"), std::string::npos);
    EXPECT_EQ(r.cancel.e_i.size(), rx.size());
    ComplexSignal other(rx.samples, 15.36e6);
    EXPECT_THROW(replay(link.x_ref, other, c), InputError);
}

TEST(Replay, AlignOffset) {
    auto c = short_scenario();
    const auto link = simulate(c, 2);
    ComplexSignal rx = link.fe.d;
    rx.samples.insert(rx.samples.begin(), 37, cd{});
    c.align_offset = 37;
    const auto r = replay(link.x_ref, rx, c);
    const auto base = replay(link.x_ref, link.fe.d, short_scenario());
    EXPECT_NEAR(r.after_dbm, base.after_dbm, 1e-9);
}

TEST(Sweep, SinglePointEqualsRun) {
    auto c = short_scenario();
    c.tx_power_dbm = 21.0;
    const auto s = run_scenario(c);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].tx_power_dbm, 21.0);
    EXPECT_EQ(s[0].sinr_after_db, run_seed(c, c.seed).summary.sinr_after_db);
}
