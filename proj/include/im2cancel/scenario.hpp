#ifndef IM2CANCEL_SCENARIO_HPP
#define IM2CANCEL_SCENARIO_HPP

// End-to-end runs: simulate a link, cancel, measure, and write traces.

#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <thread>

#include "config.hpp"
#include "metrics.hpp"
#include "recording.hpp"

namespace im2cancel {

/// One simulated link realization.
struct SimulatedLink {
    /// Digital Tx reference at OSF 2, unit mean power.
    ComplexSignal x_ref;
    FrontendOutput fe;
    cd alpha2;
    RealFir csf;
    /// Nominal leakage power at the mixer input: tx - isolation + lna.
    double p_txl_dbm = 0.0;
    std::size_t slot_samples = 0;
};

inline RealFir scenario_csf(const ScenarioConfig& c, double fs) {
    return design_csf(fs, c.csf_passband_hz, static_cast<std::size_t>(c.csf_taps));
}

inline ReceiverConfig receiver_config(const ScenarioConfig& c) {
    ReceiverConfig r;
    r.tx_power_dbm = c.tx_power_dbm;
    r.lna_gain_db = c.lna_gain_db;
    r.rx_power_dbm = c.rx_power_dbm;
    r.thermal_noise_dbm = c.thermal_noise_dbm;
    r.noise_figure_db = c.noise_figure_db;
    r.rx_snr_db = c.rx_snr_db;
    r.include_wanted = c.include_wanted;
    r.include_noise = c.include_noise;
    r.dc_removal = c.dc_removal;
    r.notch_pole = c.notch_pole;
    r.csf_passband_hz = c.csf_passband_hz;
    r.alpha2 = calibrate_alpha2({c.iip2_dbm, c.qpath_ratio, c.imd2_sign, r.alpha1});
    return r;
}

inline LinkBudget link_budget(const ScenarioConfig& c) {
    return {c.tx_power_dbm, c.isolation_db, c.lna_gain_db, c.iip2_dbm, c.cf_db};
}

/// Scales the IMD2 component (and alpha2) so that its DC-free power over
/// `from..end` equals `target_dbm`; rebuilds d.
inline void rescale_imd2(SimulatedLink& l, double target_dbm, std::size_t from, bool already_dc_free,
                         double notch_pole) {
    const auto ac = already_dc_free ? l.fe.imd2 : dc_notch_apply(l.fe.imd2, notch_pole);
    const std::span<const cd> tail(ac.data() + from, ac.size() - from);
    const double p = power_dbm(tail);
    if (!std::isfinite(p)) return;
    const double g = std::pow(10.0, (target_dbm - p) / 20.0);
    l.alpha2 *= g;
    for (auto& v : l.fe.imd2) v *= g;
    for (std::size_t i = 0; i < l.fe.imd2.size(); ++i)
        l.fe.d.samples[i] = l.fe.wanted[i] + l.fe.noise[i] + l.fe.imd2[i];
}

inline SimulatedLink simulate(const ScenarioConfig& c, std::uint64_t seed) {
    c.validate();
    const auto g = c.grid();
    const auto frame = generate_tx(g, c.mask(), c.slots, seed, 0.0);
    SimulatedLink l;
    l.x_ref = upsample2(frame.signal);
    const double p = mean_power(l.x_ref.samples);
    if (!(p > 0.0)) throw InputError("allocation is empty: nothing is transmitted");
    for (auto& v : l.x_ref.samples) v /= std::sqrt(p);
    l.slot_samples = 2 * static_cast<std::size_t>(g.slot_length());

    ComplexSignal x_pa = l.x_ref;
    set_power_dbm(x_pa.samples, c.tx_power_dbm);
    const auto ch = c.duplexer_channel();
    l.csf = scenario_csf(c, l.x_ref.sample_rate_hz);
    const auto rc = receiver_config(c);
    l.alpha2 = rc.alpha2;
    l.fe = receiver_chain(x_pa, rc, ch, l.csf, seed);
    l.p_txl_dbm = link_budget(c).txl_dbm();
    if (c.imd2_level == Imd2Level::LinkBudget)
        rescale_imd2(l, budget_imd2_power(link_budget(c)), std::min(l.slot_samples, l.x_ref.size() / 2), c.dc_removal,
                     c.notch_pole);
    return l;
}

struct CondSample {
    long long n = 0;
    double cond = 0.0;
    /// NaN unless the unregularized matrix is tracked.
    double cond_unregularized = std::numeric_limits<double>::quiet_NaN();
};

/// Per-sample canceller output.
struct CancelOutput {
    std::vector<double> replica_i, replica_q, e_i, e_q;
    /// |w_i| per logged row, row-major, n_w per row.
    std::vector<double> w_mag;
    std::vector<long long> w_rows;
    std::vector<CondSample> cond;
    Eigen::VectorXcd w_final;
    double eps_hat = 0.0;
    int sign = 1;
    bool diverged = false;
    std::string message;
    std::size_t n_w = 0;
};

inline Im2RlsParams canceller_params(const ScenarioConfig& c) {
    Im2RlsParams p;
    p.n_w = c.n_w;
    p.lambda = c.lambda;
    p.nu = c.nu;
    p.w_init.assign(static_cast<std::size_t>(c.n_w), cd{});
    p.w_init[0] = c.w_init;
    p.notch = c.notch_in_replica();
    p.notch_pole = c.notch_pole;
    p.zf = c.zf;
    p.track_unregularized = c.track_unregularized;
    return p;
}

/// Runs the I-path canceller and the Q-path estimator over a recorded pair.
/// Divergence stops the run and is reported, not thrown.
inline CancelOutput run_canceller(const std::vector<cd>& x_ref, const std::vector<cd>& d, const RealFir& csf,
                                  const ScenarioConfig& c) {
    if (x_ref.size() != d.size()) throw InputError("reference and received lengths differ");
    const std::size_t n = d.size();
    CancelOutput o;
    o.n_w = static_cast<std::size_t>(c.n_w);
    o.replica_i.assign(n, 0.0);
    o.replica_q.assign(n, 0.0);
    o.e_i.resize(n);
    o.e_q.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        o.e_i[i] = d[i].real();
        o.e_q[i] = d[i].imag();
    }
    if (c.sign_detection) {
        std::vector<double> di(n);
        for (std::size_t i = 0; i < n; ++i) di[i] = d[i].real();
        o.sign = detect_sign(di, x_ref, static_cast<std::size_t>(std::lround(csf.group_delay)),
                             static_cast<std::size_t>(c.n_w));
    }
    const double s = static_cast<double>(o.sign);

    Im2RlsState st(canceller_params(c), csf);
    std::optional<RegMatrixSpec> reg;
    if (c.algorithm == Algorithm::RIm2Rls) reg = make_reg(c.reg_kind, c.n_w, c.sigma);
    QPathRls q(c.qpath_lambda, c.qpath_p0);
    // The Q-path sees the receive samples at unit RMS, as after an ADC.
    const double pd = mean_power(d);
    const double qs = pd > 0.0 ? 1.0 / std::sqrt(pd) : 1.0;
    const auto dec = static_cast<std::size_t>(c.trace_decimation);
    try {
        for (std::size_t i = 0; i < n; ++i) {
            const double di = d[i].real();
            const auto out = reg ? st.step(x_ref[i], s * di, *reg) : st.step(x_ref[i], s * di);
            o.replica_i[i] = s * out.replica;
            o.e_i[i] = di - o.replica_i[i];
            if (c.qpath) {
                const auto qo = q.step(qs * o.replica_i[i], qs * d[i].imag());
                o.replica_q[i] = qo.replica / qs;
                o.e_q[i] = d[i].imag() - o.replica_q[i];
            }
            if (i % dec == 0) {
                o.w_rows.push_back(static_cast<long long>(i));
                for (int k = 0; k < c.n_w; ++k) o.w_mag.push_back(std::abs(st.weights()(k)));
            }
            if ((i + 1) % static_cast<std::size_t>(c.cond_interval) == 0) {
                CondSample cs;
                cs.n = static_cast<long long>(i);
                cs.cond = hermitian_condition_number(st.P());
                if (st.unregularized_R()) cs.cond_unregularized = hermitian_condition_number(*st.unregularized_R());
                o.cond.push_back(cs);
            }
        }
    } catch (const DivergenceError& e) {
        o.diverged = true;
        o.message = e.what();
    }
    o.w_final = st.weights();
    o.eps_hat = q.ratio();
    return o;
}

struct RunSummary {
    std::uint64_t seed = 0;
    double tx_power_dbm = 0.0;
    bool diverged = false;
    std::string message;
    double p_txl_dbm = 0.0;
    double imd2_before_dbm = 0.0;
    double residual_dbm = 0.0;
    double sinr_no_imd2_db = 0.0;
    double sinr_before_db = 0.0;
    double sinr_after_db = 0.0;
    double desense_db = 0.0;
    double iip2_before_dbm = 0.0;
    double iip2_after_dbm = 0.0;
    double nmse_final_db = 0.0;
    double eps_hat = 0.0;
    int sign = 1;
    double cond_final = 0.0;
    double cond_unregularized_final = std::numeric_limits<double>::quiet_NaN();
    std::complex<double> alpha2;
};

struct RunResult {
    RunSummary summary;
    CancelOutput cancel;
    std::vector<double> nmse_db;
};

/// Averages over the last min(4 slots, n/2) samples.
inline std::size_t measurement_start(std::size_t n, std::size_t slot_samples) {
    const std::size_t w = std::min(4 * slot_samples, n / 2);
    return n - w;
}

inline RunResult run_seed(const ScenarioConfig& c, std::uint64_t seed) {
    const auto link = simulate(c, seed);
    RunResult r;
    r.cancel = run_canceller(link.x_ref.samples, link.fe.d.samples, link.csf, c);
    const std::size_t n = link.x_ref.size();

    std::vector<cd> truth = link.fe.imd2, residual(n), wanted = link.fe.wanted, noise = link.fe.noise;
    for (std::size_t i = 0; i < n; ++i) residual[i] = truth[i] - cd(r.cancel.replica_i[i], r.cancel.replica_q[i]);
    if (!c.dc_removal) {
        truth = dc_notch_apply(truth, c.notch_pole);
        residual = dc_notch_apply(residual, c.notch_pole);
        wanted = dc_notch_apply(wanted, c.notch_pole);
        noise = dc_notch_apply(noise, c.notch_pole);
    }
    const bool has_imd2 = mean_power(truth) > 0.0;
    if (has_imd2) r.nmse_db = nmse_db(residual, truth, static_cast<std::size_t>(c.nmse_window));
    else r.nmse_db.assign(n, std::numeric_limits<double>::quiet_NaN());
    const std::size_t m0 = measurement_start(n, link.slot_samples);
    auto tail = [m0](const std::vector<cd>& v) { return std::span<const cd>(v.data() + m0, v.size() - m0); };
    auto& s = r.summary;
    s.seed = seed;
    s.tx_power_dbm = c.tx_power_dbm;
    s.diverged = r.cancel.diverged;
    s.message = r.cancel.message;
    s.alpha2 = link.alpha2;
    s.p_txl_dbm = link.p_txl_dbm;
    s.imd2_before_dbm = power_dbm(tail(truth));
    s.residual_dbm = power_dbm(tail(residual));
    const double pw = mean_power(tail(wanted)), pn = mean_power(tail(noise));
    s.sinr_no_imd2_db = 10.0 * std::log10(pw / pn);
    s.sinr_before_db = 10.0 * std::log10(pw / (pn + mean_power(tail(truth))));
    s.sinr_after_db = 10.0 * std::log10(pw / (pn + mean_power(tail(residual))));
    s.desense_db = s.sinr_no_imd2_db - s.sinr_after_db;
    s.iip2_before_dbm = iip2_after_cancellation(s.p_txl_dbm, s.imd2_before_dbm, c.cf_db);
    s.iip2_after_dbm = iip2_after_cancellation(s.p_txl_dbm, s.residual_dbm, c.cf_db);
    s.nmse_final_db = std::numeric_limits<double>::quiet_NaN();
    if (has_imd2) {
        const std::size_t f0 = n - std::min(link.slot_samples, n);
        double acc = 0.0;
        for (std::size_t i = f0; i < n; ++i) acc += std::norm(residual[i]);
        s.nmse_final_db = 10.0 * std::log10(acc / static_cast<double>(n - f0) / mean_power(truth));
    }
    s.eps_hat = r.cancel.eps_hat;
    s.sign = r.cancel.sign;
    if (!r.cancel.cond.empty()) {
        s.cond_final = r.cancel.cond.back().cond;
        s.cond_unregularized_final = r.cancel.cond.back().cond_unregularized;
    }
    return r;
}

/// Runs seeds base..base+count-1, a few at a time, handing each result to `sink`
/// in seed order. Returns the summaries.
template <typename Sink>
std::vector<RunSummary> run_scenario(const ScenarioConfig& c, Sink&& sink) {
    c.validate();
    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    std::vector<RunSummary> out;
    for (int first = 0; first < c.seeds; first += static_cast<int>(workers)) {
        std::vector<std::future<RunResult>> jobs;
        for (int k = first; k < std::min(c.seeds, first + static_cast<int>(workers)); ++k) {
            const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(k);
            jobs.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                      [&c, seed] { return run_seed(c, seed); }));
        }
        for (auto& j : jobs) {
            auto r = j.get();
            out.push_back(r.summary);
            sink(r);
        }
    }
    return out;
}

inline std::vector<RunSummary> run_scenario(const ScenarioConfig& c) {
    return run_scenario(c, [](const RunResult&) {});
}

/// Linear average of per-run NMSE traces, in dB.
inline std::vector<double> ensemble_nmse_db(const std::vector<std::vector<double>>& traces) {
    if (traces.empty()) return {};
    std::size_t n = traces.front().size();
    for (const auto& t : traces) n = std::min(n, t.size());
    std::vector<double> out(n, 0.0);
    for (const auto& t : traces)
        for (std::size_t i = 0; i < n; ++i) out[i] += std::pow(10.0, t[i] / 10.0);
    for (auto& v : out) v = 10.0 * std::log10(v / static_cast<double>(traces.size()));
    return out;
}

inline void write_trace_csv(std::ostream& o, const RunResult& r) {
    const auto& c = r.cancel;
    o << "n,e_i,e_q,nmse_db";
    for (std::size_t k = 0; k < c.n_w; ++k) o << ",w" << k << "_abs";
    o << ",cond\n";
    o << std::setprecision(10);
    std::size_t ci = 0;
    for (std::size_t row = 0; row < c.w_rows.size(); ++row) {
        const auto i = static_cast<std::size_t>(c.w_rows[row]);
        o << i << ',' << c.e_i[i] << ',' << c.e_q[i] << ',' << r.nmse_db[i];
        for (std::size_t k = 0; k < c.n_w; ++k) o << ',' << c.w_mag[row * c.n_w + k];
        o << ',';
        while (ci < c.cond.size() && c.cond[ci].n < static_cast<long long>(i)) ++ci;
        if (ci < c.cond.size() && c.cond[ci].n == static_cast<long long>(i)) o << c.cond[ci].cond;
        o << '\n';
    }
}

inline const char* summary_header() {
    return "seed,tx_power_dbm,diverged,alpha2_re,alpha2_im,p_txl_dbm,imd2_before_dbm,residual_dbm,sinr_no_imd2_db,"
           "sinr_before_db,sinr_after_db,desense_db,iip2_before_dbm,iip2_after_dbm,nmse_final_db,eps_hat,sign,"
           "cond_final,cond_unregularized_final";
}

inline void write_summary_row(std::ostream& o, const RunSummary& s) {
    o << std::setprecision(10) << s.seed << ',' << s.tx_power_dbm << ',' << (s.diverged ? 1 : 0) << ','
      << s.alpha2.real() << ',' << s.alpha2.imag() << ',' << s.p_txl_dbm << ',' << s.imd2_before_dbm << ','
      << s.residual_dbm << ',' << s.sinr_no_imd2_db << ',' << s.sinr_before_db << ',' << s.sinr_after_db << ','
      << s.desense_db << ',' << s.iip2_before_dbm << ',' << s.iip2_after_dbm << ',' << s.nmse_final_db << ','
      << s.eps_hat << ',' << s.sign << ',' << s.cond_final << ',' << s.cond_unregularized_final << '\n';
}

struct ReplayResult {
    CancelOutput cancel;
    double before_dbm = 0.0;
    double after_dbm = 0.0;
    std::vector<std::string> warnings;
};

/// Cancels a recorded Tx/Rx pair. rx[n + align_offset] is paired with tx[n];
/// unequal lengths are truncated with a warning.
inline ReplayResult replay(const ComplexSignal& tx, const ComplexSignal& rx, const ScenarioConfig& c) {
    if (std::abs(tx.sample_rate_hz - rx.sample_rate_hz) > 1e-9 * tx.sample_rate_hz)
        throw InputError("Tx and Rx sample rates differ");
    ReplayResult r;
    const long long off = c.align_offset;
    const std::size_t tx0 = off < 0 ? static_cast<std::size_t>(-off) : 0;
    const std::size_t rx0 = off > 0 ? static_cast<std::size_t>(off) : 0;
    if (tx0 >= tx.size() || rx0 >= rx.size()) throw InputError("alignment offset exceeds the recording length");
    const std::size_t ntx = tx.size() - tx0, nrx = rx.size() - rx0;
    const std::size_t n = std::min(ntx, nrx);
    if (ntx != nrx)
        r.warnings.push_back("length mismatch: truncated to " + std::to_string(n) + " samples");
    std::vector<cd> x(tx.samples.begin() + static_cast<std::ptrdiff_t>(tx0),
                      tx.samples.begin() + static_cast<std::ptrdiff_t>(tx0 + n));
    std::vector<cd> d(rx.samples.begin() + static_cast<std::ptrdiff_t>(rx0),
                      rx.samples.begin() + static_cast<std::ptrdiff_t>(rx0 + n));
    const double p = mean_power(x);
    if (!(p > 0.0)) throw InputError("Tx recording is all zeros");
    for (auto& v : x) v /= std::sqrt(p);
    const auto csf = scenario_csf(c, tx.sample_rate_hz);
    r.cancel = run_canceller(x, d, csf, c);
    const std::size_t slot = static_cast<std::size_t>(std::llround(tx.sample_rate_hz * 0.5e-3));
    const std::size_t m0 = measurement_start(n, slot);
    std::vector<cd> e(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = {r.cancel.e_i[i], r.cancel.e_q[i]};
    r.before_dbm = power_dbm(std::span<const cd>(d.data() + m0, n - m0));
    r.after_dbm = power_dbm(std::span<const cd>(e.data() + m0, n - m0));
    return r;
}

} // namespace im2cancel

#endif
