#ifndef IM2CANCEL_METRICS_HPP
#define IM2CANCEL_METRICS_HPP

#include <Eigen/Dense>
#include <limits>

#include "dsp.hpp"

namespace im2cancel {

/// Moving-average NMSE in dB: 10 log10(MA_window(|truth - replica|^2) / mean|truth|^2).
/// The first window-1 outputs average over the samples seen so far.
template <typename T>
std::vector<double> nmse_db(std::span<const T> error, std::span<const T> truth, std::size_t window = 500) {
    if (error.size() != truth.size()) throw InputError("NMSE inputs differ in length");
    if (window == 0) throw ConfigError("NMSE window must be positive");
    const double ref = mean_power(truth);
    if (!(ref > 0.0)) throw InputError("NMSE reference has zero power");
    std::vector<double> out(error.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < error.size(); ++i) {
        acc += std::norm(error[i]);
        if (i >= window) acc -= std::norm(error[i - window]);
        const double cnt = static_cast<double>(std::min(i + 1, window));
        out[i] = 10.0 * std::log10(std::max(acc, 0.0) / cnt / ref);
    }
    return out;
}

template <typename T>
std::vector<double> nmse_db(const std::vector<T>& error, const std::vector<T>& truth, std::size_t window = 500) {
    return nmse_db(std::span<const T>(error), std::span<const T>(truth), window);
}

/// SINR in dB from wanted and impairment samples.
template <typename T>
double sinr_db(std::span<const T> wanted, std::span<const T> impairment) {
    if (wanted.size() != impairment.size()) throw InputError("SINR inputs differ in length");
    const double pi = mean_power(impairment);
    if (!(pi > 0.0)) throw InputError("impairment power is zero");
    return 10.0 * std::log10(mean_power(wanted) / pi);
}

/// SINR in dB from component powers in dBm.
inline double sinr_from_powers(double wanted_dbm, double noise_dbm, double imd2_dbm) {
    return wanted_dbm - watts_to_dbm(dbm_to_watts(noise_dbm) + dbm_to_watts(imd2_dbm));
}

/// Effective IIP2 seen through a residual IMD2 power, including the correction
/// factor for channel filtering and DC removal.
inline double iip2_after_cancellation(double p_txl_dbm, double residual_dbm, double cf_db = 13.4) {
    return 2.0 * p_txl_dbm - residual_dbm - cf_db;
}

struct LinkBudget {
    double tx_power_dbm = 23.0;
    double isolation_db = 50.0;
    double lna_gain_db = 20.0;
    double iip2_dbm = 60.0;
    double cf_db = 13.4;

    double txl_dbm() const { return tx_power_dbm - isolation_db + lna_gain_db; }
};

/// Expected IMD2 power at the LNA output after CSF and DC removal.
inline double budget_imd2_power(const LinkBudget& b) { return 2.0 * b.txl_dbm() - b.iip2_dbm - b.cf_db; }

/// Ratio of extreme singular values; +inf for a singular matrix.
template <typename Derived>
double condition_number(const Eigen::MatrixBase<Derived>& m) {
    if (m.rows() == 0 || m.rows() != m.cols()) throw InputError("condition number needs a square matrix");
    Eigen::JacobiSVD<typename Derived::PlainObject> svd(m);
    const auto& s = svd.singularValues();
    const double smax = s(0), smin = s(s.size() - 1);
    if (!(smin > smax * std::numeric_limits<double>::epsilon())) return std::numeric_limits<double>::infinity();
    return smax / smin;
}

/// Extreme-eigenvalue ratio of a Hermitian positive-definite matrix.
inline double hermitian_condition_number(const Eigen::MatrixXcd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double lo = ev(0), hi = ev(ev.size() - 1);
    if (!(lo > hi * std::numeric_limits<double>::epsilon())) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

} // namespace im2cancel

#endif
