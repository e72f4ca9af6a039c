#ifndef IM2CANCEL_CANCELLER_HPP
#define IM2CANCEL_CANCELLER_HPP

// Adaptive IMD2 cancellation: the IM2RLS recursion, its regularized variant,
// the one-tap Q-path estimator and IMD2 sign detection.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "dsp.hpp"

namespace im2cancel {

enum class ZfStrategy { Exact, ScalarApprox, DelayApprox };
enum class RegKind { Identity, FirstDerivative, SecondDerivative };

/// Nonzero entries of one row of L.
using SparseRow = std::vector<std::pair<int, double>>;

/// Regularization sigma * L^T L, split into rank-one dyads sigma * r^T r,
/// one per row r of L.
struct RegMatrixSpec {
    RegKind kind = RegKind::Identity;
    double sigma = 0.0;
    Eigen::MatrixXd L;
    std::vector<SparseRow> rows;
};

inline RegMatrixSpec make_reg(RegKind kind, int n, double sigma) {
    if (n < 1) throw ConfigError("regularization size must be at least 1");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be finite and non-negative");
    if (kind != RegKind::Identity && n < 2) throw ConfigError("derivative regularizers need at least 2 taps");
    RegMatrixSpec r;
    r.kind = kind;
    r.sigma = sigma;
    switch (kind) {
    case RegKind::Identity:
        r.L = Eigen::MatrixXd::Identity(n, n);
        break;
    case RegKind::FirstDerivative:
        r.L = Eigen::MatrixXd::Zero(n - 1, n);
        for (int i = 0; i < n - 1; ++i) {
            r.L(i, i) = 1.0;
            r.L(i, i + 1) = -1.0;
        }
        break;
    case RegKind::SecondDerivative:
        r.L = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            r.L(i, i) = -2.0;
            if (i > 0) r.L(i, i - 1) = 1.0;
            if (i + 1 < n) r.L(i, i + 1) = 1.0;
        }
        break;
    }
    for (int i = 0; i < r.L.rows(); ++i) {
        SparseRow row;
        for (int j = 0; j < n; ++j)
            if (r.L(i, j) != 0.0) row.emplace_back(j, r.L(i, j));
        r.rows.push_back(std::move(row));
    }
    return r;
}

/// Omega = (lambda P^-1 + sigma L^T L)^-1, built from P by one
/// Sherman-Morrison step per row of L.
inline void omega_dyad_update(Eigen::MatrixXcd& omega, const RegMatrixSpec& reg, Eigen::VectorXcd& u,
                              Eigen::RowVectorXcd& v) {
    const double inv_sigma = 1.0 / reg.sigma;
    for (const auto& row : reg.rows) {
        u.setZero();
        v.setZero();
        for (const auto& [j, c] : row) {
            u.noalias() += c * omega.col(j);
            v.noalias() += c * omega.row(j);
        }
        cd den = inv_sigma;
        for (const auto& [j, c] : row) den += c * u(j);
        omega.noalias() -= (u / den) * v;
    }
}

inline Eigen::MatrixXcd omega_dyad_update(const Eigen::MatrixXcd& p, double lambda, const RegMatrixSpec& reg) {
    Eigen::MatrixXcd omega = p / lambda;
    if (reg.sigma == 0.0) return omega;
    Eigen::VectorXcd u(p.rows());
    Eigen::RowVectorXcd v(p.rows());
    omega_dyad_update(omega, reg, u, v);
    return omega;
}

struct Im2RlsParams {
    int n_w = 15;
    double lambda = 0.9999;
    /// P[-1] = nu * I.
    double nu = 100.0;
    /// Empty means [1e-6, 0, ..., 0].
    std::vector<cd> w_init;
    /// Replica includes the receiver DC notch.
    bool notch = false;
    double notch_pole = 0.998;
    ZfStrategy zf = ZfStrategy::DelayApprox;
    /// Keep sum lambda^(n-i) z_f z_f^H + lambda^(n+1)/nu I alongside P.
    bool track_unregularized = false;
    double divergence_limit = 1e6;
};

struct StepOutput {
    double replica = 0.0;
    double error = 0.0;
};

class Im2RlsState {
public:
    Im2RlsState(const Im2RlsParams& p, const RealFir& csf)
        : prm_(p), csf_(csf), x_line_(static_cast<std::size_t>(std::max(p.n_w, 1))), replica_csf_(csf),
          notch_(p.notch_pole), yp_csf_(csf), x_csf_(csf), xf_line_(static_cast<std::size_t>(std::max(p.n_w, 1))) {
        if (p.n_w < 1) throw ConfigError("filter length must be at least 1");
        if (!(p.lambda > 0.0 && p.lambda <= 1.0)) throw ConfigError("forgetting factor must lie in (0, 1]");
        if (!(p.nu > 0.0) || !std::isfinite(p.nu)) throw ConfigError("nu must be positive and finite");
        if (csf.taps.empty()) throw ConfigError("CSF needs at least one tap");
        const int n = p.n_w;
        w_ = Eigen::VectorXcd::Zero(n);
        if (p.w_init.empty()) {
            w_(0) = 1e-6;
        } else {
            if (static_cast<int>(p.w_init.size()) != n) throw ConfigError("w_init length must equal the filter length");
            for (int i = 0; i < n; ++i) w_(i) = p.w_init[static_cast<std::size_t>(i)];
        }
        check_finite(std::span<const cd>(w_.data(), static_cast<std::size_t>(n)), "w_init");
        if (w_.cwiseAbs().maxCoeff() == 0.0)
            throw ConfigError("zero initialization stalls: zero-gain vector z is identically zero");
        P_ = p.nu * Eigen::MatrixXcd::Identity(n, n);
        zf_ = Eigen::VectorXcd::Zero(n);
        z_ = Eigen::VectorXcd::Zero(n);
        g_ = Eigen::VectorXcd::Zero(n);
        k_ = Eigen::VectorXcd::Zero(n);
        u_ = Eigen::VectorXcd::Zero(n);
        v_ = Eigen::RowVectorXcd::Zero(n);
        if (p.zf == ZfStrategy::Exact) exact_.assign(static_cast<std::size_t>(n), FirStream<double, cd>(csf));
        if (p.zf == ZfStrategy::DelayApprox) {
            if (csf.group_delay < 0.0 || csf.group_delay != std::floor(csf.group_delay))
                throw ConfigError("delay approximation needs an integer CSF group delay");
            delay_ = static_cast<std::size_t>(csf.group_delay);
            ring_.assign(delay_ + 1, Eigen::VectorXcd::Zero(n));
        }
        if (p.track_unregularized) R_unreg_ = Eigen::MatrixXcd::Identity(n, n) / p.nu;
    }

    /// One IM2RLS update. Returns the a-priori replica and error.
    StepOutput step(cd x, double d) {
        const auto out = prepare(x, d);
        update_plain(out.error);
        finish();
        return out;
    }

    /// One R-IM2RLS update; sigma == 0 gives exactly the IM2RLS update.
    StepOutput step(cd x, double d, const RegMatrixSpec& reg) {
        if (reg.L.cols() != prm_.n_w) throw ConfigError("regularization size does not match the filter length");
        const auto out = prepare(x, d);
        if (reg.sigma == 0.0) update_plain(out.error);
        else update_regularized(out.error, reg);
        finish();
        return out;
    }

    const Eigen::VectorXcd& weights() const { return w_; }
    const Eigen::MatrixXcd& P() const { return P_; }
    /// Filtered gain vector used by the most recent update.
    const Eigen::VectorXcd& zf() const { return zf_; }
    const std::optional<Eigen::MatrixXcd>& unregularized_R() const { return R_unreg_; }
    const Im2RlsParams& params() const { return prm_; }
    long long samples() const { return n_; }

private:
    StepOutput prepare(cd x, double d) {
        if (!std::isfinite(x.real()) || !std::isfinite(x.imag()) || !std::isfinite(d))
            throw InputError("non-finite canceller input at sample " + std::to_string(n_));
        const int n = prm_.n_w;
        x_line_.push(x);
        const auto xv = x_line_.view();
        cd yp{};
        for (int i = 0; i < n; ++i) yp += xv[static_cast<std::size_t>(i)] * w_(i);
        double yhat = replica_csf_.push(std::norm(yp));
        if (prm_.notch) yhat = notch_.step(yhat);
        const double e = d - yhat;

        switch (prm_.zf) {
        case ZfStrategy::Exact:
            for (int i = 0; i < n; ++i)
                zf_(i) = exact_[static_cast<std::size_t>(i)].push(yp * std::conj(xv[static_cast<std::size_t>(i)]));
            break;
        case ZfStrategy::ScalarApprox: {
            const cd ypf = yp_csf_.push(yp);
            xf_line_.push(x_csf_.push(x));
            for (int i = 0; i < n; ++i) zf_(i) = ypf * std::conj(xf_line_[static_cast<std::size_t>(i)]);
            break;
        }
        case ZfStrategy::DelayApprox: {
            auto& slot = ring_[static_cast<std::size_t>(n_) % ring_.size()];
            for (int i = 0; i < n; ++i) slot(i) = yp * std::conj(xv[static_cast<std::size_t>(i)]);
            zf_ = ring_[static_cast<std::size_t>(n_ + 1) % ring_.size()];
            break;
        }
        }
        if (R_unreg_) {
            *R_unreg_ *= prm_.lambda;
            R_unreg_->noalias() += zf_ * zf_.adjoint();
        }
        return {yhat, e};
    }

    void update_plain(double e) {
        g_.noalias() = P_ * zf_;
        const double den = prm_.lambda + zf_.dot(g_).real();
        k_ = g_ / den;
        P_.noalias() -= k_ * g_.adjoint();
        P_ /= prm_.lambda;
        w_ += e * k_;
    }

    void update_regularized(double e, const RegMatrixSpec& reg) {
        P_ /= prm_.lambda;  // Omega, updated in place
        omega_dyad_update(P_, reg, u_, v_);
        g_.noalias() = P_ * zf_;
        const cd den = 1.0 + zf_.dot(g_);
        k_ = g_ / den;
        // s = Sigma L w = sigma Omega L^T L w, evaluated through the sparse rows.
        u_.setZero();
        for (const auto& row : reg.rows) {
            cd t{};
            for (const auto& [j, c] : row) t += c * w_(j);
            for (const auto& [j, c] : row) u_(j) += c * t;
        }
        z_.noalias() = reg.sigma * (P_ * u_);
        const cd zs = zf_.dot(z_);
        w_ += -z_ + k_ * zs + e * k_;
        P_.noalias() -= k_ * g_.adjoint();
    }

    void finish() {
        P_ = 0.5 * (P_ + P_.adjoint()).eval();
        ++n_;
        const double wmax = w_.cwiseAbs().maxCoeff();
        if (!std::isfinite(wmax) || wmax > prm_.divergence_limit || !P_.allFinite())
            throw DivergenceError("adaptive filter diverged", n_ - 1);
    }

    Im2RlsParams prm_;
    RealFir csf_;
    DelayLine<cd> x_line_;
    FirStream<double, double> replica_csf_;
    DcNotch<double> notch_;
    FirStream<double, cd> yp_csf_;
    FirStream<double, cd> x_csf_;
    DelayLine<cd> xf_line_;
    std::vector<FirStream<double, cd>> exact_;
    std::vector<Eigen::VectorXcd> ring_;
    std::size_t delay_ = 0;

    Eigen::MatrixXcd P_;
    Eigen::VectorXcd w_, zf_, z_, g_, k_, u_;
    Eigen::RowVectorXcd v_;
    std::optional<Eigen::MatrixXcd> R_unreg_;
    long long n_ = 0;
};

inline Im2RlsState im2rls_init(const Im2RlsParams& p, const RealFir& csf) { return Im2RlsState(p, csf); }

inline StepOutput im2rls_step(Im2RlsState& s, cd x, double d) { return s.step(x, d); }

inline StepOutput rim2rls_step(Im2RlsState& s, const RegMatrixSpec& reg, cd x, double d) {
    return s.step(x, d, reg);
}

/// Replica sum_k h_k |x_{n-k}^T w|^2 for a fixed w, optionally notched.
inline std::vector<double> im2_replica(std::span<const cd> x, const Eigen::VectorXcd& w, const RealFir& csf,
                                       bool notch = false, double notch_pole = 0.998) {
    DelayLine<cd> line(static_cast<std::size_t>(w.size()));
    FirStream<double, double> f(csf);
    DcNotch<double> dn(notch_pole);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        line.push(x[i]);
        cd yp{};
        for (Eigen::Index k = 0; k < w.size(); ++k) yp += line[static_cast<std::size_t>(k)] * w(k);
        const double r = f.push(std::norm(yp));
        out[i] = notch ? dn.step(r) : r;
    }
    return out;
}

/// Conjugate Wirtinger gradient of J(w) = sum_i lambda^(n-i) (d_i - yhat_i)^2
/// with yhat_i = sum_k h_k |x_{i-k}^T w|^2, evaluated over the whole record
/// (zero history before the first sample, no notch).
inline Eigen::VectorXcd wirtinger_gradient(std::span<const cd> x, std::span<const double> d,
                                           const Eigen::VectorXcd& w, double lambda, const RealFir& csf) {
    if (x.size() != d.size()) throw InputError("x and d lengths differ");
    const int n = static_cast<int>(w.size());
    const std::size_t len = x.size();
    std::vector<Eigen::VectorXcd> z(len, Eigen::VectorXcd::Zero(n));
    for (std::size_t i = 0; i < len; ++i) {
        Eigen::VectorXcd xv = Eigen::VectorXcd::Zero(n);
        for (int j = 0; j < n && static_cast<std::size_t>(j) <= i; ++j) xv(j) = x[i - static_cast<std::size_t>(j)];
        const cd yp = xv.transpose() * w;
        z[i] = yp * xv.conjugate();
    }
    Eigen::VectorXcd grad = Eigen::VectorXcd::Zero(n);
    for (std::size_t i = 0; i < len; ++i) {
        Eigen::VectorXcd g = Eigen::VectorXcd::Zero(n);
        for (std::size_t k = 0; k < csf.taps.size() && k <= i; ++k) g += csf.taps[k] * z[i - k];
        const double wt = std::pow(lambda, static_cast<double>(len - 1 - i));
        grad += wt * (-2.0 * d[i] * g + 2.0 * g * g.dot(w));
    }
    return grad;
}

/// One-tap RLS for the quadrature IMD2 path: d_Q ~ eps * replica_I.
class QPathRls {
public:
    explicit QPathRls(double lambda = 0.9999, double p0 = 1e7) : lambda_(lambda), p_(p0) {
        if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("forgetting factor must lie in (0, 1]");
        if (!(p0 > 0.0)) throw ConfigError("initial inverse power must be positive");
    }

    /// Returns the a-priori Q replica eps_hat * y, then updates eps_hat.
    StepOutput step(double y, double d_q) {
        if (!std::isfinite(y) || !std::isfinite(d_q)) throw InputError("non-finite Q-path input");
        const double replica = eps_ * y;
        const double k = p_ * y / (lambda_ + y * y * p_);
        p_ = (p_ - k * y * p_) / lambda_;
        eps_ += k * (d_q - eps_ * y);
        return {replica, d_q - replica};
    }

    double ratio() const { return eps_; }

private:
    double lambda_;
    double p_;
    double eps_ = 0.0;
};

/// Sign of the IMD2 in d_I from its correlation with |x|^2 at lags
/// group_delay .. group_delay + max_lag - 1. Throws when |rho| < min_rho.
inline int detect_sign(std::span<const double> d_i, std::span<const cd> x, std::size_t group_delay,
                       std::size_t max_lag, double min_rho = 0.01) {
    if (d_i.size() != x.size()) throw InputError("sign detection inputs differ in length");
    if (max_lag == 0) throw ConfigError("sign detection needs at least one lag");
    const std::size_t n = d_i.size();
    if (n <= group_delay + max_lag + 1) throw InputError("record too short for sign detection");
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = std::norm(x[i]);
    double best = 0.0;
    for (std::size_t lag = group_delay; lag < group_delay + max_lag; ++lag) {
        const std::size_t m = n - lag;
        double md = 0.0, mr = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            md += d_i[i + lag];
            mr += r[i];
        }
        md /= static_cast<double>(m);
        mr /= static_cast<double>(m);
        double sdr = 0.0, sdd = 0.0, srr = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double a = d_i[i + lag] - md, b = r[i] - mr;
            sdr += a * b;
            sdd += a * a;
            srr += b * b;
        }
        if (sdd <= 0.0 || srr <= 0.0) continue;
        const double rho = sdr / std::sqrt(sdd * srr);
        if (std::abs(rho) > std::abs(best)) best = rho;
    }
    if (std::abs(best) < min_rho)
        throw InputError("IMD2 sign undetectable: peak correlation " + std::to_string(best));
    return best > 0.0 ? 1 : -1;
}

enum class Algorithm { Im2Rls, RIm2Rls };

struct Complexity {
    long long multiplications = 0;
    long long divisions = 0;
};

/// Per-sample operation count, including the CSF on the replica and on z_f.
inline Complexity complexity(long long n_w, long long n_csf, Algorithm a) {
    if (n_w < 1 || n_csf < 1) throw ConfigError("complexity needs positive sizes");
    if (a == Algorithm::Im2Rls) return {13 * n_w * n_w + 5 * n_csf + 20 * n_w + 1, 2 * n_w};
    return {8 * n_w * n_w * n_w + 21 * n_w * n_w + 5 * n_csf + 18 * n_w + 1, 2 * n_w * n_w + 2 * n_w};
}

} // namespace im2cancel

#endif
