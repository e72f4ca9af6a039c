#ifndef IM2CANCEL_TXGEN_HPP
#define IM2CANCEL_TXGEN_HPP

// LTE-like CP-OFDM uplink frames with QPSK on an arbitrary set of resource blocks.

#include <cstdint>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dsp.hpp"

namespace im2cancel {

struct LteGridConfig {
    int n_fft = 1024;
    double subcarrier_spacing_hz = 15e3;
    int n_rb = 50;
    int subcarriers_per_rb = 12;
    int symbols_per_slot = 7;
    std::vector<int> cp_lengths{80, 72, 72, 72, 72, 72, 72};

    double sample_rate_hz() const { return n_fft * subcarrier_spacing_hz; }
    int n_data_subcarriers() const { return n_rb * subcarriers_per_rb; }
    int slot_length() const {
        int n = 0;
        for (int cp : cp_lengths) n += cp + n_fft;
        return n;
    }

    void validate() const {
        if (n_fft < 2 || n_rb < 1 || subcarriers_per_rb < 1 || !(subcarrier_spacing_hz > 0.0))
            throw ConfigError("grid dimensions must be positive");
        if (n_data_subcarriers() >= n_fft) throw ConfigError("allocated grid does not fit in the FFT");
        if (static_cast<int>(cp_lengths.size()) != symbols_per_slot)
            throw ConfigError("need one cyclic prefix length per symbol");
        for (int cp : cp_lengths)
            if (cp < 0 || cp > n_fft) throw ConfigError("cyclic prefix length out of range");
    }
};

/// 10 MHz LTE: 1024-point FFT, 15.36 MHz, 50 RBs, normal CP.
inline LteGridConfig lte10() { return {}; }

/// Set of allocated resource blocks, numbered 1..n_rb from the lowest frequency.
class AllocationMask {
public:
    AllocationMask() = default;
    explicit AllocationMask(std::set<int> rbs) : rbs_(std::move(rbs)) {}

    static AllocationMask full(const LteGridConfig& g) {
        std::set<int> s;
        for (int r = 1; r <= g.n_rb; ++r) s.insert(r);
        return AllocationMask(std::move(s));
    }

    /// Accepts "full", "none" or a comma list of RBs and inclusive ranges, e.g. "9-11,29-46".
    static AllocationMask parse(const std::string& text, const LteGridConfig& g) {
        if (text == "full") return full(g);
        std::set<int> s;
        if (text == "none") return AllocationMask(std::move(s));
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) throw ConfigError("empty entry in allocation list '" + text + "'");
            const auto dash = item.find('-');
            try {
                std::size_t used = 0;
                if (dash == std::string::npos) {
                    int v = std::stoi(item, &used);
                    if (used != item.size()) throw std::invalid_argument(item);
                    s.insert(v);
                } else {
                    const std::string a = item.substr(0, dash), b = item.substr(dash + 1);
                    int lo = std::stoi(a, &used);
                    if (used != a.size()) throw std::invalid_argument(a);
                    int hi = std::stoi(b, &used);
                    if (used != b.size()) throw std::invalid_argument(b);
                    if (hi < lo) throw ConfigError("descending RB range '" + item + "'");
                    for (int r = lo; r <= hi; ++r) s.insert(r);
                }
            } catch (const std::logic_error&) {
                throw ConfigError("cannot parse allocation entry '" + item + "'");
            }
        }
        AllocationMask m(std::move(s));
        m.validate(g);
        return m;
    }

    void validate(const LteGridConfig& g) const {
        for (int r : rbs_)
            if (r < 1 || r > g.n_rb)
                throw ConfigError("resource block " + std::to_string(r) + " outside 1.." + std::to_string(g.n_rb));
    }

    const std::set<int>& rbs() const { return rbs_; }
    bool empty() const { return rbs_.empty(); }

    /// Indices into the centred data-subcarrier list, ascending.
    std::vector<int> data_subcarriers(const LteGridConfig& g) const {
        std::vector<int> v;
        for (int r : rbs_)
            for (int k = 0; k < g.subcarriers_per_rb; ++k) v.push_back((r - 1) * g.subcarriers_per_rb + k);
        return v;
    }

    int n_subcarriers(const LteGridConfig& g) const {
        return static_cast<int>(rbs_.size()) * g.subcarriers_per_rb;
    }

    /// Span from the lowest to the highest allocated subcarrier, inclusive.
    double edge_bandwidth_hz(const LteGridConfig& g) const {
        if (rbs_.empty()) throw InputError("allocation mask is empty");
        const int lo = (*rbs_.begin() - 1) * g.subcarriers_per_rb;
        const int hi = *rbs_.rbegin() * g.subcarriers_per_rb - 1;
        return (hi - lo + 1) * g.subcarrier_spacing_hz;
    }

    /// Two-sided width of the second-order product |x|^2 around DC.
    double imd2_bandwidth_hz(const LteGridConfig& g) const { return 2.0 * edge_bandwidth_hz(g); }

private:
    std::set<int> rbs_;
};

/// Signed subcarrier offset from DC for data subcarrier k. DC itself is never used.
inline int subcarrier_offset(int k, const LteGridConfig& g) {
    int sc = k - g.n_data_subcarriers() / 2;
    if (sc >= 0) sc += 1;
    return sc;
}

inline int fft_bin(int k, const LteGridConfig& g) {
    const int sc = subcarrier_offset(k, g);
    return sc >= 0 ? sc : sc + g.n_fft;
}

struct TxFrame {
    ComplexSignal signal;
    /// QPSK symbols per OFDM symbol, in allocated-subcarrier order.
    std::vector<std::vector<cd>> data;
    /// Amplitude applied after the unitary IFFT.
    double scale = 1.0;
    int n_slots = 0;
    std::uint64_t seed = 0;
};

/// One frame of `n_slots` slots at the native rate, rescaled to `power_dbm_out`.
/// An empty mask gives an all-zero frame.
inline TxFrame generate_tx(const LteGridConfig& g, const AllocationMask& mask, int n_slots, std::uint64_t seed,
                           double power_dbm_out = 0.0) {
    g.validate();
    mask.validate(g);
    if (n_slots < 1) throw ConfigError("slot count must be at least 1");

    std::mt19937_64 rng(seed);
    const auto scs = mask.data_subcarriers(g);
    const int n_sym = n_slots * g.symbols_per_slot;
    const double q = 1.0 / std::sqrt(2.0);

    TxFrame f;
    f.n_slots = n_slots;
    f.seed = seed;
    f.data.reserve(static_cast<std::size_t>(n_sym));
    std::vector<cd> out;
    out.reserve(static_cast<std::size_t>(n_slots) * g.slot_length());

    Eigen::FFT<double> fft;
    std::vector<cd> grid(static_cast<std::size_t>(g.n_fft)), td(static_cast<std::size_t>(g.n_fft));
    const double unitary = std::sqrt(static_cast<double>(g.n_fft));
    std::uint64_t bits = 0;
    int bits_left = 0;
    for (int s = 0; s < n_sym; ++s) {
        std::fill(grid.begin(), grid.end(), cd{});
        std::vector<cd> sym;
        sym.reserve(scs.size());
        for (int k : scs) {
            if (bits_left < 2) {
                bits = rng();
                bits_left = 64;
            }
            const double re = (bits & 1u) ? -q : q;
            const double im = (bits & 2u) ? -q : q;
            bits >>= 2;
            bits_left -= 2;
            const cd v(re, im);
            grid[static_cast<std::size_t>(fft_bin(k, g))] = v;
            sym.push_back(v);
        }
        fft.inv(td, grid);
        for (auto& v : td) v *= unitary;
        const int cp = g.cp_lengths[static_cast<std::size_t>(s % g.symbols_per_slot)];
        out.insert(out.end(), td.end() - cp, td.end());
        out.insert(out.end(), td.begin(), td.end());
        f.data.push_back(std::move(sym));
    }
    const double p = mean_power(out);
    f.scale = p > 0.0 ? std::sqrt(dbm_to_watts(power_dbm_out) / p) : 1.0;
    for (auto& v : out) v *= f.scale;
    f.signal = ComplexSignal(std::move(out), g.sample_rate_hz());
    return f;
}

} // namespace im2cancel

#endif
