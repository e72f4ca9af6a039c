#ifndef IM2CANCEL_RECORDING_HPP
#define IM2CANCEL_RECORDING_HPP

// Raw I/Q capture files. One ASCII header line
//   im2cancel-raw v1; rate_hz=<float>; format=cf64le; length=<N>
// followed by N little-endian float64 (I, Q) pairs.

#include <cstring>
#include <fstream>
#include <sstream>

#include "dsp.hpp"

namespace im2cancel {

inline constexpr const char* recording_magic = "im2cancel-raw v1";

namespace detail {

inline void put_f64le(char* out, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    for (int i = 0; i < 8; ++i) out[i] = static_cast<char>((u >> (8 * i)) & 0xffu);
}

inline double get_f64le(const char* in) {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

} // namespace detail

inline void write_recording(std::ostream& out, const ComplexSignal& s) {
    std::ostringstream h;
    h.precision(17);
    h << recording_magic << "; rate_hz=" << s.sample_rate_hz << "; format=cf64le; length=" << s.size() << "\n";
    out << h.str();
    std::vector<char> buf(16 * s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        detail::put_f64le(&buf[16 * i], s.samples[i].real());
        detail::put_f64le(&buf[16 * i + 8], s.samples[i].imag());
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("failed writing recording");
}

inline void write_recording(const std::string& path, const ComplexSignal& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot create recording '" + path + "'");
    write_recording(out, s);
}

inline ComplexSignal read_recording(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw FormatError("missing recording header", 0);
    const long long data_start = static_cast<long long>(header.size()) + 1;
    std::vector<std::string> fields;
    {
        std::stringstream ss(header);
        std::string f;
        while (std::getline(ss, f, ';')) {
            const auto b = f.find_first_not_of(' ');
            fields.push_back(b == std::string::npos ? std::string() : f.substr(b));
        }
    }
    if (fields.empty() || fields[0] != recording_magic) throw FormatError("bad recording magic", 0);
    double rate = 0.0;
    long long length = -1;
    bool have_format = false;
    long long pos = static_cast<long long>(fields[0].size()) + 2;  // skip "; "
    for (std::size_t i = 1; i < fields.size(); ++i) {
        const auto& f = fields[i];
        const auto eq = f.find('=');
        if (eq == std::string::npos) throw FormatError("header field without '='", pos);
        const std::string k = f.substr(0, eq), v = f.substr(eq + 1);
        try {
            if (k == "rate_hz") rate = std::stod(v);
            else if (k == "length") length = std::stoll(v);
            else if (k == "format") {
                if (v != "cf64le") throw FormatError("unsupported sample format '" + v + "'", pos);
                have_format = true;
            } else {
                throw FormatError("unknown header field '" + k + "'", pos);
            }
        } catch (const std::logic_error&) {
            throw FormatError("unparsable header value '" + v + "'", pos);
        }
        pos += static_cast<long long>(f.size()) + 2;
    }
    if (!(rate > 0.0) || !std::isfinite(rate)) throw FormatError("missing or invalid rate_hz", 0);
    if (length < 0) throw FormatError("missing or invalid length", 0);
    if (!have_format) throw FormatError("missing format field", 0);

    std::vector<char> buf(static_cast<std::size_t>(16 * length));
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const long long got = in.gcount();
    if (got != static_cast<long long>(buf.size()))
        throw FormatError("truncated sample data: expected " + std::to_string(16 * length) + " bytes",
                          data_start + got);
    std::vector<cd> s(static_cast<std::size_t>(length));
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = {detail::get_f64le(&buf[16 * i]), detail::get_f64le(&buf[16 * i + 8])};
        if (!std::isfinite(s[i].real()) || !std::isfinite(s[i].imag()))
            throw FormatError("non-finite sample " + std::to_string(i), data_start + 16 * static_cast<long long>(i));
    }
    return ComplexSignal(std::move(s), rate);
}

inline ComplexSignal read_recording(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open recording '" + path + "'");
    return read_recording(in);
}

} // namespace im2cancel

#endif
