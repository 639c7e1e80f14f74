#include "ofdmid/capture.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ofdmid/sigmodel.hpp"

namespace ofdmid::capture {

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

namespace {

std::string num(double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
}

double get(const std::map<std::string, std::string>& kv, const std::string& key, std::optional<double> dflt = {}) {
    auto it = kv.find(key);
    if (it == kv.end()) {
        if (dflt) return *dflt;
        throw std::runtime_error("capture header missing '" + key + "'");
    }
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw std::runtime_error("capture header: bad value for '" + key + "'");
    }
}

}  // namespace

Format parse_format(const std::string& s) {
    if (s == "int16") return Format::Int16;
    if (s == "float32") return Format::Float32;
    throw std::runtime_error("unknown sample format '" + s + "' (int16 or float32)");
}

std::string format_name(Format f) { return f == Format::Int16 ? "int16" : "float32"; }

std::string header_path(const std::string& path) { return path + ".hdr"; }
std::string truth_path(const std::string& path) { return path + ".truth"; }

void write_kv(const std::string& path, const std::map<std::string, std::string>& kv) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::map<std::string, std::string> read_kv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_kv(ss.str());
}

Header write_capture(const std::string& path, const SampleStream& y, Format fmt, double scale) {
    if (y.rate <= 0.0) throw std::runtime_error("capture rate must be positive");
    Header h;
    h.format = fmt;
    h.rate = y.rate;
    h.center = y.center;
    h.epoch = y.epoch;
    h.bandwidth = y.bandwidth;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (fmt == Format::Float32) {
        h.scale = 1.0;
        std::vector<float> buf;
        buf.reserve(2 * y.size());
        for (const auto& v : y.samples) {
            buf.push_back(static_cast<float>(v.real()));
            buf.push_back(static_cast<float>(v.imag()));
        }
        f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    } else {
        if (scale <= 0.0) {
            double peak = 0.0;
            for (const auto& v : y.samples) peak = std::max({peak, std::fabs(v.real()), std::fabs(v.imag())});
            scale = peak > 0.0 ? peak / 32000.0 : 1.0;
        }
        h.scale = scale;
        std::vector<std::int16_t> buf;
        buf.reserve(2 * y.size());
        auto q = [&](double x) {
            const double r = std::round(x / scale);
            return static_cast<std::int16_t>(std::clamp(r, -32768.0, 32767.0));
        };
        for (const auto& v : y.samples) {
            buf.push_back(q(v.real()));
            buf.push_back(q(v.imag()));
        }
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(std::int16_t)));
    }
    if (!f) throw std::runtime_error("write failed: " + path);

    write_kv(header_path(path), {{"format", format_name(fmt)},
                                 {"rate", num(h.rate)},
                                 {"center", num(h.center)},
                                 {"epoch", num(h.epoch)},
                                 {"scale", num(h.scale)},
                                 {"bandwidth", num(h.bandwidth)}});
    return h;
}

Header read_header(const std::string& path) {
    const auto kv = read_kv(header_path(path));
    Header h;
    auto it = kv.find("format");
    if (it == kv.end()) throw std::runtime_error("capture header missing 'format'");
    h.format = parse_format(it->second);
    h.rate = get(kv, "rate");
    h.center = get(kv, "center", 0.0);
    h.epoch = get(kv, "epoch", 0.0);
    h.scale = get(kv, "scale", 1.0);
    h.bandwidth = get(kv, "bandwidth", 0.0);
    if (!(h.rate > 0.0)) throw std::runtime_error("capture header: rate must be positive");
    if (!(h.scale > 0.0)) throw std::runtime_error("capture header: scale must be positive");
    return h;
}

SampleStream read_capture(const std::string& path) {
    const Header h = read_header(path);
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const std::size_t width = h.format == Format::Int16 ? sizeof(std::int16_t) : sizeof(float);
    if (raw.size() % (2 * width) != 0) throw std::runtime_error("capture payload is not a whole number of I/Q pairs");

    SampleStream y;
    y.rate = h.rate;
    y.center = h.center;
    y.epoch = h.epoch;
    y.bandwidth = h.bandwidth;
    const std::size_t n = raw.size() / (2 * width);
    y.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (h.format == Format::Int16) {
            std::int16_t iq[2];
            std::memcpy(iq, raw.data() + 2 * width * i, sizeof iq);
            y.samples[i] = {iq[0] * h.scale, iq[1] * h.scale};
        } else {
            float iq[2];
            std::memcpy(iq, raw.data() + 2 * width * i, sizeof iq);
            y.samples[i] = {iq[0], iq[1]};
        }
    }
    return y;
}

}  // namespace ofdmid::capture
