#include "ofdmid/constants.hpp"

#include <cctype>
#include <stdexcept>
#include <string>

namespace ofdmid::starlink {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void check_qsss() {
    if (kQsssHex.size() != kQsssDigits)
        throw std::logic_error("q_sss: expected 510 hex digits, found " + std::to_string(kQsssHex.size()));
    if (fnv1a64(kQsssHex) != kQsssFnv1a) throw std::logic_error("q_sss: checksum mismatch");
}

IndependentParams table2() {
    IndependentParams p;
    p.Fs = Rational(240'000'000);
    p.N = 1024;
    p.Ng = 32;
    p.Tf = Rational(1, 750);
    p.Tfg = Rational(68, 15) / Rational(1'000'000);
    p.Nsf = 302;
    p.Nsfd = 298;
    p.Fdelta = Rational(250'000'000);
    for (int i = 1; i <= 8; ++i) p.Fc.push_back(channel_center(i));
    return p;
}

namespace {
int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument(std::string("bad hex digit: ") + c);
}
}  // namespace

std::vector<int> hex_to_bits_lsb(std::string_view hex) {
    std::vector<int> bits;
    bits.reserve(hex.size() * 4);
    for (auto it = hex.rbegin(); it != hex.rend(); ++it) {
        const int v = hex_value(*it);
        for (int b = 0; b < 4; ++b) bits.push_back((v >> b) & 1);
    }
    return bits;
}

std::string bits_lsb_to_hex(const std::vector<int>& bits, std::size_t hex_digits) {
    static constexpr char kDigits[] = "0123456789ABCDEF";
    std::string out(hex_digits, '0');
    for (std::size_t d = 0; d < hex_digits; ++d) {
        int v = 0;
        for (int b = 0; b < 4; ++b) {
            const std::size_t i = 4 * d + b;
            if (i < bits.size() && bits[i]) v |= 1 << b;
        }
        out[hex_digits - 1 - d] = kDigits[v];
    }
    return out;
}

}  // namespace ofdmid::starlink
