#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "ofdmid/sigmodel.hpp"

namespace ofdmid::starlink {

inline constexpr std::string_view kQpssHex = "C1B5D191024D3DC3F8EC52FAA16F3958";

// 510 hex digits, most significant first.
inline constexpr std::string_view kQsssHex =
    "BD565D5064E9B3A94958F28624DED560946199F5B40F0E4FB5EFCB473B4C24B2"
    "D1E0BD01A6A04D5017DE91A8ECC0DA09EBFE57F9F1B44C532F161C583A42490A"
    "5C09F2A117F9A28F9B2FD547A74C44BABB4BE85DA6A62B1235E2AD084C001801"
    "42A8F7F357DEC4F31316BC58FA404909A3FCA7F88E421902B6A2580AE8030803"
    "F65809DB347F590DBC46F010EBE3A25C060D74429FC46BDF9B63719279798D23"
    "2C5ABA274122FF66AD7E449F44CB40C49C24A1E2629F5BFE82CE531FDC34F8C6"
    "4A43A963F40D5B71BDE6FB2F13492D6F2E8544B21D449722C635180342CD0026"
    "A1E7F7E80E91B175E852F919767E5AF9B6E909AF362F5218E2B908DC005803";

inline constexpr std::size_t kQsssDigits = 510;
inline constexpr std::uint64_t kQsssFnv1a = 0x8f5cdfaabf620744ULL;

std::uint64_t fnv1a64(std::string_view s);

// Throws if the stored q_sss has the wrong length or checksum.
void check_qsss();

// Table II parameter set.
IndependentParams table2();

// Hex <-> bit helpers. Bits are returned LSB-first: bit[i] = floor(q / 2^i) mod 2.
std::vector<int> hex_to_bits_lsb(std::string_view hex);
std::string bits_lsb_to_hex(const std::vector<int>& bits, std::size_t hex_digits);

}  // namespace ofdmid::starlink
