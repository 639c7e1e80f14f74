#pragma once

#include <map>
#include <string>

#include "ofdmid/types.hpp"

namespace ofdmid::capture {

enum class Format { Int16, Float32 };

Format parse_format(const std::string& s);
std::string format_name(Format f);

struct Header {
    Format format = Format::Float32;
    double rate = 0.0;
    double center = 0.0;
    double epoch = 0.0;
    double scale = 1.0;      // int16: value of one LSB
    double bandwidth = 0.0;  // 0 = full band
};

std::string header_path(const std::string& path);
std::string truth_path(const std::string& path);

// Writes `path` (payload) and its header sidecar. scale <= 0 picks one that uses the int16 range.
Header write_capture(const std::string& path, const SampleStream& y, Format f, double scale = 0.0);
SampleStream read_capture(const std::string& path);
Header read_header(const std::string& path);

void write_kv(const std::string& path, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_kv(const std::string& path);

}  // namespace ofdmid::capture
