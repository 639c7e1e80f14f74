#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ofdmid {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

// Uniformly sampled complex baseband. `bandwidth` is the usable (prefiltered)
// two-sided width in Hz; 0 means the full Nyquist band.
struct SampleStream {
    CVec samples;
    double rate = 0.0;
    double center = 0.0;
    double epoch = 0.0;
    std::optional<double> snr_hint;
    double bandwidth = 0.0;

    double usable_bandwidth() const { return bandwidth > 0.0 ? bandwidth : rate; }
    std::size_t size() const { return samples.size(); }
};

// A pipeline stage failed in a way the caller should report (not a bug).
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

}  // namespace ofdmid
