#pragma once

#include <span>
#include <vector>

#include "ofdmid/types.hpp"

namespace ofdmid::dsp {

// Unnormalized in-place FFT (FFTW underneath). Any length.
void fft(std::span<cplx> x, bool inverse = false);

// Unitary DFT pair (1/sqrt(N) both ways).
CVec dft_unitary(std::span<const cplx> x);
CVec idft_unitary(std::span<const cplx> X);

std::size_t next_pow2(std::size_t n);

double kaiser_beta_for_atten(double atten_db);
double bessel_i0(double x);

// Kaiser-windowed sinc lowpass, tabulated in units of zero crossings:
// g(u) = sinc(u) * w(u / half_zc). Cutoff fc means zero crossings at k/(2 fc).
class SincKernel {
public:
    SincKernel(double cutoff_hz, double half_zc, double kaiser_beta);

    // Warp/interpolation kernel used by the channel model: 64 zero crossings, beta 12.
    static SincKernel interpolator(double cutoff_hz);
    // Shorter kernel for the per-grid-point resampling inside the sync search.
    static SincKernel compact(double cutoff_hz);
    // Lowpass meeting `atten_db` stopband from pass_edge to stop_edge (one-sided Hz).
    static SincKernel design(double pass_edge_hz, double stop_edge_hz, double atten_db);
    // Cutoff fixed, length chosen for the given transition width and stopband.
    static SincKernel with_transition(double cutoff_hz, double transition_hz, double atten_db);

    double cutoff() const { return fc_; }
    double half_width_s() const { return half_zc_ / (2.0 * fc_); }
    double half_zc() const { return half_zc_; }
    double at_u(double u) const;  // u in zero-crossing units

private:
    double fc_;
    double half_zc_;
    std::vector<double> table_;
    static constexpr int kOversample = 1024;
};

// Process-wide cache of compact kernels keyed by cutoff.
const SincKernel& compact_kernel(double cutoff_hz);

// Evaluate the bandlimited reconstruction of x (sample k at t = in_t0 + k/in_rate)
// at times out_t0 + i/out_rate, i < count. `fcen` shifts the kernel passband.
CVec interpolate(std::span<const cplx> x, double in_rate, double in_t0,
                 double out_rate, double out_t0, std::size_t count,
                 const SincKernel& kernel, double fcen = 0.0);

double rms(std::span<const cplx> x);
double mean_power(std::span<const cplx> x);

}  // namespace ofdmid::dsp
