#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ofdmid/sigmodel.hpp"
#include "ofdmid/types.hpp"

namespace ofdmid::cyclo {

struct CyclicCorrConfig {
    std::size_t M = 0;   // 0: use every sample the largest lag allows
    int Np = 1;
    double p = 0.05;
    double nu = 10.0;    // linear ratio on |R|, i.e. 10 dB
    double harmonic_step = 0.0;  // > 0: also trace sum |R^alpha| on this normalized-frequency grid

    void validate() const;
};

struct CandidateSets {
    std::vector<int> S;
    std::vector<std::pair<long, long>> S_rb;  // parallel to S, inclusive bounds
    std::vector<long> S_r;                    // sorted union

    // Index into S, or -1.
    int f_r_index(long tau) const;
    int f_r(long tau) const;
};

CandidateSets build_candidates(double Fr, double Fs_bar, double p, std::vector<int> S = {512, 1024, 2048, 4096});

cplx cyclic_autocorr(std::span<const cplx> y, double alpha, long tau, std::size_t M);
cplx cyclic_autocorr(const SampleStream& y, double alpha, long tau, std::size_t M);

// R^0(tau) for tau = 0..max_tau, averaged over M samples, via FFT.
CVec lag_autocorr(std::span<const cplx> y, std::size_t max_tau, std::size_t M);

struct NAttempt {
    int b = 0;
    long tau_star = 0;
    double ratio = 0.0;
    bool accepted = false;
};

struct NEstimate {
    int N = 0;
    long Nr = 0;
    double ratio = 0.0;
    std::vector<std::pair<long, double>> trace;  // (tau, |R^0(tau)|) over S_r
    std::vector<NAttempt> attempts;
};

NEstimate estimate_N(const SampleStream& y, double Fs_bar, const CyclicCorrConfig& cfg);

double estimate_Fs(int N, long Nr, double Fr);

// Rate conversion preserving |f| < min(bandwidth, to_rate)/2.
SampleStream resample(const SampleStream& y, double to_rate, double new_bandwidth = 0.0);

struct NgEstimate {
    int Ng = 0;
    std::vector<int> xi;            // candidate N + Ng
    std::vector<double> score;      // sum over |p| <= Np
    double margin = 0.0;            // best / second best of the alpha != 0 part
    std::vector<std::pair<double, double>> harmonic_trace;  // (alpha * xi_hat, |R^alpha(N)|)
};

std::vector<int> ng_candidates(int N, double Fs_hat, double Td);

NgEstimate estimate_Ng(const SampleStream& y, int N, const CyclicCorrConfig& cfg, double Td = 108e-9);

struct TfEstimate {
    Rational Tf;
    long frame_rate = 0;
    long tau_star = 0;
    double peak_to_median = 0.0;
    double threshold = 0.0;
    long lag_lo = 0;
    std::vector<double> trace;  // |R^0| for tau = lag_lo .. lag_lo + size - 1
};

// diag, if given, receives the trace even when validation fails.
TfEstimate estimate_Tf(const SampleStream& y, int N, int Ng, double Tm, std::size_t M = 0, TfEstimate* diag = nullptr);

std::string trace_csv(const std::vector<std::pair<long, double>>& t, const std::string& xname, const std::string& yname);

}  // namespace ofdmid::cyclo
