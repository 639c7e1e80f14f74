#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ofdmid/sigmodel.hpp"
#include "ofdmid/types.hpp"

namespace ofdmid::sync {

// Estimated OFDM parameters plus where the capture sits relative to the channel.
// The stream passed alongside must already be at F̂s.
struct DemodContext {
    int N = 1024;
    int Ng = 32;
    double Fc_bar = 0.0;
    // Channel center minus capture center (nonzero for sub-band captures).
    double center_offset = 0.0;
};

// N+Ng (or `len`) samples starting at index n, resampled to (1-beta)·rate and derotated.
CVec extract_corrected(const SampleStream& y, double n, double beta, std::size_t len, const DemodContext& ctx);

CVec demod_symbol(const SampleStream& y, double n, double beta, const DemodContext& ctx);

// Subcarriers usable for scoring: not gutter, not the band-edge bin, inside the capture band.
std::vector<char> usable_mask(int N, double Fs, double bandwidth, double center_offset, double edge_margin_hz);
std::vector<char> default_mask(const SampleStream& y, const DemodContext& ctx);

struct KMeansResult {
    CVec centroids;
    std::vector<int> labels;
    std::vector<double> variance;  // per-component, per cluster
    double inertia = 0.0;
};

struct KMeansConfig {
    int max_iter = 50;
    int restarts = 8;
    std::uint64_t seed = 0x5EEDC0DE;
};

// Throws StageError("kmeans") if every restart leaves a cluster empty.
KMeansResult kmeans(std::span<const cplx> pts, int k, const KMeansConfig& cfg = {});

double cluster_score(const KMeansResult& r);

double score_sync(const SampleStream& y, double n, double beta, const DemodContext& ctx, int bs,
                  const std::vector<char>& mask);

struct SyncSearchSpace {
    long n_center = 0;
    int d = 64;
    double beta_prior = 0.0;
    double beta_m = 7.5e-5;
    double stride = 0.0;

    static double stride_for(double epsilon, double Fs, int N, double Fc_bar);
    std::vector<long> n_values() const;
    std::vector<double> beta_values() const;
};

struct SyncEstimate {
    long n = 0;
    double beta = 0.0;
    double score = 0.0;
    CVec constellation;
};

SyncEstimate estimate_sync(const SampleStream& y, const SyncSearchSpace& space, const DemodContext& ctx, int bs,
                           const std::vector<char>& mask);

struct FrameDetectConfig {
    double theta_high_db = 6.0;
    double theta_low_db = 3.0;
};

std::vector<long> detect_frame_start(const SampleStream& y, int N, int Ng, const FrameDetectConfig& cfg = {});

// Blind carrier offset seed: CP phase for the fractional part, DC gutter for the integer part.
// `starts` are sample indices of OFDM (non-PSS) symbols. Returns the beta that derotates it.
double coarse_beta(const SampleStream& y, const std::vector<long>& starts, const DemodContext& ctx, int max_bins = 128);

struct FrameTime {
    int m = 0;
    double n = 0.0;
};

struct FcEstimate {
    double Fc = 0.0;
    double beta_bar = 0.0;
    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
};

FcEstimate estimate_fc(const std::vector<FrameTime>& frames, double beta_hat, double Fc_bar, const Rational& Tf,
                       double Fs);

}  // namespace ofdmid::sync
