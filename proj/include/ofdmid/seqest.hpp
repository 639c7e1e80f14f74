#pragma once

#include <string>
#include <vector>

#include "ofdmid/sigmodel.hpp"
#include "ofdmid/sync.hpp"
#include "ofdmid/types.hpp"

namespace ofdmid::seqest {

// One synchronized frame: start of symbol 0 and its CFO estimate.
struct FrameSource {
    const SampleStream* y = nullptr;
    double n = 0.0;
    double beta = 0.0;
};

struct Repeatability {
    std::vector<double> score;  // per symbol index
    std::vector<int> flagged;
};

Repeatability find_sync_symbols(const std::vector<FrameSource>& frames, const sync::DemodContext& ctx, int n_symbols,
                                double threshold = 0.9);

struct PssEstimate {
    CVec raw;      // 128 unit-modulus samples
    CVec decided;  // nearest pi/4 + q pi/2 lattice points after a common rotation
    std::vector<int> bits;  // LSB-first, bit 0 is the appended zero
    std::string hex;
    double resultant_length = 0.0;
    double block0_vs_block1 = 0.0;
};

PssEstimate estimate_pss_subsequence(const std::vector<FrameSource>& frames, const sync::DemodContext& ctx);

struct DifferentialSequence {
    int N = 0;
    CVec values;              // index k: X*_{k+1} X_k, quantized to {1, j, -1, -j}
    std::vector<char> mask;   // length N-1
    std::vector<double> confidence;

    std::size_t observed() const;
};

DifferentialSequence estimate_sss_differential(const std::vector<CVec>& rows, const std::vector<char>& band_mask);

// Bins a capture can observe: inside its band (less capture_margin), not gutter.
// N/2 only when asked; the differential sequence never uses it.
std::vector<char> band_mask(int N, double Fs, double bandwidth, double center_offset, double capture_margin_hz,
                            bool include_nyquist = false);

struct StitchResult {
    DifferentialSequence seq;
    std::vector<int> unobserved;  // pair indices in [2, N-4] still missing
};

StitchResult stitch_bands(const std::vector<DifferentialSequence>& segments, std::size_t min_overlap = 8,
                          double min_agreement = 0.9);

struct SssCapture {
    const SampleStream* y = nullptr;
    sync::DemodContext ctx;
    std::vector<FrameSource> frames;  // y pointers ignored; uses `y` above
    double capture_margin_hz = 0.0;
};

struct SssResolution {
    CVec coeffs;
    std::vector<int> digits;  // s_k, -1 on the gutter
    std::string hex;
    double margin_db = 0.0;
    double quality = 0.0;
    int choice_x2 = 0;
    int choice_xm = 0;
    std::vector<double> scores;  // 16, index 4 * x2 + xm
};

SssResolution resolve_sss_ambiguity(const DifferentialSequence& diffs, const std::vector<SssCapture>& captures,
                                    double min_margin_db = 1.0, double min_quality = 0.5);

std::string sss_hex(const std::vector<int>& digits);

struct FrameLayout {
    int Nsf = 0;
    int Nsfd = 0;
    Rational Tfg;
    Rational Tsym;
};

FrameLayout frame_layout(const Rational& Tf, int N, int Ng, const Rational& Fs);

}  // namespace ofdmid::seqest
