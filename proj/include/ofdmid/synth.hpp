#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ofdmid/sigmodel.hpp"
#include "ofdmid/types.hpp"

namespace ofdmid::synth {

enum class Modulation { Qam4, Qam16, PssTime, Zero };

int bits_per_symbol(Modulation m);

// One frame's worth of frequency-domain payload rows (symbols 2, 3, ...).
struct SymbolGrid {
    int N = 0;
    std::vector<CVec> values;
    std::vector<Modulation> tags;

    std::size_t symbols() const { return values.size(); }
};

// Boosted subcarriers sharing one random 4QAM value per symbol.
struct PilotRedundancy {
    std::vector<int> subcarriers{8, -8};  // negative = counted from N
    double power_fraction = 0.03;
};

struct PayloadOptions {
    std::optional<PilotRedundancy> pilots;
};

bool is_gutter(int k, int N);

CVec ofdm_time_symbol(std::span<const cplx> coeffs, int N, int Ng);

// Fibonacci LFSR. `taps` are the nonzero powers of D above D^0 (e.g. {3, 7});
// `init` is (a_-1, a_-2, ..., a_-deg).
std::vector<int> lfsr_msequence(const std::vector<int>& taps, const std::vector<int>& init, std::size_t len);
std::vector<int> starlink_msequence();
// a_0 as MSB, one 0 bit appended.
std::string pack_msequence_hex(const std::vector<int>& a);

CVec gen_pss(int N = 1024, int Ng = 32);
CVec gen_sss(int N = 1024);
std::vector<int> sss_digits(int N = 1024);  // s_k for k = 0..N-1 (gutter entries are -1)

SymbolGrid random_payload(const IndependentParams& p, int nsym, const std::vector<Modulation>& schedule,
                          std::uint64_t seed, const PayloadOptions& opts = {});

// Data rows (Nsfd) followed by stand-ins for the unpublished coda symbols (constant across frames).
SymbolGrid standard_frame_grid(const IndependentParams& p, const std::vector<Modulation>& schedule,
                               std::uint64_t seed, const PayloadOptions& opts = {});

struct FrameOptions {
    std::vector<bool> occupancy;      // empty = all frames present
    std::vector<double> amplitude;    // empty = unit
    bool include_pss = true;
    bool include_sss = true;
};

// grids[m % grids.size()] fills frame m.
SampleStream build_frames(const std::vector<SymbolGrid>& grids, const IndependentParams& p, int frames,
                          const FrameOptions& opts = {});

enum class Prefilter { Ideal, Fir };

struct ChannelConfig {
    double beta = 0.0;
    double tau0 = 0.0;
    double Fc = 0.0;
    double Fc_bar = 0.0;
    double noise_density = 0.0;
    double Fr = 0.0;
    double Fh = 0.0;
    Prefilter prefilter = Prefilter::Fir;
    std::uint64_t noise_seed = 1;
    // Render only output samples [first, first + count) of the full capture.
    std::optional<std::size_t> first;
    std::optional<std::size_t> count;

    void validate() const;
};

double noise_density_for_snr(double snr_linear, double Fs);

// Whole closed-loop capture: Table II-style frames through the channel.
struct Scenario {
    IndependentParams params;
    std::uint64_t seed = 1;
    double rate = 62.5e6;
    double fh = 0.0;         // 0: Fs if rate > Fs, else 0.96 rate
    double center = 0.0;     // capture center; 0: fc
    double fc = 11.325e9;
    double snr_db = 10.0;
    double beta = 0.0;
    double tau0 = 0.0;
    double duration = 10e-3;
    int frames = 0;          // 0: enough for duration
    std::vector<bool> occupancy;
    Prefilter prefilter = Prefilter::Fir;
    Modulation modulation = Modulation::Qam4;
    bool pilots = false;

    // Fills the 0 defaults above.
    void resolve();
};

SampleStream render_scenario(Scenario sc);

SampleStream apply_channel(const SampleStream& x, const ChannelConfig& cfg);

// Rendering pieces exposed for tests.
CVec channel_signal(const SampleStream& x, const ChannelConfig& cfg);
CVec channel_noise(const ChannelConfig& cfg, std::size_t count);

}  // namespace ofdmid::synth
