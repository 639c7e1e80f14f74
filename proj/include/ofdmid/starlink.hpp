#pragma once

#include <string>
#include <vector>

#include "ofdmid/constants.hpp"
#include "ofdmid/sync.hpp"
#include "ofdmid/types.hpp"

namespace ofdmid::starlink {

// Table II rate; replicas are defined at this rate.
inline constexpr double kFs = 240e6;

const CVec& pss_replica();
const CVec& sss_replica();

// tx (sampled at Fs) as it would appear in a stream shaped like `like`:
// Doppler-warped by beta, shifted per ctx, band-limited to the stream's bandwidth,
// starting `delay` stream samples after index 0.
CVec render_replica(const CVec& tx, double Fs, const SampleStream& like, double beta, const sync::DemodContext& ctx,
                    double delay, std::size_t count);

struct CorrelationSeries {
    std::vector<double> mag;
    double rate = 0.0;
    std::size_t stride = 1;
    std::size_t replica_len = 0;
};

// |sum y(n+i) r*(i)| / (||r|| sqrt(L P)), P the mean stream power.
CorrelationSeries correlate_pss(const SampleStream& y, double beta, const sync::DemodContext& ctx,
                                std::size_t stride = 1);

struct Peak {
    long index = 0;      // series index
    double sample = 0.0; // fractional stream sample
    double value = 0.0;
};

std::vector<Peak> find_peaks(const CorrelationSeries& c, double threshold, double min_separation_s);

struct CombCheck {
    int tines_above = 0;
    double floor = 0.0;
    std::vector<double> tine_values;  // lags -7..-1, 1..7 blocks
};

CombCheck comb_check(const CorrelationSeries& c, const Peak& p, double floor, double factor = 3.0);

struct CoherentConfig {
    bool use_sss = true;
    int search = 64;         // +- samples around the guess
    double threshold = 30.0; // coherent SNR (linear)
};

struct CoherentObservation {
    double sample = 0.0;     // fractional stream index of the frame start
    double time = 0.0;       // epoch + sample / rate
    double beta = 0.0;
    double snr = 0.0;        // |c|^2 / (sigma^2 ||r||^2)
    double peak = 0.0;
};

CoherentObservation coherent_observable(const SampleStream& y, long n_guess, double beta, const sync::DemodContext& ctx,
                                        const CoherentConfig& cfg = {});

std::string series_csv(const CorrelationSeries& c);

}  // namespace ofdmid::starlink
