#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ofdmid/cyclo.hpp"
#include "ofdmid/seqest.hpp"
#include "ofdmid/sync.hpp"
#include "ofdmid/types.hpp"

namespace ofdmid::pipeline {

enum class Stage { N, Fs, Ng, Tf, Detect, Sync, Layout, Fc };

Stage parse_stage(const std::string& s);
std::string stage_name(Stage s);

struct IdentifyConfig {
    double Fs_bar = 240e6;
    double Fc_bar = 0.0;        // 0: take the capture center
    cyclo::CyclicCorrConfig cyclic;
    double Td = 108e-9;
    double Tm = 1.5e-3;
    std::size_t tf_M = 0;
    sync::FrameDetectConfig detect;
    int d = 24;
    double beta_m = 5e-6;       // around the coarse CFO seed
    double epsilon = 0.02;
    int bs = 2;
    int fc_frames = 8;
    std::optional<long> prior_start;  // used when the capture has no gaps
    Stage last = Stage::Fc;
};

struct IdentifyReport {
    bool ok = true;
    std::string failed_stage;
    std::string error;

    std::vector<std::pair<std::string, std::string>> entries;
    std::map<std::string, std::string> csv;

    std::optional<cyclo::NEstimate> N;
    double Fs_hat = 0.0;
    std::optional<cyclo::NgEstimate> Ng;
    std::optional<cyclo::TfEstimate> Tf;
    std::vector<long> starts;
    double beta_coarse = 0.0;
    std::optional<sync::SyncEstimate> sync;
    long n_frame0 = 0;
    std::optional<seqest::FrameLayout> layout;
    std::vector<sync::FrameTime> frame_times;
    std::optional<sync::FcEstimate> fc;

    void add(const std::string& key, const std::string& value);
    std::string text() const;
};

IdentifyReport identify(const SampleStream& y, const IdentifyConfig& cfg);

struct FrameSyncConfig {
    int d = 24;
    double beta_m = 5e-6;
    double epsilon = 0.02;
    int bs = 2;
    int max_frames = 20;
    std::optional<double> beta_prior;  // otherwise the blind coarse seed
    sync::FrameDetectConfig detect;
};

// Per-frame (n, beta) for every complete frame found by energy detection. y must be at Fs.
std::vector<seqest::FrameSource> sync_frames(const SampleStream& y, const sync::DemodContext& ctx, const Rational& Tf,
                                             const FrameSyncConfig& cfg);

struct SeqestConfig {
    int N = 1024;
    int Ng = 32;
    Rational Tf{1, 750};
    double Fs = 240e6;
    double Fc = 0.0;               // channel center; 0: first capture's center
    double capture_margin = 0.0;   // Hz; 0: two subcarriers
    FrameSyncConfig sync;
};

struct SeqestResult {
    std::vector<SampleStream> streams;  // resampled captures, nearest the channel center first
    std::optional<seqest::PssEstimate> pss;
    std::string pss_error;
    std::vector<seqest::DifferentialSequence> segments;
    std::optional<seqest::StitchResult> stitched;
    std::optional<seqest::SssResolution> sss;
    std::string sss_error;
    std::vector<std::vector<seqest::FrameSource>> frames;
    std::vector<std::pair<std::string, std::string>> entries;
};

// Captures may be at any rate; each is resampled to cfg.Fs. The one nearest the channel
// center (it must contain the DC gutter) seeds the CFO for the others.
SeqestResult run_seqest(const std::vector<SampleStream>& captures, const SeqestConfig& cfg);

}  // namespace ofdmid::pipeline
