#include "ofdmid/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ofdmid::pipeline {

namespace {

std::string num(double v, int prec = 10) {
    std::ostringstream o;
    o.precision(prec);
    o << v;
    return o.str();
}

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream o;
    for (std::size_t i = 0; i < v.size(); ++i) o << (i ? "," : "") << v[i];
    return o.str();
}

const std::vector<std::pair<Stage, std::string>> kStages = {
    {Stage::N, "N"},           {Stage::Fs, "Fs"},     {Stage::Ng, "Ng"},         {Stage::Tf, "Tf"},
    {Stage::Detect, "detect"}, {Stage::Sync, "sync"}, {Stage::Layout, "layout"}, {Stage::Fc, "Fc"},
};

}  // namespace

Stage parse_stage(const std::string& s) {
    for (const auto& [st, name] : kStages)
        if (name == s) return st;
    throw std::invalid_argument("unknown stage '" + s + "'");
}

std::string stage_name(Stage s) {
    for (const auto& [st, name] : kStages)
        if (st == s) return name;
    return "?";
}

void IdentifyReport::add(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }

std::string IdentifyReport::text() const {
    std::ostringstream o;
    for (const auto& [k, v] : entries) o << k << "=" << v << "\n";
    return o.str();
}

IdentifyReport identify(const SampleStream& y_in, const IdentifyConfig& cfg) {
    IdentifyReport r;
    const double Fc_bar = cfg.Fc_bar > 0.0 ? cfg.Fc_bar : y_in.center;
    r.add("capture.rate", num(y_in.rate));
    r.add("capture.samples", std::to_string(y_in.size()));
    r.add("capture.bandwidth", num(y_in.usable_bandwidth()));
    r.add("config.Fs_bar", num(cfg.Fs_bar));
    r.add("config.Fc_bar", num(Fc_bar, 15));

    Stage current = Stage::N;
    auto done = [&](Stage s) { return s == cfg.last; };
    try {
        // N and Fs
        const auto cands = cyclo::build_candidates(y_in.rate, cfg.Fs_bar, cfg.cyclic.p);
        r.add("N.candidates", join(cands.S));
        r.N = cyclo::estimate_N(y_in, cfg.Fs_bar, cfg.cyclic);
        {
            std::ostringstream att;
            for (const auto& a : r.N->attempts)
                att << (att.tellp() > 0 ? ";" : "") << "b=" << a.b << ":tau=" << a.tau_star << ":ratio=" << num(a.ratio, 6)
                    << ":" << (a.accepted ? "accepted" : "rejected");
            r.add("N.attempts", att.str());
        }
        r.add("N.validation", "pass");
        r.add("N.ratio", num(r.N->ratio, 6));
        r.add("N.Nr", std::to_string(r.N->Nr));
        r.add("N", std::to_string(r.N->N));
        r.csv["r0_trace.csv"] = cyclo::trace_csv(r.N->trace, "tau", "abs_R0");
        if (done(Stage::N)) return r;

        current = Stage::Fs;
        r.Fs_hat = cyclo::estimate_Fs(r.N->N, r.N->Nr, y_in.rate);
        r.add("Fs", num(r.Fs_hat, 12));
        if (done(Stage::Fs)) return r;

        current = Stage::Ng;
        const SampleStream y = cyclo::resample(y_in, r.Fs_hat, y_in.usable_bandwidth());
        const int N = r.N->N;
        r.add("Ng.candidates", join(cyclo::ng_candidates(N, r.Fs_hat, cfg.Td)));
        auto ccfg = cfg.cyclic;
        if (ccfg.harmonic_step <= 0.0) ccfg.harmonic_step = 0.01;
        r.Ng = cyclo::estimate_Ng(y, N, ccfg, cfg.Td);
        r.add("Ng.scores", join(r.Ng->score));
        r.add("Ng.margin", num(r.Ng->margin, 6));
        r.add("Ng", std::to_string(r.Ng->Ng));
        {
            std::ostringstream o;
            o.precision(10);
            o << "alpha_norm,sum_abs_R\n";
            for (const auto& [a, v] : r.Ng->harmonic_trace) o << a << "," << v << "\n";
            r.csv["ng_harmonics.csv"] = o.str();
        }
        if (done(Stage::Ng)) return r;
        const int Ng = r.Ng->Ng;

        current = Stage::Tf;
        cyclo::TfEstimate tf_diag;
        auto tf_csv = [&](const cyclo::TfEstimate& t) {
            std::ostringstream o;
            o.precision(10);
            o << "tau,abs_R0\n";
            for (std::size_t i = 0; i < t.trace.size(); ++i) o << t.lag_lo + static_cast<long>(i) << "," << t.trace[i] << "\n";
            r.csv["tf_trace.csv"] = o.str();
        };
        try {
            r.Tf = cyclo::estimate_Tf(y, N, Ng, cfg.Tm, cfg.tf_M, &tf_diag);
        } catch (const StageError&) {
            if (!tf_diag.trace.empty()) tf_csv(tf_diag);
            throw;
        }
        tf_csv(*r.Tf);
        r.add("Tf.tau_star", std::to_string(r.Tf->tau_star));
        r.add("Tf.peak_to_median", num(r.Tf->peak_to_median, 6));
        r.add("Tf.threshold", num(r.Tf->threshold, 6));
        r.add("Tf.frame_rate", std::to_string(r.Tf->frame_rate));
        r.add("Tf", format_rational(r.Tf->Tf));
        if (done(Stage::Tf)) return r;

        current = Stage::Detect;
        r.starts = sync::detect_frame_start(y, N, Ng, cfg.detect);
        if (r.starts.empty() || (r.starts.size() == 1 && r.starts[0] == 0)) {
            if (!cfg.prior_start)
                throw StageError("detect_frame_start", "no inter-frame gaps detected; supply prior timing");
            r.starts = {*cfg.prior_start};
        }
        r.add("detect.starts", join(r.starts));
        if (done(Stage::Detect)) return r;

        current = Stage::Sync;
        sync::DemodContext ctx{N, Ng, Fc_bar, 0.0};
        const double Tsym_s = static_cast<double>(N + Ng);
        const double frame_samples = to_double(r.Tf->Tf) * r.Fs_hat;
        // First frame whose symbols lie fully inside the capture.
        long s0 = -1;
        for (long s : r.starts)
            if (s > 0 && static_cast<double>(s) + 4.0 * Tsym_s + 2.0 * cfg.d < static_cast<double>(y.size())) {
                s0 = s;
                break;
            }
        if (s0 < 0) throw StageError("estimate_sync", "no complete frame after a detected edge");
        std::vector<long> sym_starts;
        for (const long s : r.starts)
            for (int i = 1; i <= 3; ++i) sym_starts.push_back(s + static_cast<long>(i * Tsym_s));
        r.beta_coarse = sync::coarse_beta(y, sym_starts, ctx);
        r.add("sync.beta_coarse", num(r.beta_coarse, 8));

        sync::SyncSearchSpace space;
        space.n_center = s0 + static_cast<long>(Tsym_s);
        space.d = cfg.d;
        space.beta_prior = r.beta_coarse;
        space.beta_m = cfg.beta_m;
        space.stride = sync::SyncSearchSpace::stride_for(cfg.epsilon, r.Fs_hat, N, Fc_bar);
        const auto mask = sync::default_mask(y, ctx);
        r.sync = sync::estimate_sync(y, space, ctx, cfg.bs, mask);
        r.n_frame0 = r.sync->n - static_cast<long>(std::lround(Tsym_s / (1.0 - r.sync->beta)));
        r.add("sync.stride", num(space.stride, 6));
        r.add("sync.grid", std::to_string(space.n_values().size()) + "x" + std::to_string(space.beta_values().size()));
        r.add("sync.n_symbol1", std::to_string(r.sync->n));
        r.add("sync.n_frame", std::to_string(r.n_frame0));
        r.add("sync.beta", num(r.sync->beta, 8));
        r.add("sync.score_db", num(10.0 * std::log10(std::max(r.sync->score, 1e-30)), 6));
        {
            const auto km = sync::kmeans(
                [&] {
                    CVec pts;
                    for (int k = 0; k < N; ++k)
                        if (mask[k]) pts.push_back(r.sync->constellation[k]);
                    return pts;
                }(),
                1 << cfg.bs);
            std::ostringstream o;
            o.precision(8);
            o << "k,re,im,cluster\n";
            std::size_t j = 0;
            for (int k = 0; k < N; ++k)
                if (mask[k]) {
                    o << k << "," << r.sync->constellation[k].real() << "," << r.sync->constellation[k].imag() << ","
                      << km.labels[j++] << "\n";
                }
            r.csv["constellation.csv"] = o.str();
        }
        if (done(Stage::Sync)) return r;

        current = Stage::Layout;
        r.layout = seqest::frame_layout(r.Tf->Tf, N, Ng, Rational(static_cast<std::int64_t>(std::llround(r.Fs_hat))));
        r.add("Nsf", std::to_string(r.layout->Nsf));
        r.add("Nsfd", std::to_string(r.layout->Nsfd));
        r.add("Tfg", format_rational(r.layout->Tfg));
        r.add("Tfg_us", num(to_double(r.layout->Tfg) * 1e6, 8));
        if (done(Stage::Layout)) return r;

        current = Stage::Fc;
        // Refine each detected frame around its energy edge. Frame steps come from the detector, not from
        // the derotation beta, which also carries any tuning error.
        sync::SyncSearchSpace fine;
        fine.d = cfg.d;
        fine.beta_prior = r.sync->beta;
        fine.stride = space.stride;
        fine.beta_m = 2.0 * space.stride;
        std::vector<int> ms, dropped;
        for (long s : r.starts) {
            const int m = static_cast<int>(std::lround(static_cast<double>(s - s0) / frame_samples));
            if (m < 0 || std::find(ms.begin(), ms.end(), m) != ms.end()) continue;
            if (static_cast<int>(ms.size()) >= cfg.fc_frames) break;
            if (to_double(r.Tf->Tf) * m > 1.0) break;
            fine.n_center = s + static_cast<long>(Tsym_s);
            if (fine.n_center - fine.d < 0 ||
                static_cast<double>(fine.n_center + fine.d) + 2.0 * Tsym_s >= static_cast<double>(y.size()))
                continue;
            ms.push_back(m);
            const auto e = m == 0 ? *r.sync : sync::estimate_sync(y, fine, ctx, cfg.bs, mask);
            // A lock on the window edge or far below the reference frame is a bad edge, not a frame time.
            if (m != 0 && (std::abs(e.n - fine.n_center) >= fine.d || e.score < 0.25 * r.sync->score)) {
                dropped.push_back(m);
                continue;
            }
            r.frame_times.push_back({m, static_cast<double>(e.n) - Tsym_s / (1.0 - e.beta)});
        }
        if (!dropped.empty()) r.add("Fc.dropped", join(dropped));
        {
            std::ostringstream o;
            for (const auto& f : r.frame_times) o << (o.tellp() > 0 ? ";" : "") << f.m << ":" << num(f.n, 12);
            r.add("Fc.frames", o.str());
        }
        r.fc = sync::estimate_fc(r.frame_times, r.sync->beta, Fc_bar, r.Tf->Tf, r.Fs_hat);
        r.add("Fc.a1", num(r.fc->a1, 14));
        r.add("Fc.beta_bar", num(r.fc->beta_bar, 8));
        r.add("Fc", num(r.fc->Fc, 15));
    } catch (const StageError& e) {
        r.ok = false;
        r.failed_stage = e.stage();
        r.error = e.what();
        r.add("failed_stage", e.stage());
        r.add("error", e.what());
    } catch (const std::exception& e) {
        r.ok = false;
        r.failed_stage = stage_name(current);
        r.error = e.what();
        r.add("failed_stage", r.failed_stage);
        r.add("error", e.what());
    }
    return r;
}

}  // namespace ofdmid::pipeline

namespace ofdmid::pipeline {

std::vector<seqest::FrameSource> sync_frames(const SampleStream& y, const sync::DemodContext& ctx, const Rational& Tf,
                                             const FrameSyncConfig& cfg) {
    const int N = ctx.N, Ng = ctx.Ng;
    const double Tsym_s = static_cast<double>(N + Ng);
    const auto starts = sync::detect_frame_start(y, N, Ng, cfg.detect);
    std::vector<long> usable;
    for (long s : starts)
        if (s > 2L * cfg.d && static_cast<double>(s) + 4.0 * Tsym_s + 2.0 * cfg.d < static_cast<double>(y.size()))
            usable.push_back(s);
    if (usable.empty()) throw StageError("sync_frames", "no complete frame with a leading gap");

    double prior;
    if (cfg.beta_prior) {
        prior = *cfg.beta_prior;
    } else {
        std::vector<long> sym;
        for (long s : usable)
            for (int i = 1; i <= 3; ++i) sym.push_back(s + static_cast<long>(i * Tsym_s));
        prior = sync::coarse_beta(y, sym, ctx);
    }
    const auto mask = sync::default_mask(y, ctx);
    sync::SyncSearchSpace space;
    space.n_center = usable[0] + static_cast<long>(Tsym_s);
    space.d = cfg.d;
    space.beta_prior = prior;
    space.beta_m = cfg.beta_m;
    space.stride = sync::SyncSearchSpace::stride_for(cfg.epsilon, y.rate, N, ctx.Fc_bar + ctx.center_offset);
    const auto first = sync::estimate_sync(y, space, ctx, cfg.bs, mask);

    const double step = to_double(Tf) * y.rate / (1.0 - first.beta);
    const double n1 = static_cast<double>(first.n);
    std::vector<seqest::FrameSource> out;
    out.push_back({&y, n1 - Tsym_s / (1.0 - first.beta), first.beta});
    std::vector<long> seen{0};
    sync::SyncSearchSpace fine = space;
    fine.d = 3;
    fine.beta_prior = first.beta;
    fine.beta_m = 2.0 * space.stride;
    for (std::size_t i = 1; i < usable.size() && static_cast<int>(out.size()) < cfg.max_frames; ++i) {
        const long m = std::lround((static_cast<double>(usable[i]) + Tsym_s - n1) / step);
        if (m <= 0 || std::find(seen.begin(), seen.end(), m) != seen.end()) continue;
        seen.push_back(m);
        fine.n_center = std::lround(n1 + static_cast<double>(m) * step);
        if (static_cast<double>(fine.n_center + fine.d) + 3.0 * Tsym_s >= static_cast<double>(y.size())) break;
        const auto e = sync::estimate_sync(y, fine, ctx, cfg.bs, mask);
        out.push_back({&y, static_cast<double>(e.n) - Tsym_s / (1.0 - e.beta), e.beta});
    }
    return out;
}

SeqestResult run_seqest(const std::vector<SampleStream>& captures, const SeqestConfig& cfg) {
    if (captures.empty()) throw std::invalid_argument("run_seqest: no captures");
    SeqestResult r;
    const double Fc = cfg.Fc > 0.0 ? cfg.Fc : captures[0].center;
    const double F = cfg.Fs / cfg.N;
    const double margin = cfg.capture_margin > 0.0 ? cfg.capture_margin : 2.0 * F;

    std::vector<std::size_t> order(captures.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(captures[a].center - Fc) < std::fabs(captures[b].center - Fc);
    });

    // FrameSource pointers refer into r.streams; its buffer survives moves of the result.
    auto& keep = r.streams;
    keep.reserve(captures.size());
    std::vector<sync::DemodContext> ctxs;
    for (std::size_t i : order) {
        keep.push_back(cyclo::resample(captures[i], cfg.Fs, captures[i].usable_bandwidth()));
        ctxs.push_back({cfg.N, cfg.Ng, captures[i].center, Fc - captures[i].center});
    }
    if (std::fabs(ctxs[0].center_offset) > 0.5 * keep[0].usable_bandwidth() - 4.0 * F)
        throw StageError("seqest", "no capture covers the channel center (needed to seed the CFO)");

    std::optional<double> beta_ref;
    for (std::size_t c = 0; c < keep.size(); ++c) {
        auto scfg = cfg.sync;
        if (beta_ref) scfg.beta_prior = *beta_ref;
        r.frames.push_back(sync_frames(keep[c], ctxs[c], cfg.Tf, scfg));
        if (!beta_ref) {
            double acc = 0.0;
            for (const auto& f : r.frames.back()) acc += f.beta;
            beta_ref = acc / static_cast<double>(r.frames.back().size());
        }
        std::ostringstream o;
        o.precision(10);
        o << "capture" << order[c];
        r.entries.emplace_back(o.str() + ".center_offset", num(ctxs[c].center_offset));
        r.entries.emplace_back(o.str() + ".frames", std::to_string(r.frames.back().size()));
        r.entries.emplace_back(o.str() + ".beta", num(r.frames.back()[0].beta, 8));
    }

    try {
        r.pss = seqest::estimate_pss_subsequence(r.frames[0], ctxs[0]);
        r.entries.emplace_back("pss.resultant_length", num(r.pss->resultant_length, 6));
        r.entries.emplace_back("pss.block0_vs_block1", num(r.pss->block0_vs_block1, 6));
        r.entries.emplace_back("pss.hex", r.pss->hex);
    } catch (const StageError& e) {
        r.pss_error = e.what();
        r.entries.emplace_back("pss.error", e.what());
    }

    try {
        std::vector<seqest::SssCapture> caps;
        for (std::size_t c = 0; c < keep.size(); ++c) {
            const auto bm =
                seqest::band_mask(cfg.N, cfg.Fs, keep[c].usable_bandwidth(), ctxs[c].center_offset, margin);
            std::vector<CVec> rows;
            for (const auto& f : r.frames[c])
                rows.push_back(sync::demod_symbol(keep[c], f.n + (cfg.N + cfg.Ng) / (1.0 - f.beta), f.beta, ctxs[c]));
            r.segments.push_back(seqest::estimate_sss_differential(rows, bm));
            caps.push_back({&keep[c], ctxs[c], r.frames[c], margin});
        }
        r.stitched = seqest::stitch_bands(r.segments);
        r.entries.emplace_back("sss.observed_pairs", std::to_string(r.stitched->seq.observed()));
        {
            std::ostringstream o;
            for (std::size_t i = 0; i < r.stitched->unobserved.size(); ++i)
                o << (i ? "," : "") << r.stitched->unobserved[i];
            r.entries.emplace_back("sss.unobserved_pairs", o.str());
        }
        r.sss = seqest::resolve_sss_ambiguity(r.stitched->seq, caps);
        r.entries.emplace_back("sss.margin_db", num(r.sss->margin_db, 6));
        r.entries.emplace_back("sss.quality", num(r.sss->quality, 6));
        r.entries.emplace_back("sss.hex", r.sss->hex);
    } catch (const StageError& e) {
        r.sss_error = e.what();
        r.entries.emplace_back("sss.error", e.what());
    }
    return r;
}

}  // namespace ofdmid::pipeline
