#include "ofdmid/seqest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "ofdmid/constants.hpp"
#include "ofdmid/dsp.hpp"
#include "ofdmid/synth.hpp"

namespace ofdmid::seqest {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * kPi;

double signed_bin(int k, int N) { return k < N / 2 ? k : k - N; }

cplx quarter(int q) {
    static const cplx v[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    return v[((q % 4) + 4) % 4];
}

int quantize_quarter(cplx z) {
    const int q = static_cast<int>(std::lround(std::arg(z) / (kPi / 2)));
    return ((q % 4) + 4) % 4;
}

double symbol_span(const sync::DemodContext& ctx, double beta) {
    return static_cast<double>(ctx.N + ctx.Ng) / (1.0 - beta);
}

// Delay d (samples, |d| <= 1.5) such that B looks like A delayed by d.
double fine_delay(const CVec& A, const CVec& B, const std::vector<char>& mask) {
    const int N = static_cast<int>(A.size());
    CVec C(A.size());
    for (int k = 0; k < N; ++k)
        C[k] = mask.empty() || mask[k] ? std::conj(A[k]) * B[k] : cplx{0.0, 0.0};
    auto eval = [&](double d) {
        cplx acc{0.0, 0.0};
        for (int k = 0; k < N; ++k)
            if (C[k] != cplx{0.0, 0.0}) acc += C[k] * std::polar(1.0, kTwoPi * signed_bin(k, N) * d / N);
        return std::abs(acc);
    };
    constexpr double step = 0.02;
    double best_d = 0.0, best = -1.0;
    for (double d = -1.5; d <= 1.5 + 1e-9; d += step) {
        const double v = eval(d);
        if (v > best) {
            best = v;
            best_d = d;
        }
    }
    const double a = eval(best_d - step), e = eval(best_d + step);
    const double den = a - 2.0 * best + e;
    if (den < 0.0) best_d += 0.5 * step * (a - e) / den;
    return best_d;
}

CVec body_dft(const CVec& z, std::size_t start, int N) {
    return dsp::dft_unitary(std::span<const cplx>(z).subspan(start, static_cast<std::size_t>(N)));
}

// Per-frame fractional offsets relative to the set mean, from the symbol-1 spectra.
std::vector<double> relative_offsets(const std::vector<FrameSource>& frames, const sync::DemodContext& ctx,
                                     const std::vector<char>& mask) {
    std::vector<CVec> Z;
    for (const auto& f : frames)
        Z.push_back(sync::demod_symbol(*f.y, f.n + symbol_span(ctx, f.beta), f.beta, ctx));
    std::vector<double> d(frames.size(), 0.0);
    for (std::size_t m = 1; m < frames.size(); ++m) d[m] = fine_delay(Z[0], Z[m], mask);
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    for (auto& v : d) v -= mean;
    return d;
}

}  // namespace

std::vector<char> band_mask(int N, double Fs, double bandwidth, double center_offset, double capture_margin_hz,
                            bool include_nyquist) {
    std::vector<char> m(static_cast<std::size_t>(N), 0);
    const double F = Fs / N;
    const double half_bw = 0.5 * (bandwidth > 0.0 ? std::min(bandwidth, Fs) : Fs);
    for (int k = 0; k < N; ++k) {
        if (synth::is_gutter(k, N)) continue;
        if (k == N / 2 && !include_nyquist) continue;
        const double f = signed_bin(k, N) * F;
        // The band edge bin is seen at -Fs/2 by a capture on the low side.
        const double fa = k == N / 2 ? (center_offset > 0.0 ? -0.5 * Fs : 0.5 * Fs) : f;
        // No margin on a side where the capture reaches past the channel edge.
        const double lo = -half_bw + (-half_bw - center_offset > -0.5 * Fs ? capture_margin_hz : 0.0);
        const double hi = half_bw - (half_bw - center_offset < 0.5 * Fs ? capture_margin_hz : 0.0);
        if (fa + center_offset < lo || fa + center_offset > hi) continue;
        m[static_cast<std::size_t>(k)] = 1;
    }
    return m;
}

Repeatability find_sync_symbols(const std::vector<FrameSource>& frames, const sync::DemodContext& ctx, int n_symbols,
                                double threshold) {
    if (frames.size() < 2) throw StageError("find_sync_symbols", "need at least 2 synchronized frames");
    const int N = ctx.N, Ng = ctx.Ng;
    const auto L = static_cast<std::size_t>(N + Ng);
    const std::size_t M = frames.size();

    // Symbol spectra plus a CP-based noise estimate.
    std::vector<std::vector<CVec>> Z(M);
    double p_total = 0.0, p_sig = 0.0;
    std::size_t cnt = 0;
    for (int i = 0; i < n_symbols; ++i) {
        cplx cp_acc{0.0, 0.0};
        double pw = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            const auto& f = frames[m];
            const CVec z = sync::extract_corrected(*f.y, f.n + i * symbol_span(ctx, f.beta), f.beta, L, ctx);
            for (int t = 0; t < Ng; ++t) {
                cp_acc += z[t] * std::conj(z[t + N]);
                pw += 0.5 * (std::norm(z[t]) + std::norm(z[t + N]));
            }
            Z[m].push_back(body_dft(z, Ng, N));
        }
        p_total += pw;
        p_sig += std::abs(cp_acc);
        cnt += M * static_cast<std::size_t>(Ng);
    }
    const double sigma2 = std::max(0.0, (p_total - p_sig) / static_cast<double>(cnt));

    Repeatability out;
    const std::vector<char> all;
    for (int i = 0; i < n_symbols; ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t m = 0; m + 1 < M; ++m) {
            const CVec& A = Z[m][i];
            const CVec& B = Z[m + 1][i];
            const double d = fine_delay(A, B, all);
            cplx acc{0.0, 0.0};
            double ea = 0.0, eb = 0.0;
            for (int k = 0; k < N; ++k) {
                acc += std::conj(A[k]) * B[k] * std::polar(1.0, kTwoPi * signed_bin(k, N) * d / N);
                ea += std::norm(A[k]);
                eb += std::norm(B[k]);
            }
            num += std::abs(acc);
            ea = std::max(ea - N * sigma2, 1e-12 * ea);
            eb = std::max(eb - N * sigma2, 1e-12 * eb);
            den += std::sqrt(ea * eb);
        }
        const double s = den > 0.0 ? num / den : 0.0;
        out.score.push_back(s);
        if (s > threshold) out.flagged.push_back(i);
    }
    return out;
}

PssEstimate estimate_pss_subsequence(const std::vector<FrameSource>& frames, const sync::DemodContext& ctx) {
    if (frames.empty()) throw StageError("seqest", "no frames for PSS stacking");
    const int N = ctx.N, Ng = ctx.Ng, B = N / 8;
    for (const auto& f : frames) {
        const double bw = f.y->usable_bandwidth();
        if (bw < 0.9 * f.y->rate || std::fabs(ctx.center_offset) > 0.05 * f.y->rate)
            throw StageError("seqest", "PSS recovery needs a wideband capture; its content spans the whole of Fs (bandwidth " +
                                           std::to_string(bw / 1e6) + " MHz)");
    }

    const auto L = static_cast<std::size_t>(N + Ng);
    const auto mask = band_mask(N, frames[0].y->rate, frames[0].y->usable_bandwidth(), ctx.center_offset, 0.0);
    const auto offs = relative_offsets(frames, ctx, mask);

    std::vector<CVec> per_frame;
    cplx b01{0.0, 0.0};
    double e0 = 0.0, e1 = 0.0;
    for (std::size_t m = 0; m < frames.size(); ++m) {
        const auto& f = frames[m];
        const CVec z = sync::extract_corrected(*f.y, f.n + offs[m] / (1.0 - f.beta), f.beta, L, ctx);
        CVec s(static_cast<std::size_t>(B), cplx{0.0, 0.0});
        std::vector<int> c(static_cast<std::size_t>(B), 0);
        for (int t = 0; t < Ng; ++t) {
            const int j = B - Ng + t;
            s[j] -= z[t];
            ++c[j];
        }
        for (int b = 0; b < 8; ++b)
            for (int j = 0; j < B; ++j) {
                const cplx v = z[Ng + b * B + j];
                s[j] += b == 0 ? -v : v;
                ++c[j];
            }
        for (int j = 0; j < B; ++j) {
            s[j] /= static_cast<double>(c[j]);
            const cplx v0 = z[Ng + j], v1 = z[Ng + B + j];
            b01 += v0 * std::conj(v1);
            e0 += std::norm(v0);
            e1 += std::norm(v1);
        }
        per_frame.push_back(std::move(s));
    }

    // Two passes of per-frame phase alignment.
    auto align = [&](const CVec& ref) {
        std::vector<double> ph(per_frame.size(), 0.0);
        for (std::size_t m = 0; m < per_frame.size(); ++m) {
            cplx acc{0.0, 0.0};
            for (int j = 0; j < B; ++j) acc += per_frame[m][j] * std::conj(ref[j]);
            ph[m] = std::arg(acc);
        }
        return ph;
    };
    CVec S = per_frame[0];
    for (std::size_t m = 1; m < per_frame.size(); ++m) {
        cplx acc{0.0, 0.0};
        for (int j = 0; j < B; ++j) acc += per_frame[m][j] * std::conj(S[j]);
        const cplx rot = std::polar(1.0, -std::arg(acc));
        for (int j = 0; j < B; ++j) S[j] += per_frame[m][j] * rot;
    }
    const auto ph = align(S);
    std::fill(S.begin(), S.end(), cplx{0.0, 0.0});
    std::vector<double> mag_sum(static_cast<std::size_t>(B), 0.0);
    for (std::size_t m = 0; m < per_frame.size(); ++m) {
        const cplx rot = std::polar(1.0, -ph[m]);
        for (int j = 0; j < B; ++j) {
            S[j] += per_frame[m][j] * rot;
            mag_sum[j] += std::abs(per_frame[m][j]);
        }
    }

    PssEstimate out;
    double rl = 0.0;
    for (int j = 0; j < B; ++j) {
        rl += mag_sum[j] > 0.0 ? std::abs(S[j]) / mag_sum[j] : 0.0;
        out.raw.push_back(std::abs(S[j]) > 0.0 ? S[j] / std::abs(S[j]) : cplx{1.0, 0.0});
    }
    out.resultant_length = rl / B;
    out.block0_vs_block1 = e0 > 0.0 && e1 > 0.0 ? std::real(b01) / std::sqrt(e0 * e1) : 0.0;
    if (frames.size() > 1 && out.resultant_length < 0.5)
        throw StageError("seqest", "PSS stack not phase coherent (mean resultant length " +
                                       std::to_string(out.resultant_length) + ")");

    // Common rotation onto the pi/4 + q pi/2 lattice.
    cplx p4{0.0, 0.0};
    for (const auto& v : out.raw) p4 += std::pow(v, 4);
    const double phi = std::arg(-p4) / 4.0;
    const cplx off = std::polar(1.0, kPi / 4);
    for (const auto& v : out.raw) {
        const int q = quantize_quarter(v * std::polar(1.0, -phi) / off);
        out.decided.push_back(quarter(q) * off);
    }
    // p_l / p_{l-1} = j^{-b_l}; b = -1 -> bit 0.
    out.bits.assign(static_cast<std::size_t>(B), 0);
    for (int l = 1; l < B; ++l) {
        const int q = quantize_quarter(out.decided[l] * std::conj(out.decided[l - 1]));
        out.bits[l] = q == 3 ? 1 : 0;
    }
    out.hex = starlink::bits_lsb_to_hex(out.bits, static_cast<std::size_t>(B / 4));
    return out;
}

std::size_t DifferentialSequence::observed() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

DifferentialSequence estimate_sss_differential(const std::vector<CVec>& rows, const std::vector<char>& mask) {
    DifferentialSequence d;
    if (rows.empty()) return d;
    const int N = static_cast<int>(rows[0].size());
    d.N = N;
    d.values.assign(static_cast<std::size_t>(N - 1), cplx{0.0, 0.0});
    d.mask.assign(static_cast<std::size_t>(N - 1), 0);
    d.confidence.assign(static_cast<std::size_t>(N - 1), 0.0);
    for (int k = 0; k + 1 < N; ++k) {
        if (!mask[k] || !mask[k + 1]) continue;
        cplx acc{0.0, 0.0};
        double mag = 0.0;
        for (const auto& Y : rows) {
            // Per-frame amplitude removed so a loud frame can't dominate.
            const double a = std::abs(Y[k]) * std::abs(Y[k + 1]);
            if (a <= 0.0) continue;
            acc += std::conj(Y[k + 1]) * Y[k] / a;
            mag += 1.0;
        }
        if (mag == 0.0) continue;
        const int q = quantize_quarter(acc);
        const double dev = std::remainder(std::arg(acc) - q * kPi / 2, kTwoPi);
        d.values[k] = quarter(q);
        d.mask[k] = 1;
        d.confidence[k] = std::abs(acc) / mag * std::cos(dev);
    }
    return d;
}

StitchResult stitch_bands(const std::vector<DifferentialSequence>& segments, std::size_t min_overlap,
                          double min_agreement) {
    if (segments.empty()) throw StageError("stitch_bands", "no segments");
    const int N = segments[0].N;
    for (const auto& s : segments)
        if (s.N != N) throw StageError("stitch_bands", "segments disagree on N");

    auto low_edge = [&](const DifferentialSequence& s) {
        double lo = std::numeric_limits<double>::infinity();
        for (int k = 0; k + 1 < N; ++k)
            if (s.mask[k]) lo = std::min(lo, signed_bin(k, N));
        return lo;
    };
    std::vector<std::size_t> order(segments.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> lo(segments.size());
    for (std::size_t i = 0; i < segments.size(); ++i) lo[i] = low_edge(segments[i]);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (lo[a] != lo[b]) return lo[a] < lo[b];
        return segments[a].observed() > segments[b].observed();
    });

    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const auto& a = segments[order[i]];
        const auto& b = segments[order[i + 1]];
        std::size_t shared = 0, agree = 0;
        for (int k = 0; k + 1 < N; ++k)
            if (a.mask[k] && b.mask[k]) {
                ++shared;
                if (std::abs(a.values[k] - b.values[k]) < 1e-9) ++agree;
            }
        if (shared < min_overlap)
            throw StageError("stitch_bands", "insufficient overlap between segments (" + std::to_string(shared) +
                                                 " shared pairs)");
        if (static_cast<double>(agree) < min_agreement * static_cast<double>(shared))
            throw StageError("stitch_bands", "irreconcilable conflict in overlap (" + std::to_string(agree) + "/" +
                                                 std::to_string(shared) + " agree)");
    }

    StitchResult out;
    auto& r = out.seq;
    r.N = N;
    r.values.assign(static_cast<std::size_t>(N - 1), cplx{0.0, 0.0});
    r.mask.assign(static_cast<std::size_t>(N - 1), 0);
    r.confidence.assign(static_cast<std::size_t>(N - 1), -std::numeric_limits<double>::infinity());
    for (std::size_t i : order) {
        const auto& s = segments[i];
        for (int k = 0; k + 1 < N; ++k) {
            if (!s.mask[k] || s.confidence[k] <= r.confidence[k]) continue;
            r.values[k] = s.values[k];
            r.confidence[k] = s.confidence[k];
            r.mask[k] = 1;
        }
    }
    for (int k = 0; k + 1 < N; ++k) {
        if (!r.mask[k]) r.confidence[k] = 0.0;
        if (k >= 2 && k <= N - 4 && !r.mask[k]) out.unobserved.push_back(k);
    }
    return out;
}

SssResolution resolve_sss_ambiguity(const DifferentialSequence& diffs, const std::vector<SssCapture>& captures,
                                    double min_margin_db, double min_quality) {
    const int N = diffs.N;
    const int H = N / 2;
    if (captures.empty()) throw StageError("seqest", "no captures for SSS ambiguity resolution");
    // Chains: A covers 2..H-1 anchored at X_2 = 1, B covers H+1..N-3 anchored at X_{H+1} = 1.
    CVec XA(static_cast<std::size_t>(N), cplx{0.0, 0.0}), XB(XA);
    XA[2] = 1.0;
    for (int k = 2; k < H - 1; ++k) {
        if (!diffs.mask[k]) throw StageError("seqest", "differential " + std::to_string(k) + " unobserved");
        XA[k + 1] = XA[k] * std::conj(diffs.values[k]);
    }
    XB[H + 1] = 1.0;
    for (int k = H + 1; k < N - 3; ++k) {
        if (!diffs.mask[k]) throw StageError("seqest", "differential " + std::to_string(k) + " unobserved");
        XB[k + 1] = XB[k] * std::conj(diffs.values[k]);
    }

    CVec P = dsp::dft_unitary(std::span<const cplx>(synth::gen_pss(N, captures[0].ctx.Ng)).subspan(
        static_cast<std::size_t>(captures[0].ctx.Ng)));

    struct Obs {
        cplx a, bA, bB, bM;
        double na, nx;
    };
    std::vector<Obs> obs;
    for (const auto& cap : captures) {
        const auto& ctx = cap.ctx;
        const auto mask =
            band_mask(N, cap.y->rate, cap.y->usable_bandwidth(), ctx.center_offset, cap.capture_margin_hz, true);
        double na = 0.0, nx = 0.0;
        for (int k = 0; k < N; ++k)
            if (mask[k]) {
                na += std::norm(P[k]);
                nx += std::norm(XA[k]) + std::norm(XB[k]) + (k == H ? 1.0 : 0.0);
            }
        const auto L = static_cast<std::size_t>(2 * (N + ctx.Ng));
        for (const auto& f : cap.frames) {
            const CVec z = sync::extract_corrected(*cap.y, f.n, f.beta, L, ctx);
            CVec Z0 = body_dft(z, static_cast<std::size_t>(ctx.Ng), N);
            CVec Z1 = body_dft(z, static_cast<std::size_t>(2 * ctx.Ng + N), N);
            const double d = fine_delay(P, Z0, mask);
            for (int k = 0; k < N; ++k) {
                const cplx r = std::polar(1.0, kTwoPi * signed_bin(k, N) * d / N);
                Z0[k] *= r;
                Z1[k] *= r;
            }
            Obs o{};
            o.na = na;
            o.nx = nx;
            for (int k = 0; k < N; ++k) {
                if (!mask[k]) continue;
                o.a += std::conj(P[k]) * Z0[k];
                o.bA += std::conj(XA[k]) * Z1[k];
                o.bB += std::conj(XB[k]) * Z1[k];
                if (k == H) o.bM += Z1[k];
            }
            obs.push_back(o);
        }
    }
    if (obs.empty()) throw StageError("seqest", "no frames for SSS ambiguity resolution");

    // Candidate X = XB + wA XA + wM e_H; b = bB + conj(wA) bA + conj(wM) bM.
    auto bval = [](const Obs& o, int ia, int im) {
        return o.bB + std::conj(quarter(ia)) * o.bA + std::conj(quarter(im)) * o.bM;
    };
    SssResolution out;
    out.scores.assign(16, 0.0);
    int best = 0;
    for (int c = 0; c < 16; ++c) {
        double s = 0.0;
        cplx cross{0.0, 0.0};
        for (const auto& o : obs) {
            const cplx b = bval(o, c / 4, c % 4);
            s += std::norm(o.a) + std::norm(b);
            cross += std::conj(o.a) * b;
        }
        out.scores[c] = s + 2.0 * std::abs(cross);
        if (out.scores[c] > out.scores[best]) best = c;
    }
    const int ia = best / 4, im = best % 4;
    out.choice_x2 = ia;
    out.choice_xm = im;

    // Per-unknown decision statistics against everything else held at the best candidate.
    cplx cross{0.0, 0.0};
    for (const auto& o : obs) cross += std::conj(o.a) * bval(o, ia, im);
    const cplx psi = std::polar(1.0, std::arg(cross));
    auto margin = [&](bool forA) {
        cplx zs{0.0, 0.0};
        for (const auto& o : obs) {
            const cplx part = forA ? o.bA : o.bM;
            const cplx rest = o.a * psi + bval(o, ia, im) - std::conj(quarter(forA ? ia : im)) * part;
            zs += part * std::conj(rest);
        }
        std::vector<double> proj;
        for (int q = 0; q < 4; ++q) proj.push_back(std::real(std::conj(quarter(q)) * zs));
        std::sort(proj.rbegin(), proj.rend());
        if (proj[0] <= 0.0) return 0.0;
        if (proj[1] <= 0.0) return std::numeric_limits<double>::infinity();
        return 10.0 * std::log10(proj[0] / proj[1]);
    };
    out.margin_db = std::min(margin(true), margin(false));

    double qa = 0.0, qb = 0.0;
    for (const auto& o : obs) {
        qa += std::abs(o.a) / std::sqrt(o.na);
        qb += std::abs(bval(o, ia, im)) / std::sqrt(o.nx);
    }
    out.quality = qa > 0.0 ? qb / qa : 0.0;

    out.coeffs.assign(static_cast<std::size_t>(N), cplx{0.0, 0.0});
    for (int k = 0; k < N; ++k) out.coeffs[k] = XB[k] + quarter(ia) * XA[k] + (k == H ? quarter(im) : cplx{0.0, 0.0});
    // Global phase: s_2 = 3.
    const cplx rot = quarter(3) / out.coeffs[2];
    out.digits.assign(static_cast<std::size_t>(N), -1);
    for (int k = 0; k < N; ++k) {
        if (synth::is_gutter(k, N)) continue;
        out.coeffs[k] *= rot;
        out.digits[k] = quantize_quarter(out.coeffs[k]);
    }
    out.hex = sss_hex(out.digits);

    if (out.quality < min_quality)
        throw StageError("seqest", "SSS candidate mismatch: symbol-1 correlation is " + std::to_string(out.quality) +
                                       " of the PSS correlation");
    if (out.margin_db < min_margin_db)
        throw StageError("seqest", "SSS ambiguity unresolved: margin " + std::to_string(out.margin_db) + " dB");
    return out;
}

std::string sss_hex(const std::vector<int>& digits) {
    const int N = static_cast<int>(digits.size());
    std::vector<int> bits;
    for (int k = 2; k <= N - 3; ++k) {
        const int s = std::max(0, digits[k]);
        bits.push_back(s & 1);
        bits.push_back((s >> 1) & 1);
    }
    return starlink::bits_lsb_to_hex(bits, bits.size() / 4);
}

FrameLayout frame_layout(const Rational& Tf, int N, int Ng, const Rational& Fs) {
    FrameLayout l;
    l.Tsym = Rational(N + Ng) / Fs;
    const Rational q = Tf / l.Tsym;
    l.Nsf = static_cast<int>(q.numerator() / q.denominator()) - 1;
    l.Nsfd = l.Nsf - 4;
    l.Tfg = Tf - Rational(l.Nsf) * l.Tsym;
    return l;
}

}  // namespace ofdmid::seqest
