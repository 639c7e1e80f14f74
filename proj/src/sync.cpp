#include "ofdmid/sync.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "ofdmid/dsp.hpp"

namespace ofdmid::sync {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool gutter(int k, int N) { return k == 0 || k == 1 || k == N - 2 || k == N - 1; }

double signed_bin(int k, int N) { return k < N / 2 ? k : k - N; }

}  // namespace

CVec extract_corrected(const SampleStream& y, double n, double beta, std::size_t len, const DemodContext& ctx) {
    const double rate = y.rate;
    const double span = static_cast<double>(len) / (1.0 - beta);
    if (n < 0.0 || n + span > static_cast<double>(y.size()))
        throw StageError("demod", "symbol window outside the capture");
    const double cutoff = 0.5 * std::min(y.usable_bandwidth(), rate);
    const dsp::SincKernel& k = dsp::compact_kernel(cutoff);
    const double out_rate = (1.0 - beta) * rate;
    CVec z = dsp::interpolate(y.samples, rate, 0.0, out_rate, n / rate, len, k);
    const double fd = beta * (ctx.Fc_bar + ctx.center_offset) - ctx.center_offset;
    const double step = fd / out_rate;
    // Phase referenced to stream sample 0, so consecutive symbols stay coherent.
    const double cyc0 = std::fmod(fd * n / rate, 1.0);
    for (std::size_t i = 0; i < len; ++i) {
        const double cyc = cyc0 + std::fmod(step * static_cast<double>(i), 1.0);
        z[i] *= std::polar(1.0, kTwoPi * cyc);
    }
    return z;
}

CVec demod_symbol(const SampleStream& y, double n, double beta, const DemodContext& ctx) {
    const CVec z = extract_corrected(y, n, beta, static_cast<std::size_t>(ctx.N + ctx.Ng), ctx);
    return dsp::dft_unitary(std::span<const cplx>(z).subspan(static_cast<std::size_t>(ctx.Ng)));
}

std::vector<char> usable_mask(int N, double Fs, double bandwidth, double center_offset, double edge_margin_hz) {
    std::vector<char> m(static_cast<std::size_t>(N), 0);
    const double F = Fs / N;
    const double half_bw = 0.5 * (bandwidth > 0.0 ? bandwidth : Fs);
    for (int k = 0; k < N; ++k) {
        if (gutter(k, N) || k == N / 2) continue;
        const double f = signed_bin(k, N) * F;
        if (std::fabs(f) > 0.5 * Fs - edge_margin_hz) continue;
        if (std::fabs(f + center_offset) > half_bw - edge_margin_hz) continue;
        m[static_cast<std::size_t>(k)] = 1;
    }
    return m;
}

std::vector<char> default_mask(const SampleStream& y, const DemodContext& ctx) {
    const double F = y.rate / ctx.N;
    return usable_mask(ctx.N, y.rate, y.usable_bandwidth(), ctx.center_offset, 8.0 * F);
}

KMeansResult kmeans(std::span<const cplx> pts, int k, const KMeansConfig& cfg) {
    const std::size_t n = pts.size();
    if (k < 1 || n < static_cast<std::size_t>(k)) throw StageError("kmeans", "fewer points than clusters");
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    std::vector<int> labels(n);
    std::vector<double> d2(n);
    CVec c(static_cast<std::size_t>(k));
    CVec sum(static_cast<std::size_t>(k));
    std::vector<std::size_t> cnt(static_cast<std::size_t>(k));

    for (int r = 0; r < cfg.restarts; ++r) {
        std::mt19937_64 rng(cfg.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(r));
        c[0] = pts[rng() % n];
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::norm(pts[i] - c[0]);
        // Greedy k-means++: several draws per center, keep the one that lowers the potential most.
        const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));
        for (int j = 1; j < k; ++j) {
            double tot = 0.0;
            for (double v : d2) tot += v;
            std::size_t pick = rng() % n;
            double pick_pot = std::numeric_limits<double>::infinity();
            for (int t = 0; t < trials; ++t) {
                std::size_t cand = rng() % n;
                if (tot > 0.0) {
                    double u = std::uniform_real_distribution<double>(0.0, tot)(rng);
                    for (std::size_t i = 0; i < n; ++i) {
                        u -= d2[i];
                        if (u <= 0.0) {
                            cand = i;
                            break;
                        }
                    }
                }
                double pot = 0.0;
                for (std::size_t i = 0; i < n; ++i) pot += std::min(d2[i], std::norm(pts[i] - pts[cand]));
                if (pot < pick_pot) {
                    pick_pot = pot;
                    pick = cand;
                }
            }
            c[j] = pts[pick];
            for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], std::norm(pts[i] - c[j]));
        }

        bool empty = false;
        std::fill(labels.begin(), labels.end(), -1);
        for (int it = 0; it < cfg.max_iter; ++it) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                int bj = 0;
                double bd = std::norm(pts[i] - c[0]);
                for (int j = 1; j < k; ++j) {
                    const double d = std::norm(pts[i] - c[j]);
                    if (d < bd) {
                        bd = d;
                        bj = j;
                    }
                }
                if (labels[i] != bj) {
                    labels[i] = bj;
                    changed = true;
                }
            }
            std::fill(sum.begin(), sum.end(), cplx{0.0, 0.0});
            std::fill(cnt.begin(), cnt.end(), 0);
            for (std::size_t i = 0; i < n; ++i) {
                sum[labels[i]] += pts[i];
                ++cnt[labels[i]];
            }
            empty = false;
            for (int j = 0; j < k; ++j) {
                if (cnt[j] == 0) {
                    empty = true;
                    break;
                }
                c[j] = sum[j] / static_cast<double>(cnt[j]);
            }
            if (empty || !changed) break;
        }
        if (empty) continue;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) inertia += std::norm(pts[i] - c[labels[i]]);
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.centroids = c;
            best.labels = labels;
        }
    }
    if (best.centroids.empty()) throw StageError("kmeans", "degenerate clustering: empty cluster after all restarts");

    best.variance.assign(static_cast<std::size_t>(k), 0.0);
    std::vector<std::size_t> m(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
        best.variance[best.labels[i]] += std::norm(pts[i] - best.centroids[best.labels[i]]);
        ++m[best.labels[i]];
    }
    for (int j = 0; j < k; ++j) best.variance[j] /= 2.0 * static_cast<double>(m[j]);
    return best;
}

double cluster_score(const KMeansResult& r) {
    double scale = 0.0;
    for (const auto& c : r.centroids) scale += std::norm(c);
    const double floor = 1e-15 * scale / static_cast<double>(r.centroids.size());
    double s = 0.0;
    for (std::size_t j = 0; j < r.centroids.size(); ++j)
        s += std::norm(r.centroids[j]) / (2.0 * std::max(r.variance[j], floor));
    return s / static_cast<double>(r.centroids.size());
}

namespace {
CVec masked(const CVec& Y, const std::vector<char>& mask) {
    CVec pts;
    pts.reserve(Y.size());
    for (std::size_t k = 0; k < Y.size(); ++k)
        if (mask[k]) pts.push_back(Y[k]);
    return pts;
}
}  // namespace

double score_sync(const SampleStream& y, double n, double beta, const DemodContext& ctx, int bs,
                  const std::vector<char>& mask) {
    if (bs != 2 && bs != 4) throw std::invalid_argument("score_sync: bs must be 2 or 4");
    const CVec Y = demod_symbol(y, n, beta, ctx);
    const CVec pts = masked(Y, mask);
    return cluster_score(kmeans(pts, 1 << bs));
}

double SyncSearchSpace::stride_for(double epsilon, double Fs, int N, double Fc_bar) {
    return epsilon * Fs / (N * Fc_bar);
}

std::vector<long> SyncSearchSpace::n_values() const {
    std::vector<long> v;
    for (long n = n_center - d; n <= n_center + d; ++n) v.push_back(n);
    return v;
}

std::vector<double> SyncSearchSpace::beta_values() const {
    if (!(stride > 0.0)) throw std::invalid_argument("sync search: stride must be positive");
    std::vector<double> v;
    const auto q0 = static_cast<long>(std::ceil((beta_prior - beta_m) / stride - 1e-9));
    const auto q1 = static_cast<long>(std::floor((beta_prior + beta_m) / stride + 1e-9));
    for (long q = q0; q <= q1; ++q) v.push_back(static_cast<double>(q) * stride);
    return v;
}

SyncEstimate estimate_sync(const SampleStream& y, const SyncSearchSpace& space, const DemodContext& ctx, int bs,
                           const std::vector<char>& mask) {
    const auto ns = space.n_values();
    const auto bs_vals = space.beta_values();
    if (ns.empty() || bs_vals.empty()) throw std::invalid_argument("estimate_sync: empty search space");
    SyncEstimate best;
    best.score = -1.0;
    std::size_t failures = 0;
    for (long n : ns) {
        for (double b : bs_vals) {
            double s;
            try {
                s = score_sync(y, n, b, ctx, bs, mask);
            } catch (const StageError& e) {
                if (e.stage() != "kmeans") throw;
                ++failures;
                continue;
            }
            if (s > best.score) {
                best.score = s;
                best.n = n;
                best.beta = b;
            }
        }
    }
    if (failures == ns.size() * bs_vals.size()) throw StageError("estimate_sync", "clustering failed at every grid point");
    best.constellation = demod_symbol(y, static_cast<double>(best.n), best.beta, ctx);
    return best;
}

std::vector<long> detect_frame_start(const SampleStream& y, int N, int Ng, const FrameDetectConfig& cfg) {
    const std::size_t n = y.size();
    const auto W = static_cast<std::size_t>(std::max(1, Ng));
    const auto L = static_cast<std::size_t>(N + Ng);
    std::vector<long> starts;
    if (n < 2 * L) return starts;

    std::vector<double> cum(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + std::norm(y.samples[i]);
    auto mean = [&](std::size_t a, std::size_t len) { return (cum[a + len] - cum[a]) / static_cast<double>(len); };

    double floor = std::numeric_limits<double>::infinity(), peak = 0.0;
    for (std::size_t b = 0; b + L <= n; b += L) {
        const double v = mean(b, L);
        floor = std::min(floor, v);
        peak = std::max(peak, v);
    }
    floor = std::max(floor, 1e-12 * peak);
    if (peak <= 0.0) return starts;
    const double hi = floor * std::pow(10.0, cfg.theta_high_db / 10.0);
    const double lo = floor * std::pow(10.0, cfg.theta_low_db / 10.0);

    bool low = mean(0, L) < lo;
    if (!low) starts.push_back(0);
    // The short window must itself go quiet first, or a frame's own tail re-triggers.
    bool armed = low && mean(0, W) < lo;
    std::size_t i = 0;
    while (i + L <= n) {
        if (low) {
            if (!armed) {
                armed = mean(i, W) < lo;
            } else if (mean(i, W) > hi && mean(i, L) > lo) {
                // CUSUM change point between the floor and the plateau.
                const double plateau = mean(i, L);
                const double mid = 0.5 * (plateau + floor);
                const std::size_t a = i > 4 * W ? i - 4 * W : 0;
                const std::size_t b = std::min(n, i + 2 * W);
                double g = 0.0, gmin = 0.0;
                std::size_t arg = a;
                for (std::size_t j = a; j < b; ++j) {
                    g += std::norm(y.samples[j]) - mid;
                    if (g < gmin) {
                        gmin = g;
                        arg = j + 1;
                    }
                }
                starts.push_back(static_cast<long>(arg));
                low = false;
                armed = false;
                i = arg + L;
                continue;
            }
        } else if (mean(i, L) < lo) {
            low = true;
        }
        ++i;
    }
    return starts;
}

double coarse_beta(const SampleStream& y, const std::vector<long>& starts, const DemodContext& ctx, int max_bins) {
    if (starts.empty()) throw StageError("coarse_cfo", "no symbols supplied");
    const int N = ctx.N, Ng = ctx.Ng;
    const double F = y.rate / N;
    const double fc_ch = ctx.Fc_bar + ctx.center_offset;
    cplx acc{0.0, 0.0};
    for (long s : starts) {
        if (s < 0 || static_cast<std::size_t>(s + N + Ng) > y.size()) continue;
        for (int i = 0; i < Ng; ++i)
            acc += y.samples[static_cast<std::size_t>(s + N + i)] * std::conj(y.samples[static_cast<std::size_t>(s + i)]);
    }
    const double f_meas = std::arg(acc) / kTwoPi * F;
    double r = std::remainder(f_meas - ctx.center_offset, F);
    const double beta_frac = -r / fc_ch;

    std::vector<double> energy(static_cast<std::size_t>(N), 0.0);
    for (long s : starts) {
        if (s < 0 || static_cast<std::size_t>(s + N + Ng) + 2 > y.size()) continue;
        const CVec Y = demod_symbol(y, static_cast<double>(s), beta_frac, ctx);
        for (int k = 0; k < N; ++k) energy[k] += std::norm(Y[k]);
    }
    const double half_bw = 0.5 * y.usable_bandwidth() - 4.0 * F;
    auto in_band = [&](int k) {
        const double f = signed_bin(k, N) * F;
        return std::fabs(f) < 0.5 * y.rate - 4.0 * F && std::fabs(f + ctx.center_offset) < half_bw;
    };
    int best_s = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int s = -max_bins; s <= max_bins; ++s) {
        double g = 0.0;
        bool ok = true;
        for (int gk : {0, 1, N - 2, N - 1}) {
            const int k = ((gk + s) % N + N) % N;
            if (!in_band(k)) {
                ok = false;
                break;
            }
            g += energy[k];
        }
        if (ok && g < best) {
            best = g;
            best_s = s;
        }
    }
    return -(r + best_s * F) / fc_ch;
}

FcEstimate estimate_fc(const std::vector<FrameTime>& frames, double beta_hat, double Fc_bar, const Rational& Tf,
                       double Fs) {
    std::vector<int> ms;
    for (const auto& f : frames) ms.push_back(f.m);
    std::sort(ms.begin(), ms.end());
    ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
    if (ms.size() < 3) throw StageError("estimate_fc", "rank-deficient fit: fewer than 3 distinct frames");
    const int m0 = ms.front();
    if (to_double(Tf * (ms.back() - m0)) > 1.0 + 1e-12)
        throw StageError("estimate_fc", "frame set spans more than one second");

    const auto rows = static_cast<Eigen::Index>(frames.size());
    Eigen::MatrixXd A(rows, 3);
    Eigen::VectorXd b(rows);
    const double t_r0 = frames.front().n / Fs;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double x = to_double(Tf * (frames[static_cast<std::size_t>(i)].m - m0));
        A(i, 0) = 1.0;
        A(i, 1) = x;
        A(i, 2) = x * x;
        b(i) = frames[static_cast<std::size_t>(i)].n / Fs - t_r0;
    }
    const auto qr = A.colPivHouseholderQr();
    if (qr.rank() < 3) throw StageError("estimate_fc", "rank-deficient fit");
    const Eigen::Vector3d a = qr.solve(b);
    FcEstimate est;
    est.a0 = a(0) + t_r0;
    est.a1 = a(1);
    est.a2 = a(2);
    est.beta_bar = est.a1 - 1.0;
    // Compression gives the modulation beta; the derotation beta also absorbs the tuning error.
    const double ratio = 1.0 + beta_hat - est.beta_bar;
    est.Fc = std::round(Fc_bar / ratio / 1e6) * 1e6;
    return est;
}

}  // namespace ofdmid::sync
