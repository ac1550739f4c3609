#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#include <unsupported/Eigen/MatrixFunctions>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "filters.hpp"
#include "relax.hpp"

namespace hsd {

// ---- seeding and parallel map ----

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Stream k of a master seed; depends only on (master, k).
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t k)
{
    return splitmix64(splitmix64(master) ^ splitmix64(k ^ 0xD1B54A32D192ED03ULL));
}

inline int resolve_threads(int threads)
{
    if (threads > 0) return threads;
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
// handled exactly once; callers write results by index so output order never
// depends on scheduling.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn)
{
    const int nt = std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(count, 1));
    if (nt <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count && !failed; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

// Pairwise summation; fixed association order for a given length.
inline double pairwise_sum(const double* x, std::size_t n)
{
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline double mean_of(const std::vector<double>& v) { return v.empty() ? 0.0 : pairwise_sum(v.data(), v.size()) / v.size(); }

inline double stddev_of(const std::vector<double>& v)
{
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    std::vector<double> d(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) d[i] = (v[i] - m) * (v[i] - m);
    return std::sqrt(pairwise_sum(d.data(), d.size()) / (v.size() - 1));
}

// ---- noise synthesis ----

enum class NoiseKind { None, White, Pink, FixedTones, OU };

inline std::string_view noise_kind_name(NoiseKind k)
{
    switch (k) {
    case NoiseKind::None: return "none";
    case NoiseKind::White: return "white";
    case NoiseKind::Pink: return "pink";
    case NoiseKind::FixedTones: return "tones";
    case NoiseKind::OU: return "ou";
    }
    return "?";
}

inline NoiseKind parse_noise_kind(std::string_view s)
{
    for (NoiseKind k : {NoiseKind::None, NoiseKind::White, NoiseKind::Pink, NoiseKind::FixedTones, NoiseKind::OU})
        if (noise_kind_name(k) == s) return k;
    throw InvalidParams("unknown noise kind '" + std::string(s) + "'");
}

// rms [T] is the per-sample std (White), the stationary std (OU) or the
// expected RMS over the synthesis window (Pink, FixedTones).
struct NoiseSpec {
    NoiseKind kind = NoiseKind::None;
    double rms = 0.0;
    double tau_c = 1.0;     // OU
    double beta = 1.0;      // Pink: bin amplitude ~ f^-beta
    int tones = 8;          // FixedTones
    double tone_band = 0.5; // FixedTones: frequencies uniform in (0, tone_band / duration]

    // Field noise equivalent to the sigma_z model with strength lambda: the
    // {0,-1} phase is gamma * integral B, so the field std is 2 lambda.
    static NoiseSpec ou(const OUNoise& nz)
    {
        NoiseSpec s;
        s.kind = NoiseKind::OU;
        s.rms = 2.0 * nz.lambda;
        s.tau_c = nz.tau_c;
        return s;
    }
    static NoiseSpec white(double rms)
    {
        NoiseSpec s;
        s.kind = NoiseKind::White;
        s.rms = rms;
        return s;
    }
    static NoiseSpec pink(double rms, double beta = 1.0)
    {
        NoiseSpec s;
        s.kind = NoiseKind::Pink;
        s.rms = rms;
        s.beta = beta;
        return s;
    }
    static NoiseSpec fixed_tones(double rms, int count)
    {
        NoiseSpec s;
        s.kind = NoiseKind::FixedTones;
        s.rms = rms;
        s.tones = count;
        return s;
    }
};

// Field samples at t_k = k dt, k = 0 .. size-1.
struct NoiseTrace {
    NoiseKind kind = NoiseKind::None;
    double dt = 0.0;
    std::vector<double> samples;
    std::uint64_t seed = 0;

    double duration() const { return samples.empty() ? 0.0 : dt * (samples.size() - 1); }
};

inline constexpr std::size_t max_trace_samples = std::size_t(1) << 27;

inline NoiseTrace synthesize_noise(const NoiseSpec& spec, double duration, double dt, std::uint64_t seed)
{
    if (!(duration > 0.0) || !(dt > 0.0) || !std::isfinite(duration / dt))
        throw InvalidParams("synthesize_noise: need duration > 0 and dt > 0");
    if (!(spec.rms >= 0.0)) throw InvalidParams("synthesize_noise: rms must be >= 0");
    NoiseTrace tr;
    tr.kind = spec.kind;
    tr.seed = seed;
    if (spec.kind == NoiseKind::None || spec.rms == 0.0) {
        tr.dt = duration;
        tr.samples.assign(2, 0.0);
        return tr;
    }
    const double steps = std::ceil(duration / dt * (1.0 - 1e-12));
    if (steps + 1 > double(max_trace_samples)) throw InvalidParams("synthesize_noise: trace exceeds memory budget");
    const std::size_t N = std::size_t(steps) + 1;
    tr.dt = dt;
    tr.samples.resize(N);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto& x = tr.samples;

    switch (spec.kind) {
    case NoiseKind::White:
        for (auto& v : x) v = spec.rms * gauss(rng);
        break;
    case NoiseKind::OU: {
        if (!(spec.tau_c > 0.0)) throw InvalidParams("OU noise needs tau_c > 0");
        const double a = std::exp(-dt / spec.tau_c);
        const double b = std::sqrt(-std::expm1(-2.0 * dt / spec.tau_c)) * spec.rms;
        x[0] = spec.rms * gauss(rng);
        for (std::size_t k = 1; k < N; ++k) x[k] = a * x[k - 1] + b * gauss(rng);
        break;
    }
    case NoiseKind::Pink: {
        // Random normal amplitude and uniform phase per bin, amplitude / f^beta,
        // Hermitian spectrum, inverse DFT. DC and Nyquist bins are left empty.
        std::vector<std::complex<double>> X(N, {0.0, 0.0});
        const double df = 1.0 / (N * dt);
        double expected = 0.0;
        for (std::size_t k = 1; 2 * k < N; ++k) {
            const double scale = std::pow(k * df, -spec.beta);
            const double amp = gauss(rng) * scale;
            const double ph = 2.0 * std::numbers::pi * uni(rng);
            X[k] = std::polar(amp, ph);
            X[N - k] = std::conj(X[k]);
            expected += 2.0 * scale * scale;
        }
        Eigen::FFT<double> fft;
        std::vector<std::complex<double>> y;
        fft.inv(y, X);
        // E[x^2] = sum_k E|X_k|^2 / N^2 with the 1/N inverse scaling
        const double norm = expected > 0.0 ? spec.rms / (std::sqrt(expected) / N) : 0.0;
        for (std::size_t k = 0; k < N; ++k) x[k] = norm * y[k].real();
        break;
    }
    case NoiseKind::FixedTones: {
        if (spec.tones < 1) throw InvalidParams("fixed tones need count >= 1");
        std::vector<double> A(spec.tones), f(spec.tones), ph(spec.tones);
        for (int i = 0; i < spec.tones; ++i) {
            A[i] = gauss(rng);
            f[i] = spec.tone_band / duration * uni(rng);
            ph[i] = 2.0 * std::numbers::pi * uni(rng);
        }
        // expected mean square: sum E[A^2]/2
        const double norm = spec.rms / std::sqrt(0.5 * spec.tones);
        for (std::size_t k = 0; k < N; ++k) {
            double s = 0.0, t = k * dt;
            for (int i = 0; i < spec.tones; ++i) s += A[i] * std::cos(2.0 * std::numbers::pi * f[i] * t + ph[i]);
            x[k] = norm * s;
        }
        break;
    }
    case NoiseKind::None:
        break;
    }
    return tr;
}

// Exact integral of the piecewise-linear interpolant of a trace.
class TraceIntegral {
public:
    explicit TraceIntegral(const NoiseTrace& tr) : tr_(tr), cum_(tr.samples.size(), 0.0L)
    {
        for (std::size_t k = 1; k < cum_.size(); ++k)
            cum_[k] = cum_[k - 1] + 0.5L * tr.dt * ((long double)tr.samples[k - 1] + tr.samples[k]);
    }

    long double upto(long double t) const
    {
        const auto& s = tr_.samples;
        if (s.size() < 2 || t <= 0) return 0;
        std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(t / tr_.dt), s.size() - 2);
        long double u = t - k * (long double)tr_.dt;
        long double slope = ((long double)s[k + 1] - s[k]) / tr_.dt;
        return cum_[k] + s[k] * u + 0.5L * slope * u * u;
    }

    long double over(long double t0, long double t1) const { return upto(t1) - upto(t0); }

private:
    const NoiseTrace& tr_;
    std::vector<long double> cum_;
};

// ---- sequence simulation ----

enum class Frame { Rotating, Lab };

struct SimConfig {
    ProtocolSpec spec;
    double dt = 1e-9;            // noise sample spacing; also the lab-frame step cap
    Frame frame = Frame::Rotating;
    double D_e = 2.87e9;         // Hz, zero-field splitting of the electron (spin index 0)
    double D_N = -4.945e6;       // Hz, quadrupole splitting of 14N (spin index 1)
    double B_offset = 0.0;       // T, common DC field on both sites
    double gradient_delta = 0.0; // T, extra DC field at the nuclear site
    double B_transverse = 0.0;   // T, static x field (lab frame only)
    NoiseSpec noise;
    int trials = 1;
    std::uint64_t master_seed = 0;
    double noise_window = 0.0;   // > 0: synthesize over this fixed duration
    int threads = 0;

    void validate() const
    {
        spec.validate();
        if (!(dt > 0.0)) throw InvalidParams("SimConfig: dt must be positive");
        if (trials < 1) throw InvalidParams("SimConfig: trials must be >= 1");
        if (frame == Frame::Lab) {
            const double D = std::max(std::abs(D_e), is_hybrid(spec.kind) ? std::abs(D_N) : 0.0);
            if (dt * D > 0.01 + 1e-12) throw InvalidParams("SimConfig: lab frame needs dt * |D| <= 0.01");
        }
    }

    double site_offset(int spin) const { return B_offset + (spin == 1 ? gradient_delta : 0.0); }
    double window() const { return std::max(noise_window, spec.tau()); }
};

struct Readout {
    double phase = 0.0;
    double sigma_x = 1.0;    // cos(phase)
    double projection = 0.0; // sin(phase)
};

inline Readout make_readout(double phase) { return {phase, std::cos(phase), std::sin(phase)}; }

namespace detail {
inline void check_trace(const SimConfig& cfg, const NoiseTrace& tr)
{
    if (tr.samples.size() < 2 || tr.duration() < cfg.spec.tau() * (1.0 - 1e-12))
        throw TraceTooShort("noise trace shorter than the sequence");
}
}  // namespace detail

// Rotating frame: phase = sum over windows of amplitude * integral of the site field.
inline Readout run_rotating(const SimConfig& cfg, const NoiseTrace& tr)
{
    detail::check_trace(cfg, tr);
    const auto f = build_filter(cfg.spec);
    const TraceIntegral I(tr);
    long double phi = 0;
    for (const auto& s : f.segments) phi += s.a * (I.over(s.t0, s.t1) + cfg.site_offset(s.spin) * s.length());
    return make_readout(static_cast<double>(phi));
}

// Spin-1 Hamiltonian 2 pi D (Sz^2 - 2/3) + gamma (Bz Sz + Bx Sx), basis (+1, 0, -1), rad/s.
inline Eigen::Matrix3cd spin1_hamiltonian(double D, double gamma, double Bz, double Bx)
{
    using C = std::complex<double>;
    Eigen::Matrix3cd H = Eigen::Matrix3cd::Zero();
    const double w = 2.0 * std::numbers::pi * D;
    H(0, 0) = C(w / 3.0 + gamma * Bz, 0);
    H(1, 1) = C(-2.0 * w / 3.0, 0);
    H(2, 2) = C(w / 3.0 - gamma * Bz, 0);
    const double sx = gamma * Bx / std::numbers::sqrt2;
    H(0, 1) = H(1, 0) = H(1, 2) = H(2, 1) = C(sx, 0);
    return H;
}

inline Eigen::Matrix3cd spin1_step(double D, double gamma, double Bz, double Bx, double h)
{
    Eigen::Matrix3cd A = spin1_hamiltonian(D, gamma, Bz, Bx) * std::complex<double>(0.0, -h);
    return A.exp();
}

// Lab frame: the carrier state evolves under the active spin's Hamiltonian in
// steps of at most dt, with the field averaged exactly over each step. Pi
// pulses exchange |0> and |-1>; swaps hand the state to the other spin. The
// readout phase is demodulated against a noiseless reference run. The
// wrapped phase lies in (-pi, pi].
inline Readout run_lab(const SimConfig& cfg, const NoiseTrace& tr)
{
    detail::check_trace(cfg, tr);
    const auto f = build_filter(cfg.spec);
    const TraceIntegral I(tr);
    Eigen::Vector3cd psi(0.0, 1.0 / std::numbers::sqrt2, 1.0 / std::numbers::sqrt2), ref = psi;
    int parity = 1;
    auto flip = [](Eigen::Vector3cd& v) { std::swap(v(1), v(2)); };
    for (const auto& s : f.segments) {
        const double g = cfg.spec.spins[s.spin].gamma;
        const int sign = (s.a / g) > 0 ? 1 : -1;
        if (sign != parity) {
            flip(psi);
            flip(ref);
            parity = sign;
        }
        const double D = s.spin == 0 ? cfg.D_e : cfg.D_N;
        const long double L = s.length();
        const auto steps = static_cast<std::size_t>(std::ceil(static_cast<double>(L) / cfg.dt * (1.0 - 1e-12)));
        const long double h = L / steps;
        const Eigen::Matrix3cd U0 = spin1_step(D, g, 0.0, cfg.B_transverse, static_cast<double>(h));
        for (std::size_t k = 0; k < steps; ++k) {
            const long double a = s.t0 + k * h, b = (k + 1 == steps) ? s.t1 : a + h;
            const double Bz = static_cast<double>(I.over(a, b) / (b - a)) + cfg.site_offset(s.spin);
            psi = spin1_step(D, g, Bz, cfg.B_transverse, static_cast<double>(b - a)) * psi;
            ref = U0 * ref;
        }
    }
    if (parity < 0) {
        flip(psi);
        flip(ref);
    }
    const double phase = std::arg(psi(2) / psi(1) * std::conj(ref(2) / ref(1)));
    return make_readout(phase);
}

inline Readout run_sequence(const SimConfig& cfg, const NoiseTrace& tr)
{
    return cfg.frame == Frame::Lab ? run_lab(cfg, tr) : run_rotating(cfg, tr);
}

// Deterministic phase for a DC-only scenario: integral of g(t) B_site(t).
inline double dc_phase_oracle(const SimConfig& cfg)
{
    const auto f = build_filter(cfg.spec);
    mp50 phi = 0;
    for (const auto& s : f.segments) phi += mp50(s.a) * cfg.site_offset(s.spin) * (mp50(s.t1) - mp50(s.t0));
    return static_cast<double>(phi);
}

struct TrajectoryPoint {
    double t;
    double phase;
    double projection;
};

// Accumulated phase phi(t) = integral_0^t g B on `points` equally spaced times.
inline std::vector<TrajectoryPoint> phase_trajectory(const SimConfig& cfg, const NoiseTrace& tr, int points)
{
    detail::check_trace(cfg, tr);
    if (points < 2) throw InvalidParams("phase_trajectory: need >= 2 points");
    const auto f = build_filter(cfg.spec);
    const TraceIntegral I(tr);
    std::vector<TrajectoryPoint> out;
    for (int i = 0; i < points; ++i) {
        const long double t = f.total_time * (long double)i / (points - 1);
        long double phi = 0;
        for (const auto& s : f.segments) {
            if (s.t0 >= t) break;
            const long double e = std::min(s.t1, t);
            phi += s.a * (I.over(s.t0, e) + cfg.site_offset(s.spin) * (e - s.t0));
        }
        const double p = static_cast<double>(phi);
        out.push_back({static_cast<double>(t), p, std::sin(p)});
    }
    return out;
}

// ---- ensembles ----

struct EnsembleResult {
    std::vector<double> phase;
    std::vector<double> sigma_x;
    std::vector<double> projection;
    std::vector<std::uint64_t> seeds;
    double mean_sigma_x = 0.0;
    double std_sigma_x = 0.0;
    double stderr_sigma_x = 0.0;
    double mean_projection = 0.0;
    double std_projection = 0.0;
    double std_phase = 0.0;
};

inline EnsembleResult summarize(EnsembleResult r)
{
    r.mean_sigma_x = mean_of(r.sigma_x);
    r.std_sigma_x = stddev_of(r.sigma_x);
    r.stderr_sigma_x = r.sigma_x.empty() ? 0.0 : r.std_sigma_x / std::sqrt(double(r.sigma_x.size()));
    r.mean_projection = mean_of(r.projection);
    r.std_projection = stddev_of(r.projection);
    r.std_phase = stddev_of(r.phase);
    return r;
}

// Trial k draws its trace from substream_seed(master_seed, k).
inline EnsembleResult run_ensemble(const SimConfig& cfg)
{
    cfg.validate();
    EnsembleResult r;
    const std::size_t n = cfg.trials;
    r.phase.resize(n);
    r.sigma_x.resize(n);
    r.projection.resize(n);
    r.seeds.resize(n);
    const double window = cfg.window();
    parallel_for(n, cfg.threads, [&](std::size_t k) {
        const auto seed = substream_seed(cfg.master_seed, k);
        const auto tr = synthesize_noise(cfg.noise, window, cfg.dt, seed);
        const auto ro = run_sequence(cfg, tr);
        r.seeds[k] = seed;
        r.phase[k] = ro.phase;
        r.sigma_x[k] = ro.sigma_x;
        r.projection[k] = ro.projection;
    });
    return summarize(std::move(r));
}

// ---- coherence scan ----

struct CoherenceScan {
    std::vector<double> tau;
    std::vector<double> mean_sigma_x;
    std::vector<double> stderr_sigma_x;
    int n = 1;
    double T_coh = std::numeric_limits<double>::infinity();
    double p = std::numeric_limits<double>::quiet_NaN();
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();  // of (T_coh, p)
    double residual_rms = 0.0;
    bool infinite = false;
};

namespace detail {
struct StretchedExpFunctor {
    using Scalar = double;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;

    const std::vector<double>* x;
    const std::vector<double>* y;
    int inputs() const { return 2; }
    int values() const { return static_cast<int>(x->size()); }

    // parameters (ln T, ln p)
    int operator()(const Eigen::VectorXd& q, Eigen::VectorXd& r) const
    {
        const double T = std::exp(q(0)), p = std::exp(q(1));
        for (int i = 0; i < values(); ++i) r(i) = std::exp(-std::pow((*x)[i] / T, p)) - (*y)[i];
        return 0;
    }
};
}  // namespace detail

struct FitResult {
    double T = 0.0;
    double p = 0.0;
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
    double residual_rms = 0.0;
};

// Least-squares fit of y = exp(-(x/T)^p). Throws FitFailed on non-convergence
// or when the RMS residual exceeds max_residual.
inline FitResult fit_stretched_exp(const std::vector<double>& x, const std::vector<double>& y,
                                   double max_residual = 0.05)
{
    if (x.size() != y.size() || x.size() < 3) throw FitFailed("stretched-exp fit needs >= 3 points");
    // initial T: first crossing of 1/e, else extrapolated from the smallest decay
    double T0 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (y[i] < std::exp(-1.0)) {
            T0 = x[i];
            break;
        }
    if (T0 == 0.0) {
        const double ylast = std::clamp(y.back(), 1e-6, 1.0 - 1e-6);
        T0 = x.back() / std::sqrt(-std::log(ylast));
    }
    detail::StretchedExpFunctor fn{&x, &y};
    Eigen::NumericalDiff<detail::StretchedExpFunctor> nd(fn);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::StretchedExpFunctor>> lm(nd);
    lm.parameters.maxfev = 2000;
    lm.parameters.xtol = 1e-12;
    lm.parameters.ftol = 1e-12;
    double best_cost = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best(2);
    for (double p0 : {2.0, 1.0, 3.0}) {
        Eigen::VectorXd q(2);
        q << std::log(T0), std::log(p0);
        auto status = lm.minimize(q);
        if (status <= 0 || !q.allFinite()) continue;
        Eigen::VectorXd r(x.size());
        fn(q, r);
        if (r.squaredNorm() < best_cost) {
            best_cost = r.squaredNorm();
            best = q;
        }
    }
    if (!std::isfinite(best_cost)) throw FitFailed("stretched-exp fit did not converge");
    FitResult out;
    out.T = std::exp(best(0));
    out.p = std::exp(best(1));
    out.residual_rms = std::sqrt(best_cost / x.size());
    if (!(out.residual_rms <= max_residual))
        throw FitFailed("stretched-exp fit residual " + std::to_string(out.residual_rms) + " exceeds threshold");
    Eigen::MatrixXd J(x.size(), 2);
    nd.df(best, J);
    const int dof = std::max<int>(1, static_cast<int>(x.size()) - 2);
    Eigen::Matrix2d JtJ = J.transpose() * J;
    Eigen::Matrix2d cq = JtJ.inverse() * (best_cost / dof);
    Eigen::Matrix2d Jt;  // d(T, p)/d(ln T, ln p)
    Jt << out.T, 0.0, 0.0, out.p;
    out.covariance = Jt * cq * Jt.transpose();
    return out;
}

// Mean <sigma_x> versus total time, unfitted. Durations are rescaled copies
// of cfg.spec; every (time index, realization) pair draws an independent
// trace over a fixed window = max(total_times), so colored noise has the same
// spectrum at every point.
inline CoherenceScan coherence_decay(const SimConfig& cfg, const std::vector<double>& total_times, int realizations)
{
    cfg.validate();
    if (realizations < 1 || total_times.empty()) throw InvalidParams("coherence_scan: empty scan");
    CoherenceScan out;
    out.n = cfg.spec.timing.n;
    out.tau = total_times;
    const double window = std::max(cfg.noise_window, *std::max_element(total_times.begin(), total_times.end()));
    const std::size_t m = total_times.size();
    std::vector<double> values(m * realizations);
    parallel_for(values.size(), cfg.threads, [&](std::size_t idx) {
        const std::size_t i = idx / realizations, r = idx % realizations;
        SimConfig c = cfg;
        c.spec = scaled(cfg.spec, total_times[i] / cfg.spec.tau());
        const auto seed = substream_seed(substream_seed(cfg.master_seed, i), r);
        const auto tr = synthesize_noise(cfg.noise, window, cfg.dt, seed);
        values[idx] = run_sequence(c, tr).sigma_x;
    });
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> v(values.begin() + i * realizations, values.begin() + (i + 1) * realizations);
        out.mean_sigma_x.push_back(mean_of(v));
        out.stderr_sigma_x.push_back(stddev_of(v) / std::sqrt(double(realizations)));
    }
    out.infinite = std::all_of(out.mean_sigma_x.begin(), out.mean_sigma_x.end(),
                               [](double y) { return y >= 1.0 - 1e-12; });
    return out;
}

// Stretched-exponential fit of a measured decay; no decay at all means T_coh = inf.
inline CoherenceScan fit_coherence(CoherenceScan s, double max_residual = 0.05)
{
    if (s.infinite) return s;
    const auto fit = fit_stretched_exp(s.tau, s.mean_sigma_x, max_residual);
    s.T_coh = fit.T;
    s.p = fit.p;
    s.covariance = fit.covariance;
    s.residual_rms = fit.residual_rms;
    return s;
}

inline CoherenceScan coherence_scan(const SimConfig& cfg, const std::vector<double>& total_times,
                                    int realizations, double max_residual = 0.05)
{
    return fit_coherence(coherence_decay(cfg, total_times, realizations), max_residual);
}

// ---- uncertainty scan ----

struct UncertaintyRow {
    int n;
    double std_projection;
    double std_phase;
    double mean_projection;
};

struct UncertaintyScan {
    std::vector<UncertaintyRow> rows;
    bool strictly_decreasing = false;
    double relative_spread = 0.0;  // (max - min) / mean of std_projection
};

// Std of the final readout over `repeats` independent runs for each n, with
// the total dwells of cfg.spec held fixed.
inline UncertaintyScan uncertainty_scan(const SimConfig& cfg, const std::vector<int>& n_values, int repeats)
{
    if (repeats < 2) throw InvalidParams("uncertainty_scan: need repeats >= 2");
    UncertaintyScan out;
    for (int n : n_values) {
        SimConfig c = cfg;
        c.spec = with_n(cfg.spec, n);
        c.trials = repeats;
        c.master_seed = substream_seed(cfg.master_seed, static_cast<std::uint64_t>(n));
        c.noise_window = std::max(cfg.noise_window, cfg.spec.tau());
        const auto r = run_ensemble(c);
        out.rows.push_back({n, r.std_projection, r.std_phase, r.mean_projection});
    }
    out.strictly_decreasing = true;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        const double s = out.rows[i].std_projection;
        if (i > 0 && !(s < out.rows[i - 1].std_projection)) out.strictly_decreasing = false;
        lo = std::min(lo, s);
        hi = std::max(hi, s);
        sum += s;
    }
    out.relative_spread = sum > 0.0 ? (hi - lo) / (sum / out.rows.size()) : 0.0;
    return out;
}

}  // namespace hsd
