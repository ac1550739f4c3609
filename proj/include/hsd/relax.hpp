#pragma once

#include <cmath>
#include <string_view>

#include <boost/math/special_functions/expm1.hpp>

#include "filters.hpp"

namespace hsd {

// Stationary noise <f(t) f(0)> = exp(-|t|/tau_c) with strength lambda [T].
struct OUNoise {
    double lambda = 0.0;
    double tau_c = 1.0;
};

struct CoherenceModel {
    double T2_star = 1e-6;
    double T2 = 1e-4;
};

enum class Regime { Long, Intermediate, Short };

inline std::string_view regime_name(Regime r)
{
    switch (r) {
    case Regime::Long: return "long";
    case Regime::Intermediate: return "intermediate";
    case Regime::Short: return "short";
    }
    return "?";
}

namespace detail {

inline void check_noise(const OUNoise& nz)
{
    if (!(nz.lambda >= 0.0) || !(nz.tau_c > 0.0)) throw InvalidParams("OU noise needs lambda >= 0, tau_c > 0");
}

// 1 - exp(-x)
template <class T>
T omexp(const T& x)
{
    return -boost::math::expm1(T(-x));
}

// (n (1 - q) - (1 - q^n)) / (1 - q)^2 with q = exp(-x): the sum over cycle
// pairs i < j of q^(j - i - 1), written to stay accurate for small x.
template <class T>
T cycle_pair_sum(const T& x, int n)
{
    T omq = omexp(x);
    T omqn = omexp(T(x * n));
    return (T(n) * omq - omqn) / (omq * omq);
}

// sinh(x) exp(-s) for s >= x, free of overflow at any x.
template <class T>
T sinh_scaled(const T& x, const T& s)
{
    using std::exp;
    return (exp(x - s) - exp(-x - s)) / 2;
}

}  // namespace detail

// Closed-form exponent h with <sigma_x> = exp(-h), evaluated in scalar T.
template <class T>
T h_closed_t(const ProtocolSpec& spec, const OUNoise& nz)
{
    using std::exp, std::tanh;
    spec.validate();
    detail::check_noise(nz);
    const T l2 = T(nz.lambda) * T(nz.lambda);
    const T tc = nz.tau_c;
    const auto& tm = spec.timing;
    const int n = tm.n;
    auto em = [&](const T& L) { return detail::omexp<T>(L / tc); };

    if (!is_hybrid(spec.kind)) {
        const T g = spec.spins[0].gamma;
        const T tt = tm.tau_N_tilde;
        const T tau = spec.kind == Kind::Ramsey || spec.kind == Kind::HahnEcho ? T(spec.tau()) : T(n * tt);
        const T pre = 4 * l2 * g * g * tc;
        switch (spec.kind) {
        case Kind::Ramsey:
            return pre * (tau - tc * em(tau));
        case Kind::HahnEcho:
            // 3 + e^-x - 4 e^-x/2 = (1 - e^-x/2)(3 - e^-x/2)
            return pre * (tau - tc * em(tau / 2) * (3 - exp(-tau / (2 * tc))));
        case Kind::DD: {
            T th = tanh(tt / (4 * tc));
            return pre * (tau + tc * (em(tau) * th * th - 4 * n * th));
        }
        case Kind::CP: {
            // sinh^2(y/2) / cosh(y) = (1 - sech y) / 2
            T y = tt / (4 * tc), u = exp(-y);
            T r = (1 - 2 * u / (1 + u * u)) / 2;
            return pre * (tau - 4 * tc * (em(tau) * r * r + n * tanh(y)));
        }
        default:
            break;
        }
    }

    const T ge = spec.e().gamma, gN = spec.N().gamma;
    const T te = tm.tau_e_tilde, tN = tm.tau_N_tilde, ov = tm.t_ov;
    const T tt = tN + te + 2 * ov;
    // the pair sum carries exp(-tt/tc), absorbed into the window sinh terms
    const T S = detail::cycle_pair_sum<T>(tt / tc, n);
    const T self = 4 * n * l2 * tc * (ge * ge * te + gN * gN * tN);
    auto ss = [&](const T& x, const T& s) { return detail::sinh_scaled<T>(x / (2 * tc), s / (2 * tc)); };

    if (spec.kind == Kind::HsdCP) {
        T X = gN * ss(tN, tt) + ge * (ss(tt, tt) - ss(tt - te, tt));
        T half = em(te / 2);
        T within = gN * gN * em(tN) + 2 * ge * ge * half;
        T cross = 2 * ge * gN * half * em(tN) * exp(-ov / tc) +
                  ge * ge * half * half * exp(-(tN + 2 * ov) / tc);
        return 16 * l2 * tc * tc * X * X * S + self - 4 * n * l2 * tc * tc * within +
               4 * n * l2 * tc * tc * cross;
    }

    // HSD-DD: electron window, gap, nuclear window, gap
    T se = ss(te, tt), sN = ss(tN, tt);
    // sinh(tN) sinh(te) cosh(tt) exp(-tt), all over 2 tau_c, with tN + te - tt = -2 t_ov
    T mix = ss(tN, tN) * ss(te, te) * (1 + exp(-tt / tc)) / 2 * exp(-ov / tc);
    T Y = gN * gN * sN * sN + ge * ge * se * se + 2 * gN * ge * mix;
    T within = ge * ge * em(te) + gN * gN * em(tN) - ge * gN * em(te) * em(tN) * exp(-ov / tc);
    return 16 * l2 * tc * tc * Y * S + self - 4 * n * l2 * tc * tc * within;
}

inline double h_closed(const ProtocolSpec& spec, const OUNoise& nz)
{
    return static_cast<double>(h_closed_t<mp50>(spec, nz));
}

// Exact 2 lambda^2 * double integral of exp(-|t1 - t2|/tau_c) g g, summed
// analytically over segment pairs. Pairs are accumulated with a running
// exponentially-weighted sum, which is the same pair sum reordered.
template <class T>
T h_oracle_t(const FilterFunction& f, const OUNoise& nz)
{
    using std::exp;
    detail::check_noise(nz);
    const T tc = nz.tau_c;
    auto segs = merged(f, 0.0).segments;
    T self = 0, pairs = 0, acc = 0;
    for (std::size_t j = 0; j < segs.size(); ++j) {
        const auto& s = segs[j];
        const T a = s.a, L = T(s.t1) - T(s.t0);
        const T em = detail::omexp<T>(L / tc);
        self += a * a * 2 * tc * (L - tc * em);
        pairs += acc * a * em;
        if (j + 1 < segs.size()) {
            const auto& nx = segs[j + 1];
            acc = acc * exp(-(T(nx.t0) - T(s.t0)) / tc) + a * em * exp(-(T(nx.t0) - T(s.t1)) / tc);
        }
    }
    T I = self + 2 * tc * tc * pairs;
    return 2 * T(nz.lambda) * T(nz.lambda) * I;
}

inline double h_oracle(const FilterFunction& f, const OUNoise& nz)
{
    return static_cast<double>(h_oracle_t<mp50>(f, nz));
}

// Double integral of |t1 - t2| g(t1) g(t2); the 1/tau_c coefficient of the
// long-correlation expansion.
inline mp50 abs_lag_moment(const FilterFunction& f)
{
    auto segs = merged(f, 0.0).segments;
    mp50 d = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        mp50 ai = segs[i].a, Li = mp50(segs[i].t1) - mp50(segs[i].t0);
        mp50 ci = (mp50(segs[i].t1) + mp50(segs[i].t0)) / 2;
        d += ai * ai * Li * Li * Li / 3;
        for (std::size_t j = i + 1; j < segs.size(); ++j) {
            mp50 aj = segs[j].a, Lj = mp50(segs[j].t1) - mp50(segs[j].t0);
            mp50 cj = (mp50(segs[j].t1) + mp50(segs[j].t0)) / 2;
            d += 2 * ai * aj * Li * Lj * (cj - ci);
        }
    }
    return d;
}

inline Regime classify_regime(const ProtocolSpec& spec, const OUNoise& nz)
{
    const auto& tm = spec.timing;
    if (is_hybrid(spec.kind)) {
        if (nz.tau_c > 10.0 * tm.tau_N_tilde) return Regime::Long;
        if (nz.tau_c < tm.tau_e_tilde / 10.0) return Regime::Short;
        return Regime::Intermediate;
    }
    if (nz.tau_c > 10.0 * spec.tau()) return Regime::Long;
    if (nz.tau_c < tm.tau_tilde() / 10.0) return Regime::Short;
    throw RegimeUndefined("single-spin kinds have no intermediate regime");
}

// Regime formulas. long: two-term expansion 2 lambda^2 (M0^2 - D/tau_c);
// short: 4 lambda^2 tau_c * integral g^2 (= 4 lambda^2 tau_c (gN^2 tN + ge^2 te));
// intermediate (HSD-CP only): 4 lambda^2 gN tau_c (gN tN + e^{-t_ov/tau_c} ge te)
// + (2n - 1) lambda^2 ge^2 te^2 / n^2.
inline double h_asymptotic(const ProtocolSpec& spec, const OUNoise& nz, Regime r)
{
    detail::check_noise(nz);
    const double l2 = nz.lambda * nz.lambda;
    const auto f = build_filter(spec);
    switch (r) {
    case Regime::Long: {
        mp50 m0 = raw_moment<mp50>(f, 0);
        return static_cast<double>(2 * mp50(l2) * (m0 * m0 - abs_lag_moment(f) / mp50(nz.tau_c)));
    }
    case Regime::Short: {
        mp50 g2 = 0;
        for (const auto& s : f.segments) g2 += mp50(s.a) * s.a * (mp50(s.t1) - s.t0);
        return static_cast<double>(4 * mp50(l2) * nz.tau_c * g2);
    }
    case Regime::Intermediate: {
        if (spec.kind != Kind::HsdCP) throw RegimeUndefined("intermediate regime is defined for HSD-CP only");
        const auto& tm = spec.timing;
        const double ge = spec.e().gamma, gN = spec.N().gamma, n = tm.n;
        const double te = tm.tau_e(), tN = tm.tau_N();
        return 4.0 * l2 * gN * nz.tau_c * (gN * tN + std::exp(-tm.t_ov / nz.tau_c) * ge * te) +
               (2.0 * n - 1.0) * l2 * ge * ge * te * te / (n * n);
    }
    }
    throw RegimeUndefined("unknown regime");
}

// The electron-only short-tau_c form 4 lambda^2 ge^2 tau_c tau_e, reported next
// to the full form; they agree when gN^2 tN << ge^2 te.
inline double h_short_electron_only(const ProtocolSpec& spec, const OUNoise& nz)
{
    if (!is_hybrid(spec.kind)) throw RegimeUndefined("electron-only short form needs a hybrid kind");
    const double ge = spec.e().gamma;
    return 4.0 * nz.lambda * nz.lambda * ge * ge * nz.tau_c * spec.timing.tau_e();
}

inline double decoherence_envelope(int n, double tau_e, const CoherenceModel& cm)
{
    if (n < 1 || tau_e < 0.0) throw InvalidParams("decoherence_envelope: need n >= 1, tau_e >= 0");
    if (!(cm.T2_star > 0.0) || cm.T2 < cm.T2_star) throw InvalidParams("need 0 < T2* <= T2");
    const double r = tau_e / cm.T2_star;
    return std::exp(-((2.0 * n - 1.0) / (double(n) * n)) * r * r - tau_e / cm.T2);
}

// One row of a normalised-exponent sweep, h / (2 lambda^2 ge^2 tau_e^2).
struct Fig2aRow {
    double tau_c_over_tau_e;
    int n;
    double h_normalized;
    double asymptote_long;
    double asymptote_intermediate;
    double asymptote_short;
    double asymptote_short_electron_only;
};

inline Fig2aRow fig2a_row(const ProtocolSpec& spec, double tau_c_over_tau_e)
{
    const double te = spec.timing.tau_e(), ge = spec.e().gamma;
    OUNoise nz{1.0, tau_c_over_tau_e * te};
    const double norm = 2.0 * ge * ge * te * te;
    Fig2aRow r{};
    r.tau_c_over_tau_e = tau_c_over_tau_e;
    r.n = spec.timing.n;
    r.h_normalized = h_closed(spec, nz) / norm;
    r.asymptote_long = h_asymptotic(spec, nz, Regime::Long) / norm;
    r.asymptote_intermediate = h_asymptotic(spec, nz, Regime::Intermediate) / norm;
    r.asymptote_short = h_asymptotic(spec, nz, Regime::Short) / norm;
    r.asymptote_short_electron_only = h_short_electron_only(spec, nz) / norm;
    return r;
}

}  // namespace hsd
