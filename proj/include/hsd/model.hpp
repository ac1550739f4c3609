#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace hsd {

// Angular gyromagnetic ratio in rad s^-1 T^-1, signed.
struct SpinSpecies {
    std::string name;
    double gamma = 0.0;
};

namespace species {
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline const SpinSpecies electron{"e", -two_pi * 28.0249e9};
inline const SpinSpecies nitrogen14{"N", two_pi * 3.0766e6};
}  // namespace species

enum class Kind { Ramsey, HahnEcho, DD, CP, HsdCP, HsdDD };

inline bool is_hybrid(Kind k) { return k == Kind::HsdCP || k == Kind::HsdDD; }

inline std::string_view kind_name(Kind k)
{
    switch (k) {
    case Kind::Ramsey: return "ramsey";
    case Kind::HahnEcho: return "he";
    case Kind::DD: return "dd";
    case Kind::CP: return "cp";
    case Kind::HsdCP: return "hsd-cp";
    case Kind::HsdDD: return "hsd-dd";
    }
    return "?";
}

inline Kind parse_kind(std::string_view s)
{
    for (Kind k : {Kind::Ramsey, Kind::HahnEcho, Kind::DD, Kind::CP, Kind::HsdCP, Kind::HsdDD})
        if (kind_name(k) == s) return k;
    if (s == "hahn-echo") return Kind::HahnEcho;
    throw InvalidSpec("unknown protocol kind '" + std::string(s) + "'");
}

// Per-cycle timing. Single-spin kinds keep their whole cycle in tau_N_tilde
// with tau_e_tilde = t_ov = 0, so tau() is the sequence length for every kind.
struct ProtocolTiming {
    double tau_e_tilde = 0.0;
    double tau_N_tilde = 0.0;
    double t_ov = 0.0;
    int n = 1;
    bool fine_tuned = false;

    double tau_tilde() const { return tau_N_tilde + tau_e_tilde + 2.0 * t_ov; }
    double tau() const { return n * tau_tilde(); }
    double tau_e() const { return n * tau_e_tilde; }
    double tau_N() const { return n * tau_N_tilde; }
};

// tau_e that cancels the common phase: gamma_e tau_e + gamma_N tau_N = 0.
inline double fine_tune_tau_e(double gamma_e, double gamma_N, double tau_N)
{
    if (!(tau_N > 0.0)) throw InvalidSpec("fine_tune_tau_e: tau_N must be positive");
    if (gamma_e == 0.0 || gamma_N == 0.0 || std::signbit(gamma_e) == std::signbit(gamma_N))
        throw SameSignGammas("fine_tune_tau_e: gyromagnetic ratios must have opposite signs");
    return -gamma_N * tau_N / gamma_e;
}

inline ProtocolTiming build_timing(double tau_N_tilde, double t_ov, int n, const SpinSpecies& e,
                                   const SpinSpecies& N)
{
    if (!(tau_N_tilde > 0.0) || t_ov < 0.0 || n < 1)
        throw InvalidSpec("build_timing: need tau_N_tilde > 0, t_ov >= 0, n >= 1");
    ProtocolTiming t;
    t.tau_N_tilde = tau_N_tilde;
    t.tau_e_tilde = fine_tune_tau_e(e.gamma, N.gamma, tau_N_tilde);
    t.t_ov = t_ov;
    t.n = n;
    t.fine_tuned = true;
    return t;
}

struct ProtocolSpec {
    Kind kind = Kind::Ramsey;
    std::vector<SpinSpecies> spins;  // {e, N} for hybrid kinds
    ProtocolTiming timing;

    double tau() const { return timing.tau(); }
    const SpinSpecies& e() const { return spins.at(0); }
    const SpinSpecies& N() const { return spins.at(1); }

    static ProtocolSpec single(Kind kind, const SpinSpecies& s, double tau, int n = 1)
    {
        ProtocolSpec p;
        p.kind = kind;
        p.spins = {s};
        p.timing.n = n;
        p.timing.tau_N_tilde = tau / n;
        p.validate();
        return p;
    }

    static ProtocolSpec hybrid(Kind kind, const SpinSpecies& e, const SpinSpecies& N,
                               const ProtocolTiming& t)
    {
        ProtocolSpec p;
        p.kind = kind;
        p.spins = {e, N};
        p.timing = t;
        p.validate();
        return p;
    }

    void validate() const
    {
        const auto& t = timing;
        if (t.n < 1) throw InvalidSpec("n must be >= 1");
        if (t.tau_e_tilde < 0 || t.tau_N_tilde < 0 || t.t_ov < 0)
            throw InvalidSpec("durations must be non-negative");
        if (!(t.tau() > 0)) throw InvalidSpec("sequence length must be positive");
        for (const auto& s : spins)
            if (!std::isfinite(s.gamma) || s.gamma == 0.0)
                throw InvalidSpec("gyromagnetic ratio must be finite and nonzero");
        if (is_hybrid(kind)) {
            if (spins.size() != 2) throw InvalidSpec("hybrid kinds need exactly two species");
        } else {
            if (spins.size() != 1) throw InvalidSpec("single-spin kinds need exactly one species");
            if (t.tau_e_tilde != 0 || t.t_ov != 0)
                throw InvalidSpec("single-spin kinds carry only tau");
            if ((kind == Kind::Ramsey || kind == Kind::HahnEcho) && t.n != 1)
                throw InvalidSpec("Ramsey and Hahn echo have n = 1");
        }
        if (is_hybrid(kind) && t.fine_tuned) {
            double lhs = e().gamma * t.tau_e() + N().gamma * t.tau_N();
            if (std::abs(lhs) > 1e-12 * std::abs(e().gamma * t.tau_e()))
                throw InvalidSpec("timing flagged fine_tuned violates the cancellation condition");
        }
    }

    // Non-fatal remarks, e.g. tau_e not much shorter than tau_N.
    std::vector<std::string> warnings() const
    {
        std::vector<std::string> w;
        if (is_hybrid(kind) && timing.tau_e_tilde >= 0.1 * timing.tau_N_tilde)
            w.emplace_back("tau_e is not much shorter than tau_N; asymptotic regimes may not apply");
        return w;
    }
};

// Same spec with every duration scaled by f.
inline ProtocolSpec scaled(ProtocolSpec p, double f)
{
    p.timing.tau_e_tilde *= f;
    p.timing.tau_N_tilde *= f;
    p.timing.t_ov *= f;
    return p;
}

// Same total dwells tau_e, tau_N and per-cycle t_ov, split into n cycles.
inline ProtocolSpec with_n(ProtocolSpec p, int n)
{
    double te = p.timing.tau_e(), tN = p.timing.tau_N();
    p.timing.n = n;
    p.timing.tau_e_tilde = te / n;
    p.timing.tau_N_tilde = tN / n;
    if (p.timing.fine_tuned && is_hybrid(p.kind))
        p.timing.tau_e_tilde = fine_tune_tau_e(p.e().gamma, p.N().gamma, p.timing.tau_N_tilde);
    return p;
}

}  // namespace hsd
