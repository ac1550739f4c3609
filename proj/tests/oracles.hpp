#pragma once

// Reference computations for the tests. Everything here is rebuilt from the
// protocol definitions in 50-digit arithmetic and shares no code with the
// library's filter construction or closed forms.

#include <cmath>
#include <complex>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <hsd/model.hpp>

namespace oracle {

using R = boost::multiprecision::cpp_bin_float_50;

struct Seg {
    R t0, t1, a;
};

// Heaviside windows of each protocol kind, straight from their definitions.
inline std::vector<Seg> segments(const hsd::ProtocolSpec& p)
{
    std::vector<Seg> s;
    const int n = p.timing.n;
    auto add = [&](R a, R t0, R t1) {
        if (t1 > t0) s.push_back({t0, t1, a});
    };
    if (!hsd::is_hybrid(p.kind)) {
        const R g = p.spins[0].gamma;
        const R tau = R(p.timing.tau_N_tilde) * n;
        const R c = tau / n;
        switch (p.kind) {
        case hsd::Kind::Ramsey: add(g, 0, tau); break;
        case hsd::Kind::HahnEcho:
            add(g, 0, tau / 2);
            add(-g, tau / 2, tau);
            break;
        case hsd::Kind::DD:
            for (int k = 0; k < n; ++k) {
                add(g, k * c, k * c + c / 2);
                add(-g, k * c + c / 2, (k + 1) * c);
            }
            break;
        case hsd::Kind::CP:
            for (int k = 0; k < n; ++k) {
                add(g, k * c, k * c + c / 4);
                add(-g, k * c + c / 4, k * c + 3 * c / 4);
                add(g, k * c + 3 * c / 4, (k + 1) * c);
            }
            break;
        default: break;
        }
        return s;
    }
    const R ge = p.e().gamma, gN = p.N().gamma;
    const R te = p.timing.tau_e_tilde, tN = p.timing.tau_N_tilde, ov = p.timing.t_ov;
    const R c = te + tN + 2 * ov;
    for (int k = 0; k < n; ++k) {
        const R b = k * c;
        if (p.kind == hsd::Kind::HsdCP) {
            add(ge, b, b + te / 2);
            add(gN, b + te / 2 + ov, b + te / 2 + ov + tN);
            add(ge, b + te / 2 + 2 * ov + tN, b + c);
        } else {
            add(ge, b, b + te);
            add(gN, b + te + ov, b + te + ov + tN);
        }
    }
    return s;
}

// h = 2 lambda^2 sum_ij a_i a_j int_i int_j exp(-|t1 - t2| / tau_c)
inline R h(const std::vector<Seg>& s, R lambda, R tc)
{
    R acc = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const R L = s[i].t1 - s[i].t0;
        acc += s[i].a * s[i].a * 2 * tc * (L - tc * (1 - exp(-L / tc)));
        for (std::size_t j = i + 1; j < s.size(); ++j) {
            const R Lj = s[j].t1 - s[j].t0;
            const R gap = s[j].t0 - s[i].t1;
            acc += 2 * s[i].a * s[j].a * tc * tc * exp(-gap / tc) * (1 - exp(-L / tc)) * (1 - exp(-Lj / tc));
        }
    }
    return 2 * lambda * lambda * acc;
}

inline R h(const hsd::ProtocolSpec& p, double lambda, double tc) { return h(segments(p), R(lambda), R(tc)); }

// |integral g(t) e^{-i w t} dt|^2
inline R ghat2(const std::vector<Seg>& s, R w)
{
    R re = 0, im = 0;
    for (const auto& x : s) {
        if (w == 0) {
            re += x.a * (x.t1 - x.t0);
            continue;
        }
        re += x.a * (sin(w * x.t1) - sin(w * x.t0)) / w;
        im += x.a * (cos(w * x.t1) - cos(w * x.t0)) / w;
    }
    return re * re + im * im;
}

inline R ghat2(const hsd::ProtocolSpec& p, double w) { return ghat2(segments(p), R(w)); }

inline R moment(const std::vector<Seg>& s, int k)
{
    R acc = 0;
    for (const auto& x : s) acc += x.a * (pow(x.t1, k + 1) - pow(x.t0, k + 1)) / (k + 1);
    return acc;
}

inline double rel(R a, R b) { return static_cast<double>(abs(a - b) / abs(b)); }

}  // namespace oracle
