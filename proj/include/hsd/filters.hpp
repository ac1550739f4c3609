#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <ostream>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "model.hpp"

namespace hsd {

using mp50 = boost::multiprecision::cpp_bin_float_50;

// One window of constant sensitivity. `spin` indexes ProtocolSpec::spins
// (0 = electron or the single species, 1 = nitrogen). Boundaries are kept in
// long double: fine-tuned filters cancel to ~1e-12 of gamma_e tau_e, so
// double-rounded edges would set the floor of every low-frequency quantity.
struct Segment {
    long double t0 = 0.0;
    long double t1 = 0.0;
    double a = 0.0;
    int spin = 0;

    long double length() const { return t1 - t0; }
};

// Piecewise-constant g(t) on [0, total_time]; uncovered time has g = 0.
struct FilterFunction {
    std::vector<Segment> segments;
    double total_time = 0.0;
};

namespace detail {
inline void push(std::vector<Segment>& v, long double t0, long double t1, double a, int spin)
{
    if (t1 > t0) v.push_back({t0, t1, a, spin});
}
}  // namespace detail

inline FilterFunction build_filter(const ProtocolSpec& spec)
{
    spec.validate();
    const auto& tm = spec.timing;
    const int n = tm.n;
    using LD = long double;
    FilterFunction f;
    f.total_time = spec.tau();
    auto& s = f.segments;

    if (!is_hybrid(spec.kind)) {
        const double g = spec.spins[0].gamma;
        const LD tt = tm.tau_N_tilde;
        switch (spec.kind) {
        case Kind::Ramsey:
            detail::push(s, 0, tt, g, 0);
            break;
        case Kind::HahnEcho:
            detail::push(s, 0, tt / 2, g, 0);
            detail::push(s, tt / 2, tt, -g, 0);
            break;
        case Kind::DD:
            for (int k = 0; k < n; ++k) {
                LD b = k * tt;
                detail::push(s, b, b + tt / 2, g, 0);
                detail::push(s, b + tt / 2, (k + 1) * tt, -g, 0);
            }
            break;
        case Kind::CP:
            for (int k = 0; k < n; ++k) {
                LD b = k * tt;
                detail::push(s, b, b + tt / 4, g, 0);
                detail::push(s, b + tt / 4, b + 3 * tt / 4, -g, 0);
                detail::push(s, b + 3 * tt / 4, (k + 1) * tt, g, 0);
            }
            break;
        default:
            break;
        }
        return f;
    }

    const double ge = spec.e().gamma, gN = spec.N().gamma;
    const LD te = tm.tau_e_tilde, tN = tm.tau_N_tilde, ov = tm.t_ov;
    const LD tt = tN + te + 2 * ov;
    for (int k = 0; k < n; ++k) {
        LD b = k * tt;
        if (spec.kind == Kind::HsdCP) {
            detail::push(s, b, b + te / 2, ge, 0);
            detail::push(s, b + te / 2 + ov, b + te / 2 + ov + tN, gN, 1);
            detail::push(s, b + te / 2 + 2 * ov + tN, (k + 1) * tt, ge, 0);
        } else {
            // electron dwell first, then the nuclear dwell; gaps carry no phase
            detail::push(s, b, b + te, ge, 0);
            detail::push(s, b + te + ov, b + te + ov + tN, gN, 1);
        }
    }
    return f;
}

// Canonical form: sorted, empty windows dropped, equal neighbours merged.
inline FilterFunction merged(const FilterFunction& f, double rel_tol = 1e-12)
{
    FilterFunction out;
    out.total_time = f.total_time;
    auto segs = f.segments;
    std::sort(segs.begin(), segs.end(), [](const Segment& x, const Segment& y) { return x.t0 < y.t0; });
    const long double tol = rel_tol * std::max(f.total_time, 1e-300);
    for (const auto& sg : segs) {
        if (sg.length() <= tol || sg.a == 0.0) continue;
        if (!out.segments.empty()) {
            auto& last = out.segments.back();
            if (std::abs(last.t1 - sg.t0) <= tol && last.a == sg.a && last.spin == sg.spin) {
                last.t1 = sg.t1;
                continue;
            }
        }
        out.segments.push_back(sg);
    }
    return out;
}

inline bool same_structure(const FilterFunction& x, const FilterFunction& y, double rel_tol = 1e-12)
{
    auto a = merged(x, rel_tol), b = merged(y, rel_tol);
    if (a.segments.size() != b.segments.size()) return false;
    const double T = std::max(x.total_time, y.total_time);
    for (std::size_t i = 0; i < a.segments.size(); ++i) {
        const auto &p = a.segments[i], &q = b.segments[i];
        if (std::abs(p.t0 - q.t0) > rel_tol * T || std::abs(p.t1 - q.t1) > rel_tol * T) return false;
        if (std::abs(p.a - q.a) > rel_tol * std::max(std::abs(p.a), std::abs(q.a))) return false;
    }
    return true;
}

// Exact integral of t^k g(t) for any k, in scalar type T.
template <class T = mp50>
T raw_moment(const FilterFunction& f, int k)
{
    using std::pow;
    T acc = 0;
    for (const auto& s : f.segments) {
        T t0 = s.t0, t1 = s.t1;
        acc += T(s.a) * (pow(t1, k + 1) - pow(t0, k + 1)) / T(k + 1);
    }
    return acc;
}

template <>
inline double raw_moment<double>(const FilterFunction& f, int k)
{
    return static_cast<double>(raw_moment<mp50>(f, k));
}

inline double moment(const FilterFunction& f, int k)
{
    if (k < 0 || k > 4) throw UnsupportedOrder("moment: order must be in 0..4");
    return raw_moment<double>(f, k);
}

namespace detail {
// sin(x)/x with a series near zero
template <class T>
T sinc(T x)
{
    using std::abs, std::sin;
    if (abs(x) < T(1e-4)) {
        T x2 = x * x;
        return T(1) - x2 / T(6) + x2 * x2 / T(120);
    }
    return sin(x) / x;
}
}  // namespace detail

// ghat(w) = integral g(t) exp(-i w t) dt, exact per segment.
template <class T = double>
std::complex<T> fourier(const FilterFunction& f, double omega)
{
    using C = std::complex<T>;
    const T w = omega;
    C acc(0, 0);
    for (const auto& s : f.segments) {
        const T t0 = s.t0, t1 = s.t1, a = s.a;
        if (std::abs(omega * static_cast<double>(s.t1)) < 1e-6) {
            // 4th-order Taylor of the segment integral
            C iw(0, -w), term(1, 0);
            T p0 = t0, p1 = t1, fact = 1;
            C sum(0, 0);
            for (int k = 0; k <= 4; ++k) {
                if (k > 0) {
                    term *= iw;
                    fact *= k;
                    p0 *= t0;
                    p1 *= t1;
                }
                sum += term * ((p1 - p0) / (T(k + 1) * fact));
            }
            acc += a * sum;
        } else {
            const T L = t1 - t0, c = T(0.5) * (t0 + t1);
            acc += a * L * detail::sinc(T(0.5) * w * L) * std::polar(T(1), -w * c);
        }
    }
    return acc;
}

inline void write_segments_csv(std::ostream& os, const FilterFunction& f)
{
    os << "t_start,t_end,amplitude\n";
    os.precision(17);
    for (const auto& s : f.segments)
        os << static_cast<double>(s.t0) << ',' << static_cast<double>(s.t1) << ',' << s.a << '\n';
}

}  // namespace hsd
