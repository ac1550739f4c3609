#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include "filters.hpp"
#include "relax.hpp"

namespace hsd {

// Two-sided angular PSD P(w) [T^2 s], even in w.
struct NoisePSD {
    enum class Kind { White, Lorentzian, OneOverF, PiecewiseKnee, Tabulated };

    Kind kind = Kind::White;
    double amplitude = 0.0;  // T/sqrt(Hz): white level, 1/f level at omega_ref, or the flat level
    double lambda = 0.0;     // Lorentzian
    double tau_c = 1.0;      // Lorentzian
    double omega_ref = 1.0;  // OneOverF reference, or the knee for PiecewiseKnee
    std::vector<std::pair<double, double>> points;  // Tabulated (omega, P), omega ascending

    static NoisePSD white(double amp) { return {Kind::White, amp}; }
    static NoisePSD lorentzian(double lambda, double tau_c)
    {
        NoisePSD p;
        p.kind = Kind::Lorentzian;
        p.lambda = lambda;
        p.tau_c = tau_c;
        return p;
    }
    static NoisePSD one_over_f(double amp_at_ref, double omega_ref)
    {
        NoisePSD p;
        p.kind = Kind::OneOverF;
        p.amplitude = amp_at_ref;
        p.omega_ref = omega_ref;
        return p;
    }
    // flat above the knee, rising as 1/omega (amplitude as omega^-1/2) below
    static NoisePSD piecewise_knee(double flat_amp, double knee)
    {
        NoisePSD p;
        p.kind = Kind::PiecewiseKnee;
        p.amplitude = flat_amp;
        p.omega_ref = knee;
        return p;
    }
    // log-log interpolation; constant below the first point, zero above the last
    static NoisePSD tabulated(std::vector<std::pair<double, double>> pts)
    {
        NoisePSD p;
        p.kind = Kind::Tabulated;
        std::sort(pts.begin(), pts.end());
        for (const auto& [w, v] : pts)
            if (!(w > 0.0) || !(v >= 0.0)) throw InvalidParams("tabulated PSD needs omega > 0, P >= 0");
        p.points = std::move(pts);
        return p;
    }

    bool is_zero() const
    {
        switch (kind) {
        case Kind::White:
        case Kind::OneOverF:
        case Kind::PiecewiseKnee: return amplitude == 0.0;
        case Kind::Lorentzian: return lambda == 0.0;
        case Kind::Tabulated:
            return std::all_of(points.begin(), points.end(), [](const auto& p) { return p.second == 0.0; });
        }
        return false;
    }

    double operator()(double omega) const
    {
        const double w = std::abs(omega);
        switch (kind) {
        case Kind::White: return amplitude * amplitude;
        case Kind::Lorentzian: return 2.0 * lambda * lambda * tau_c / (1.0 + w * w * tau_c * tau_c);
        case Kind::OneOverF:
            return w == 0.0 ? std::numeric_limits<double>::infinity() : amplitude * amplitude * omega_ref / w;
        case Kind::PiecewiseKnee:
            if (w >= omega_ref) return amplitude * amplitude;
            return w == 0.0 ? std::numeric_limits<double>::infinity() : amplitude * amplitude * omega_ref / w;
        case Kind::Tabulated: {
            if (points.empty() || w > points.back().first) return 0.0;
            if (w <= points.front().first) return points.front().second;
            auto it = std::lower_bound(points.begin(), points.end(), std::make_pair(w, -1.0));
            const auto& [w1, p1] = *it;
            const auto& [w0, p0] = *(it - 1);
            if (p0 <= 0.0 || p1 <= 0.0) return p0 + (p1 - p0) * (w - w0) / (w1 - w0);
            double s = std::log(w / w0) / std::log(w1 / w0);
            return std::exp(std::log(p0) + s * std::log(p1 / p0));
        }
        }
        return 0.0;
    }
};

// |ghat(w)|^2 with a moment series near w = 0, where the segment sum
// cancels (fine-tuned filters vanish like w^2 there).
class Gain {
public:
    explicit Gain(FilterFunction f, int order = 12) : f_(std::move(f)), order_(order)
    {
        for (int k = 0; k <= order_; ++k) m_.push_back(static_cast<long double>(raw_moment<mp50>(f_, k)));
    }

    std::complex<long double> ghat(double omega) const
    {
        if (std::abs(omega) * f_.total_time < 1e-2) {
            std::complex<long double> acc(0, 0), term(1, 0), iw(0, -static_cast<long double>(omega));
            long double fact = 1;
            for (int k = 0; k <= order_; ++k) {
                if (k > 0) {
                    term *= iw;
                    fact *= k;
                }
                acc += term * (m_[k] / fact);
            }
            return acc;
        }
        return fourier<long double>(f_, omega);
    }

    double operator()(double omega) const { return static_cast<double>(std::norm(ghat(omega))); }

    const FilterFunction& filter() const { return f_; }

private:
    FilterFunction f_;
    int order_;
    std::vector<long double> m_;
};

inline double transfer(const FilterFunction& f, const NoisePSD& psd, double omega)
{
    double g = Gain(f)(omega);
    return g == 0.0 ? 0.0 : psd(omega) * g;
}

namespace detail {
// sin(n x)/sin(x) as the Chebyshev polynomial U_{n-1}(cos x)
template <class T>
T dirichlet_ratio(const T& x, int n)
{
    using std::cos;
    T c = cos(x), u0 = 1, u1 = 2 * c;
    if (n == 1) return 1;
    for (int k = 2; k < n; ++k) {
        T u2 = 2 * c * u1 - u0;
        u0 = u1;
        u1 = u2;
    }
    return u1;
}
// sin(w L / 2) / w
template <class T>
T half_sin_over(const T& w, const T& L)
{
    return L / 2 * sinc<T>(w * L / 2);
}
}  // namespace detail

// Closed-form |ghat(w)|^2 for Ramsey, HSD-CP and HSD-DD, evaluated in T.
template <class T>
T gain_closed_t(const ProtocolSpec& spec, double omega)
{
    using std::cos;
    spec.validate();
    const T w = omega;
    if (spec.kind == Kind::Ramsey) {
        // 2 gamma^2 (1 - cos w tau)/w^2 = gamma^2 tau^2 sinc^2(w tau / 2)
        T s = 2 * detail::half_sin_over<T>(w, T(spec.tau()));
        T g = spec.spins[0].gamma;
        return g * g * s * s;
    }
    if (!is_hybrid(spec.kind)) throw UnsupportedKind("transfer_closed: no closed form for this kind; use transfer()");
    const auto& tm = spec.timing;
    const T ge = spec.e().gamma, gN = spec.N().gamma;
    const T te = tm.tau_e_tilde, tN = tm.tau_N_tilde, tt = tN + te + 2 * T(tm.t_ov);
    const T U = detail::dirichlet_ratio<T>(w * tt / 2, tm.n);
    if (spec.kind == Kind::HsdCP) {
        // [gN sin(w tN/2) + ge (sin(w tt/2) - sin(w (tt - te)/2))] / w
        T br = gN * detail::half_sin_over<T>(w, tN) +
               2 * ge * cos(w * (2 * tt - te) / 4) * detail::half_sin_over<T>(w, te / 2);
        return 4 * U * U * br * br;
    }
    T sN = detail::half_sin_over<T>(w, tN), se = detail::half_sin_over<T>(w, te);
    return 4 * U * U * (gN * gN * sN * sN + ge * ge * se * se + 2 * gN * ge * sN * se * cos(w * tt / 2));
}

// Closed-form G. Evaluated in 50 digits: near the zeros of G and at low
// frequency for fine-tuned timings the expressions cancel heavily.
inline double transfer_closed(const ProtocolSpec& spec, const NoisePSD& psd, double omega)
{
    const double g2 = static_cast<double>(gain_closed_t<mp50>(spec, omega));
    return g2 == 0.0 ? 0.0 : psd(omega) * g2;
}

// Coefficients of G/P in powers of omega up to `order` (odd powers are zero):
// c0 = M0^2, c2 = M1^2 - M0 M2, c4 = M2^2/4 + M0 M4/12 - M1 M3/3.
inline std::vector<double> lowfreq_expansion(const ProtocolSpec& spec, int order = 4)
{
    if (!is_hybrid(spec.kind)) throw UnsupportedKind("lowfreq_expansion: hybrid kinds only");
    if (order < 0 || order > 4) throw UnsupportedOrder("lowfreq_expansion: order must be <= 4");
    const auto f = build_filter(spec);
    mp50 M[5];
    for (int k = 0; k <= 4; ++k) M[k] = raw_moment<mp50>(f, k);
    std::vector<double> c(order + 1, 0.0);
    c[0] = static_cast<double>(M[0] * M[0]);
    if (order >= 2) c[2] = static_cast<double>(M[1] * M[1] - M[0] * M[2]);
    if (order >= 4) c[4] = static_cast<double>(M[2] * M[2] / 4 + M[0] * M[4] / 12 - M[1] * M[3] / 3);
    return c;
}

struct SpectralIntegral {
    double exponent;  // 4 * integral_0^inf G dw / 2 pi
    double sigma_x;
    double error_estimate;
    int panels;
};

namespace detail {

// Jumps of g: ghat(w) = sum_e J_e exp(-i w t_e) / (i w).
struct Edge {
    long double t;
    double jump;
};

inline std::vector<Edge> filter_edges(const FilterFunction& f)
{
    std::vector<Edge> out;
    const long double tol = 1e-15L * f.total_time;
    auto add = [&](long double t, double j) {
        if (!out.empty() && std::abs(out.back().t - t) <= tol)
            out.back().jump += j;
        else
            out.push_back({t, j});
    };
    for (const auto& s : merged(f, 0.0).segments) {
        add(s.t0, s.a);
        add(s.t1, -s.a);
    }
    std::erase_if(out, [](const Edge& e) { return e.jump == 0.0; });
    return out;
}

}  // namespace detail

// <sigma_x> = exp(-4 int_0^inf G dw/2pi).
// Below W = 64 pi/T: Gauss-Kronrod panels of width pi/T (one lobe of
// |ghat|^2 each) plus log-spaced panels under the first lobe.
// Above W, with jumps J_e of g at t_e (which sum to zero),
// |ghat|^2 = -(2/w^2) sum_{e<e'} J J' (1 - cos(w (t_e' - t_e))) exactly, so the
// tail is one non-negative integral per distinct edge separation (Ooura's
// method once oscillations dominate). Short separations then carry no
// cancellation against a large diagonal term. Throws NonConvergent when the
// combined error estimate exceeds rel_tol of the exponent (or abs_tol).
inline SpectralIntegral relaxation_from_spectrum(const FilterFunction& f, const NoisePSD& psd,
                                                 double rel_tol = 1e-5, double abs_tol = 1e-12)
{
    if (psd.is_zero()) return {0.0, 1.0, 0.0, 0};
    using boost::math::quadrature::gauss_kronrod;
    const Gain gain(f);
    const double T = f.total_time;
    auto G = [&](double w) {
        double g = gain(w);
        return g == 0.0 ? 0.0 : psd(w) * g;
    };
    const double width = std::numbers::pi / T;
    const bool bounded = psd.kind == NoisePSD::Kind::Tabulated;
    const double W = bounded ? psd.points.back().first : 64.0 * width;

    std::vector<double> brk{0.0};
    for (double e = width * 1e-8; e < std::min(width, W); e *= 10.0) brk.push_back(e);
    for (double e = width; e < W; e += width) brk.push_back(e);
    brk.push_back(W);

    double total = 0.0, err = 0.0;
    int panels = 0;
    for (std::size_t i = 0; i + 1 < brk.size(); ++i) {
        double e = 0.0;
        total += gauss_kronrod<double, 31>::integrate(G, brk[i], brk[i + 1], 10, 1e-12, &e);
        err += e;
        ++panels;
    }

    if (!bounded) {
        const auto edges = detail::filter_edges(f);
        auto env = [&](double w) { return psd(w) / (w * w); };
        // distinct separations with their summed weights -2 J J'
        std::vector<std::pair<long double, double>> lags;
        for (std::size_t i = 0; i < edges.size(); ++i)
            for (std::size_t j = i + 1; j < edges.size(); ++j)
                lags.emplace_back(edges[j].t - edges[i].t, -2.0 * edges[i].jump * edges[j].jump);
        std::sort(lags.begin(), lags.end());
        std::vector<std::pair<long double, double>> uniq;
        for (const auto& l : lags) {
            if (!uniq.empty() && l.first - uniq.back().first <= 1e-13L * uniq.back().first)
                uniq.back().second += l.second;
            else
                uniq.push_back(l);
        }
        boost::math::quadrature::ooura_fourier_cos<double> ocos;
        for (const auto& [lag, wgt] : uniq) {
            if (wgt == 0.0) continue;
            const double d = static_cast<double>(lag);
            // K(d) = int_W^inf P (1 - cos w d)/w^2: octaves up to X0 = max(W, 16 pi/d),
            // then the smooth part minus an Ooura cosine integral.
            const double X0 = std::max(W, 16.0 * std::numbers::pi / d);
            auto k1 = [&](double w) {
                const double sh = std::sin(0.5 * w * d);
                return 2.0 * env(w) * sh * sh;
            };
            double K = 0.0, kerr = 0.0;
            for (double lo = W; lo < X0;) {
                const double hi = std::min(2.0 * lo, X0);
                double e = 0.0;
                K += gauss_kronrod<double, 31>::integrate(k1, lo, hi, 12, 1e-13, &e);
                kerr += e;
                lo = hi;
            }
            double X = X0;
            for (int oct = 0; oct < 400; ++oct) {
                double e = 0.0;
                K += gauss_kronrod<double, 31>::integrate(env, X, 2.0 * X, 10, 1e-13, &e);
                kerr += e;
                X *= 2.0;
                if (psd(X) / X <= 1e-16 * std::abs(K)) break;
            }
            kerr += psd(X) / X;
            auto [c, ec] = ocos.integrate([&](double u) { return env(X0 + u); }, d);
            auto [sn, es] = boost::math::quadrature::ooura_fourier_sin<double>().integrate(
                [&](double u) { return env(X0 + u); }, d);
            K -= std::cos(X0 * d) * c - std::sin(X0 * d) * sn;
            kerr += ec * std::abs(c) + es * std::abs(sn);
            total += wgt * K;
            err += std::abs(wgt) * kerr;
        }
    }

    const double k = 4.0 / (2.0 * std::numbers::pi);
    const double expo = k * total;
    if (!(k * err <= std::max(rel_tol * std::abs(expo), abs_tol))) {
        std::ostringstream os;
        os << std::setprecision(3) << "relaxation_from_spectrum: error estimate " << k * err
           << " exceeds tolerance for exponent " << expo;
        throw NonConvergent(os.str());
    }
    return {expo, std::exp(-expo), k * err, panels};
}

// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline std::vector<double> logspace(double lo, double hi, int count)
{
    std::vector<double> v(count);
    for (int i = 0; i < count; ++i)
        v[i] = lo * std::pow(hi / lo, count == 1 ? 0.0 : double(i) / (count - 1));
    return v;
}

// Low-frequency slope of G for a white PSD over [lo, hi] * 2 pi / tau_N.
inline double lowfreq_slope(const ProtocolSpec& spec, double lo = 1e-3, double hi = 1e-2, int points = 24)
{
    const auto f = build_filter(spec);
    const Gain gain(f);
    const double base = 2.0 * std::numbers::pi / spec.timing.tau_N();
    auto ws = logspace(lo * base, hi * base, points);
    std::vector<double> gs;
    for (double w : ws) gs.push_back(gain(w));
    return loglog_slope(ws, gs);
}

}  // namespace hsd
