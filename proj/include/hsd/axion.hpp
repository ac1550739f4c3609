#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "mcsim.hpp"
#include "spectra.hpp"

namespace hsd {

// Natural <-> SI conversion constants (CODATA 2018).
namespace units {
inline constexpr double hbar_eVs = 6.582119569e-16;   // eV s
inline constexpr double hbar_c_eVm = 1.973269804e-7;  // eV m
inline constexpr double tesla_eV2 = 195.3528;         // 1 T in eV^2 (Heaviside-Lorentz, e = sqrt(4 pi alpha))
inline constexpr double m_p_eV = 938.27208816e6;
inline constexpr double m_n_eV = 939.56542052e6;
inline constexpr double m_e_eV = 0.51099895000e6;
inline constexpr double m_N14_eV = 13.040202e9;        // 14N nucleus
inline constexpr double fT = 1e-15;                    // T
inline constexpr double day_s = 86400.0;
inline constexpr double month_s = 30.0 * day_s;
inline constexpr double year_s = 365.25 * day_s;

// eV^-1 <-> s
inline double eV_inv_to_s(double x) { return x * hbar_eVs; }
inline double s_to_eV_inv(double t) { return t / hbar_eVs; }
// mass or energy in eV -> angular frequency rad/s
inline double eV_to_rad_s(double m) { return m / hbar_eVs; }
inline double rad_s_to_eV(double w) { return w * hbar_eVs; }
// GeV/cm^3 -> eV^4
inline double GeV_cm3_to_eV4(double rho)
{
    const double cm_in_eV_inv = 1e-2 / hbar_c_eVm;
    return rho * 1e9 / (cm_in_eV_inv * cm_in_eV_inv * cm_in_eV_inv);
}
}  // namespace units

// Halo parameters: v0 in units of c, rho_dm in GeV/cm^3.
struct AxionHalo {
    double v0 = 1e-3;
    double rho_dm = 0.45;
};

struct HaloDerived {
    double tau_a;             // s, coherence time 2 pi / (m_a v0^2)
    double wavelength;        // m, 2 pi / (m_a v0)
    double signal_amplitude;  // eV^2, sqrt(rho/3) v0
    double a0;                // eV, field amplitude with rho = m_a^2 a0^2 / 2
};

inline HaloDerived halo_derived(double m_a, double v0, double rho_dm)
{
    if (!(m_a > 0.0) || !(v0 >= 0.0 && v0 < 1.0) || !(rho_dm >= 0.0))
        throw InvalidParams("halo_derived: need m_a > 0, 0 <= v0 < 1, rho >= 0");
    const double rho = units::GeV_cm3_to_eV4(rho_dm);
    HaloDerived h;
    h.tau_a = v0 > 0.0 ? units::eV_inv_to_s(2.0 * std::numbers::pi / (m_a * v0 * v0))
                       : std::numeric_limits<double>::infinity();
    h.wavelength = v0 > 0.0 ? 2.0 * std::numbers::pi / (m_a * v0) * units::hbar_c_eVm
                            : std::numeric_limits<double>::infinity();
    h.signal_amplitude = std::sqrt(rho / 3.0) * v0;
    h.a0 = std::sqrt(2.0 * rho) / m_a;
    return h;
}

inline HaloDerived halo_derived(double m_a, const AxionHalo& h) { return halo_derived(m_a, h.v0, h.rho_dm); }

// Dimensionless couplings; masses in eV.
struct AxionCouplings {
    double g_app = 0.0;
    double g_ann = 0.0;
    double g_aee = 0.0;
    double m_p = units::m_p_eV;
    double m_n = units::m_n_eV;
    double m_e = units::m_e_eV;
    double m_N = units::m_N14_eV;

    // eV^-1
    double g_aNN_over_mN() const { return -(g_app / m_p + g_ann / m_n) / 6.0; }
    double g_aee_over_me() const { return g_aee / m_e; }
    double f_a_tilde_inv() const { return 0.5 * std::abs(g_app / m_p + g_ann / m_n); }

    static AxionCouplings nucleon(double f_a_tilde_inv_eV)
    {
        AxionCouplings c;
        c.g_app = 2.0 * f_a_tilde_inv_eV * c.m_p;
        return c;
    }
    static AxionCouplings electron(double g_aee)
    {
        AxionCouplings c;
        c.g_aee = g_aee;
        return c;
    }
};

namespace detail {

enum class SignalSpin { Electron, Nitrogen };

inline SignalSpin signal_spin(const SpinSpecies& s)
{
    if (s.name == "e") return SignalSpin::Electron;
    if (s.name == "N") return SignalSpin::Nitrogen;
    throw UnsupportedProtocol("axion signal needs the built-in electron or 14N species, got '" + s.name + "'");
}

inline double effective_gamma(const SpinSpecies& s, const AxionCouplings& c)
{
    return signal_spin(s) == SignalSpin::Electron ? c.g_aee_over_me() : c.g_aNN_over_mN();
}

inline void check_axion_protocol(const ProtocolSpec& p)
{
    if (p.kind != Kind::Ramsey && p.kind != Kind::HsdCP)
        throw UnsupportedProtocol("axion signal is defined for Ramsey and HSD-CP");
}

// The protocol with each gamma replaced by lambda_a g/m, converted to rad/s:
// its filter integrated against f_a gives the per-measurement signal phase.
inline ProtocolSpec signal_filter_spec(const ProtocolSpec& p, const AxionCouplings& c, double lambda_a)
{
    check_axion_protocol(p);
    ProtocolSpec q = p;
    q.timing.fine_tuned = false;
    for (auto& s : q.spins) s.gamma = lambda_a * effective_gamma(s, c) / units::hbar_eVs;
    return q;
}

template <class T>
T signal_coefficient_t(const ProtocolSpec& p, double m_a, const AxionCouplings& c, double lambda_a)
{
    using std::sin, std::cos;
    check_axion_protocol(p);
    const T m = m_a, la = lambda_a;
    auto nat = [](double t) { return T(units::s_to_eV_inv(t)); };
    if (p.kind == Kind::Ramsey) {
        const T g = effective_gamma(p.spins[0], c);
        const T s = sin(m * nat(p.tau()) / 2);
        return la * la * g * g * s * s / (m * m);
    }
    const auto& tm = p.timing;
    const T gN = effective_gamma(p.N(), c), ge = effective_gamma(p.e(), c);
    const T te = nat(tm.tau_e_tilde), tN = nat(tm.tau_N_tilde);
    const T tt = tN + te + 2 * nat(tm.t_ov);
    const T U = dirichlet_ratio<T>(m * tt / 2, tm.n);
    // sin(m tt/2) - sin(m (tt - te)/2) = 2 cos(m (2 tt - te)/4) sin(m te/4)
    const T br = gN * sin(m * tN / 2) + ge * 2 * cos(m * (2 * tt - te) / 4) * sin(m * te / 4);
    return la * la * U * U * br * br / (m * m);
}

}  // namespace detail

// Signal coefficient A (dimensionless) for Ramsey (the spin's own coupling) or
// HSD-CP. m_a in eV, lambda_a in eV^2.
inline double signal_coefficient(const ProtocolSpec& protocol, double m_a, const AxionCouplings& c, double lambda_a)
{
    if (!(m_a > 0.0)) throw InvalidParams("signal_coefficient: m_a must be positive");
    return static_cast<double>(detail::signal_coefficient_t<mp50>(protocol, m_a, c, lambda_a));
}

inline double signal_coefficient(const ProtocolSpec& protocol, double m_a, const AxionCouplings& c,
                                 const AxionHalo& halo)
{
    return signal_coefficient(protocol, m_a, c, halo_derived(m_a, halo).signal_amplitude);
}

// m_a -> 0 limit: (lambda_a^2/4) (gN/mN tau_N + ge/me tau_e)^2 with times in eV^-1.
inline double signal_coefficient_dc(const ProtocolSpec& protocol, const AxionCouplings& c, double lambda_a)
{
    detail::check_axion_protocol(protocol);
    double s = 0.0;
    if (protocol.kind == Kind::Ramsey)
        s = detail::effective_gamma(protocol.spins[0], c) * units::s_to_eV_inv(protocol.tau());
    else
        s = c.g_aNN_over_mN() * units::s_to_eV_inv(protocol.timing.tau_N()) +
            c.g_aee_over_me() * units::s_to_eV_inv(protocol.timing.tau_e());
    return lambda_a * lambda_a * s * s / 4.0;
}

// Signal PSD [s] at omega_k for coefficient A. dw = omega_k - m_a (rad/s),
// tau_a and T_obs in s. Both branches carry the factor 4 that the double
// time integral of cos(m_a (t - t')) Theta(tau_a - |t - t'|) produces.
inline double signal_psd(double A, double delta_omega, double tau_a, double T_obs)
{
    if (!(T_obs > 0.0) || !(tau_a > 0.0)) throw InvalidParams("signal_psd: need T_obs, tau_a > 0");
    if (A == 0.0) return 0.0;
    const double d = delta_omega;
    // 2 sin^2(x d/2)/d^2 -> x^2/2 and sin(x d)/d -> x near d = 0
    auto sin2_over = [d](double x) {
        const double h = 0.5 * x * d;
        const double s = detail::sinc(h);
        return 0.5 * x * x * s * s;
    };
    auto sin_over = [d](double x) { return x * detail::sinc(x * d); };
    if (T_obs <= tau_a) return 4.0 * A / T_obs * sin2_over(T_obs);
    return 4.0 * (A / T_obs * sin2_over(tau_a) + (T_obs - tau_a) / T_obs * A * sin_over(tau_a));
}

enum class CouplingMode { Nucleon, Electron };

inline std::string_view coupling_mode_name(CouplingMode m) { return m == CouplingMode::Nucleon ? "f_a_tilde_inv" : "g_aee"; }

struct SearchConfig {
    ProtocolSpec protocol;
    std::string label;
    double M = 1e12;
    double T_obs = units::month_s;
    // 10 fT/sqrt(Hz) flat above 1 kHz, 1/f below
    NoisePSD ambient = NoisePSD::piecewise_knee(10.0 * units::fT, 2.0 * std::numbers::pi * 1e3);
    CoherenceModel cm_e{1e-6, 1e-4};
    CoherenceModel cm_N{1e-2, 1e-2};
    double t2_boost = 1.0;  // multiplies T2* and T2
    bool apply_envelope = true;
    bool snap_to_grid = false;  // evaluate at the nearest omega_k = 2 pi k / T_obs, k >= 1
    AxionHalo halo;
    CouplingMode mode = CouplingMode::Nucleon;

    double tau() const { return protocol.tau(); }
    double N_obs() const { return std::floor(T_obs / tau()); }

    void validate() const
    {
        protocol.validate();
        detail::check_axion_protocol(protocol);
        if (!(M >= 1.0)) throw InvalidParams("SearchConfig: M must be >= 1");
        if (!(T_obs > tau())) throw InvalidParams("SearchConfig: T_obs must exceed the sequence time");
        if (!(t2_boost > 0.0)) throw InvalidParams("SearchConfig: t2_boost must be positive");
    }

    AxionCouplings unit_couplings() const
    {
        return mode == CouplingMode::Nucleon ? AxionCouplings::nucleon(1e-9) : AxionCouplings::electron(1.0);
    }
};

// Amplitude factor applied to the signal (squared in the PSD).
inline double signal_envelope(const SearchConfig& cfg)
{
    if (!cfg.apply_envelope) return 1.0;
    auto boosted = [&](CoherenceModel cm) {
        cm.T2_star *= cfg.t2_boost;
        cm.T2 *= cfg.t2_boost;
        return cm;
    };
    const auto& p = cfg.protocol;
    if (p.kind == Kind::HsdCP) return decoherence_envelope(p.timing.n, p.timing.tau_e(), boosted(cfg.cm_e));
    const bool electron = detail::signal_spin(p.spins[0]) == detail::SignalSpin::Electron;
    return decoherence_envelope(1, p.tau(), boosted(electron ? cfg.cm_e : cfg.cm_N));
}

struct NoiseFloor {
    double B_k;     // s, ambient contribution G(omega_k)
    double B_proj;  // s, tau / M
    double total;   // s
    double eta_n;   // T/sqrt(Hz), flat noise equivalent to B_proj (Ramsey kinds), NaN otherwise
};

inline double eta_equivalent(double gamma, double tau, double M) { return 1.0 / (std::abs(gamma) * std::sqrt(M * tau)); }

inline NoiseFloor noise_floor(const SearchConfig& cfg, double omega_k)
{
    NoiseFloor nf;
    const auto f = build_filter(cfg.protocol);
    nf.B_k = cfg.ambient.is_zero() ? 0.0 : transfer(f, cfg.ambient, omega_k);
    nf.B_proj = cfg.tau() / cfg.M;
    nf.total = nf.B_k + nf.B_proj;
    nf.eta_n = cfg.protocol.kind == Kind::Ramsey ? eta_equivalent(cfg.protocol.spins[0].gamma, cfg.tau(), cfg.M)
                                                 : std::numeric_limits<double>::quiet_NaN();
    return nf;
}

struct SensitivityPoint {
    double m_a;        // eV
    double omega;      // rad/s where S_k and the floor are evaluated
    double threshold;  // GeV^-1 (f_a_tilde_inv) or dimensionless (g_aee); NaN when not solvable
    bool solved;
    double signal_per_unit;  // S_k at the base coupling, s
    double noise;            // total floor, s
};

struct SensitivityCurve {
    std::string label;
    CouplingMode mode = CouplingMode::Nucleon;
    std::vector<SensitivityPoint> points;
    std::vector<std::string> warnings;
};

inline double snapped_omega(double omega, double T_obs)
{
    const double step = 2.0 * std::numbers::pi / T_obs;
    return std::max(1.0, std::round(omega / step)) * step;
}

// Solves S_k(c * base) * envelope^2 = floor for the scale c; S is quadratic in c.
inline SensitivityPoint sensitivity_point(const SearchConfig& cfg, double m_a)
{
    if (!(m_a > 0.0)) throw InvalidParams("sensitivity_point: m_a must be positive");
    const auto base = cfg.unit_couplings();
    const auto halo = halo_derived(m_a, cfg.halo);
    const double w_a = units::eV_to_rad_s(m_a);
    const double w = cfg.snap_to_grid ? snapped_omega(w_a, cfg.T_obs) : w_a;
    const double A = signal_coefficient(cfg.protocol, m_a, base, halo.signal_amplitude);
    const double env = signal_envelope(cfg);
    SensitivityPoint pt{m_a, w, std::numeric_limits<double>::quiet_NaN(), false, 0.0, 0.0};
    pt.signal_per_unit = signal_psd(A, w - w_a, halo.tau_a, cfg.T_obs) * env * env;
    pt.noise = noise_floor(cfg, w).total;
    if (!(pt.signal_per_unit > 0.0) || !std::isfinite(pt.signal_per_unit) || !std::isfinite(pt.noise)) return pt;
    const double scale = std::sqrt(pt.noise / pt.signal_per_unit);
    const double unit = cfg.mode == CouplingMode::Nucleon ? base.f_a_tilde_inv() * 1e9 : base.g_aee;
    pt.threshold = scale * unit;
    pt.solved = true;
    return pt;
}

inline double solve_threshold(const SearchConfig& cfg, double m_a)
{
    auto pt = sensitivity_point(cfg, m_a);
    if (!pt.solved) throw NoSolution("signal does not depend on the coupling at this mass");
    return pt.threshold;
}

inline SensitivityCurve sensitivity_curve(const SearchConfig& cfg, const std::vector<double>& masses, int threads = 0)
{
    cfg.validate();
    SensitivityCurve c;
    c.label = cfg.label;
    c.mode = cfg.mode;
    std::vector<double> m = masses;
    std::sort(m.begin(), m.end());
    c.points.resize(m.size());
    parallel_for(m.size(), threads, [&](std::size_t i) { c.points[i] = sensitivity_point(cfg, m[i]); });
    const double w_max = 1.0 / cfg.tau();
    auto eV = [](double x) {
        std::ostringstream os;
        os << std::setprecision(3) << x << " eV";
        return os.str();
    };
    const auto above = std::find_if(c.points.begin(), c.points.end(), [&](const auto& p) { return p.omega > w_max; });
    if (above != c.points.end())
        c.warnings.push_back(std::to_string(c.points.end() - above) + " masses from " + eV(above->m_a) +
                             " lie above 1/tau; the low-frequency treatment degrades there");
    for (const auto& p : c.points)
        if (!p.solved) c.warnings.push_back("no solution at m_a = " + eV(p.m_a));
    return c;
}

// ---- time-series Monte Carlo ----

struct EmpiricalPSD {
    std::vector<double> omega;  // rad/s, 2 pi k / T_obs
    std::vector<double> P;      // s
    double tau = 0.0;
    double T_obs = 0.0;
};

inline constexpr std::size_t max_observations = std::size_t(1) << 24;

// Repeated measurements phi_j (j = 0 .. N_obs - 1, t_j = j tau) under the
// axion field plus projection noise of variance 1/M, and the PSD
// P_k = tau + (tau^2/T_obs) |sum_j exp(2 pi i k j / N) phi_j|^2.
// The field direction and phase are redrawn every tau_a. Ambient magnetic
// noise is not added; its contribution is G(omega_k) by construction.
inline EmpiricalPSD simulate_axion_timeseries(const SearchConfig& cfg, double m_a, const AxionCouplings& couplings,
                                              std::uint64_t seed)
{
    cfg.validate();
    const double N_real = cfg.N_obs();
    if (N_real > double(max_observations) || N_real < 2) throw InvalidParams("simulate_axion_timeseries: N_obs out of range");
    const std::size_t N = static_cast<std::size_t>(N_real);
    const double tau = cfg.tau();
    const auto halo = halo_derived(m_a, cfg.halo);
    const double w_a = units::eV_to_rad_s(m_a);
    const double env = signal_envelope(cfg);
    // conj(ghat_a(w_a)) carries the filter response at the axion frequency
    // protocol windows with each gamma swapped for lambda_a g/m; a zero coupling just silences its spin
    auto fa = build_filter(cfg.protocol);
    for (auto& s : fa.segments) {
        const auto& sp = cfg.protocol.spins[s.spin];
        s.a = s.a / sp.gamma * halo.signal_amplitude * detail::effective_gamma(sp, couplings) / units::hbar_eVs;
    }
    const std::complex<double> c = std::conj(std::complex<double>(fourier<long double>(fa, w_a))) * env;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double proj = 1.0 / std::sqrt(cfg.M);
    std::vector<std::complex<double>> phi(N);
    double block_end = -1.0, u = 0.0, ph = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
        const double t = j * tau;
        if (t >= block_end) {
            u = std::sqrt(3.0) * (2.0 * uni(rng) - 1.0);  // sqrt(3) v_z, unit mean square
            ph = 2.0 * std::numbers::pi * uni(rng);
            block_end = (block_end < 0.0 ? 0.0 : block_end) + halo.tau_a;
        }
        const double signal = std::numbers::sqrt2 * u * std::real(std::polar(1.0, w_a * t + ph) * c);
        phi[j] = signal + proj * gauss(rng);
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> X;
    fft.inv(X, phi);  // sum_j phi_j exp(+2 pi i k j / N) / N
    EmpiricalPSD out;
    out.tau = tau;
    out.T_obs = N * tau;
    out.omega.resize(N);
    out.P.resize(N);
    for (std::size_t k = 0; k < N; ++k) {
        out.omega[k] = 2.0 * std::numbers::pi * k / out.T_obs;
        out.P[k] = tau + tau * tau / out.T_obs * std::norm(X[k] * double(N));
    }
    return out;
}

}  // namespace hsd
