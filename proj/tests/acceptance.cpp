// Acceptance run: one PASS/FAIL line per criterion, each with its wall-clock limit.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <hsd/axion.hpp>
#include <hsd/relax.hpp>
#include <hsd/scenarios.hpp>
#include <hsd/spectra.hpp>

#include "oracles.hpp"

using namespace hsd;

namespace {

const SpinSpecies& e = species::electron;
const SpinSpecies& N = species::nitrogen14;
constexpr double pi = std::numbers::pi;
const Kind all_kinds[] = {Kind::Ramsey, Kind::HahnEcho, Kind::DD, Kind::CP, Kind::HsdCP, Kind::HsdDD};

struct Outcome {
    bool ok = true;
    std::ostringstream note;

    // records one sub-check; the line fails if any sub-check does
    void check(bool pass, const std::string& what)
    {
        ok = ok && pass;
        note << (note.tellp() > 0 ? "; " : "") << what << (pass ? "" : " [miss]");
    }
};

std::string num(double x, int prec = 3)
{
    std::ostringstream os;
    os.precision(prec);
    os << x;
    return os.str();
}

ProtocolSpec random_spec(Kind k, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double tau = std::pow(10.0, -6 + 3 * u(rng));
    int n = 1 + static_cast<int>(u(rng) * 8);
    if (!is_hybrid(k)) {
        if (k == Kind::Ramsey || k == Kind::HahnEcho) n = 1;
        return ProtocolSpec::single(k, e, tau, n);
    }
    const double tov = u(rng) < 0.5 ? 0.0 : 0.1 * u(rng) * tau / n;
    return ProtocolSpec::hybrid(k, e, N, build_timing(tau / n, tov, n, e, N));
}

// ---- criteria ----

void oracle_a(Outcome& o)
{
    constexpr double tol = 1e-8;
    constexpr int configs = 100;
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0, tc_lo = 1e300, tc_hi = 0;
    for (int i = 0; i < configs; ++i)
        for (Kind k : all_kinds) {
            const auto p = random_spec(k, rng);
            // tau_c log-uniform over 10 decades around the sequence
            const double tc = p.tau() * std::pow(10.0, -7 + 10 * u(rng));
            tc_lo = std::min(tc_lo, tc);
            tc_hi = std::max(tc_hi, tc);
            const OUNoise nz{1e-9, tc};
            const double hc = h_closed(p, nz);
            worst = std::max(worst, std::abs(hc - h_oracle(build_filter(p), nz)) / std::abs(hc));
            worst = std::max(worst, oracle::rel(oracle::R(hc), oracle::h(p, nz.lambda, tc)));
        }
    o.check(worst <= tol, "max rel " + num(worst) + " <= " + num(tol));
    o.check(std::log10(tc_hi / tc_lo) >= 8, "tau_c span " + num(std::log10(tc_hi / tc_lo)) + " decades");
}

void oracle_b(Outcome& o)
{
    constexpr double tol = 1e-10;
    constexpr int configs = 30, omegas = 200;
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Kind kinds[] = {Kind::Ramsey, Kind::HsdCP, Kind::HsdDD};
    double worst = 0;
    for (int i = 0; i < configs; ++i) {
        const auto p = random_spec(kinds[i % 3], rng);
        const auto segs = oracle::segments(p);
        const auto psd = NoisePSD::lorentzian(1e-9, p.tau() * std::pow(10.0, -3 + 6 * u(rng)));
        for (int j = 0; j < omegas; ++j) {
            const double w = std::pow(10.0, -3 + 6 * u(rng)) * 2 * pi / p.tau();
            const auto ref = oracle::ghat2(segs, oracle::R(w)) * oracle::R(psd(w));
            worst = std::max(worst, oracle::rel(oracle::R(transfer_closed(p, psd, w)), ref));
        }
    }
    o.check(worst <= tol, "max rel " + num(worst) + " <= " + num(tol) + " over " + std::to_string(configs * omegas) +
                              " (config, omega) pairs");
}

void cp_limit(Outcome& o)
{
    constexpr double tol = 1e-10;
    const double g = e.gamma, tt = 1e-6;
    const SpinSpecies a{"a", g}, b{"b", -g};
    double wh = 0, wg = 0;
    for (int n : {1, 2, 3, 6}) {
        ProtocolTiming t;
        t.tau_N_tilde = t.tau_e_tilde = tt / 2;
        t.n = n;
        const auto hsd = ProtocolSpec::hybrid(Kind::HsdCP, a, b, t);
        const auto cp = ProtocolSpec::single(Kind::CP, a, n * tt, n);
        const auto cp_segs = oracle::segments(cp);
        for (double x : logspace(1e-4, 1e4, 9)) {
            const OUNoise nz{1e-9, x * tt};
            wh = std::max(wh, std::abs(h_closed(hsd, nz) / h_closed(cp, nz) - 1));
        }
        // random frequencies: a grid would land on exact harmonic zeros, where relative error is undefined
        std::mt19937_64 rng(103 + n);
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        for (int j = 0; j < 200; ++j) {
            const double w = std::pow(10.0, u(rng)) * 2 * pi / tt;
            const auto ref = oracle::ghat2(cp_segs, oracle::R(w));
            wg = std::max(wg, oracle::rel(oracle::R(transfer_closed(hsd, NoisePSD::white(1.0), w)), ref));
        }
    }
    o.check(wh <= tol, "h max rel " + num(wh));
    o.check(wg <= tol, "G max rel " + num(wg));
}

void spectral_identity(Outcome& o)
{
    constexpr double tol = 1e-6;
    double worst = 0;
    const auto ramsey = ProtocolSpec::single(Kind::Ramsey, e, 1e-6);
    for (const auto& p : {ramsey, scenarios::nv_hybrid(1), scenarios::nv_hybrid(2)}) {
        const double te = is_hybrid(p.kind) ? p.timing.tau_e() : p.tau();
        const double lam = 1.0 / (std::abs(e.gamma) * te);
        for (double x : {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2}) {
            const OUNoise nz{lam, x * p.tau()};
            const auto r = relaxation_from_spectrum(build_filter(p), NoisePSD::lorentzian(nz.lambda, nz.tau_c));
            worst = std::max(worst, std::abs(r.sigma_x / std::exp(-h_closed(p, nz)) - 1));
        }
    }
    o.check(worst <= tol, "max rel " + num(worst) + " (Ramsey, HSD-CP n = 1, 2; 6 tau_c each)");
}

void fine_tuned_slopes(Outcome& o)
{
    double cp_dev = 0, dd_dev = 0, n4 = 0;
    const double w0 = 1e-3 * 2 * pi / scenarios::nv_tau_N;
    const double g1 = Gain(build_filter(scenarios::nv_hybrid(1)))(w0);
    for (int n : {1, 2, 4, 8}) {
        cp_dev = std::max(cp_dev, std::abs(lowfreq_slope(scenarios::nv_hybrid(n)) - 4.0));
        dd_dev = std::max(dd_dev, std::abs(lowfreq_slope(scenarios::nv_hybrid(n, scenarios::nv_tau_N, 0.0, Kind::HsdDD)) - 2.0));
        n4 = std::max(n4, std::abs(Gain(build_filter(scenarios::nv_hybrid(n)))(w0) / g1 * std::pow(n, 4) - 1));
    }
    o.check(cp_dev <= 0.05, "HSD-CP slope 4 +- " + num(cp_dev));
    o.check(dd_dev <= 0.05, "HSD-DD slope 2 +- " + num(dd_dev));
    o.check(n4 <= 0.01, "n^-4 max dev " + num(n4));
}

void swap_time(Outcome& o)
{
    const int n = 4;
    const double tN = scenarios::nv_tau_N, w0 = 1e-3 * 2 * pi / tN;
    const double g0 = Gain(build_filter(scenarios::nv_hybrid(n)))(w0);
    const double r80 = Gain(build_filter(scenarios::nv_hybrid(n, tN, tN / 80)))(w0) / g0;
    const double r8 = Gain(build_filter(scenarios::nv_hybrid(n, tN, tN / 8)))(w0) / g0;
    o.check(std::abs(r80 - 1) < 0.10, "t_ov = tau_N/80: G ratio " + num(r80) + " (need < 10% change)");
    o.check(r8 >= 1.5, "t_ov = tau_N/8: G ratio " + num(r8) + " (need >= 1.5)");
}

void anchors(Outcome& o)
{
    const double te = fine_tune_tau_e(e.gamma, N.gamma, 3.6e-3);
    const double ratio = std::abs(e.gamma / N.gamma);
    o.check(std::abs(te / 0.40e-6 - 1) <= 0.02, "tau_e " + num(te * 1e6, 4) + " us");
    o.check(std::abs(ratio / 9.1e3 - 1) <= 0.02, "|gamma_e/gamma_N| " + num(ratio, 4));
    const double etaN = eta_equivalent(N.gamma, 3.6e-3, 1e12) / units::fT;
    const double etae = eta_equivalent(e.gamma, 0.5e-6, 1e12) / units::fT;
    o.check(std::abs(etaN / 9e2 - 1) <= 0.10, "eta_N " + num(etaN) + " fT/rtHz");
    o.check(std::abs(etae / 8 - 1) <= 0.10, "eta_e " + num(etae) + " fT/rtHz");
    const auto h = halo_derived(1e-15, 1e-3, 0.45);
    o.check(std::abs(h.tau_a / 4e6 - 1) <= 0.05, "tau_a " + num(h.tau_a) + " s");
    o.check(std::abs(h.wavelength / 1e12 - 1) <= 0.05, "wavelength " + num(h.wavelength) + " m");
}

void mc_vs_analytics(Outcome& o)
{
    const auto Nd = scenarios::demo_nucleus();
    double worst = 0;
    std::uint64_t seed = 500;
    for (int n : {1, 2, 4}) {
        const auto p = ProtocolSpec::hybrid(Kind::HsdCP, e, Nd, build_timing(2e-6 / n, 0.0, n, e, Nd));
        const auto& tm = p.timing;
        for (double tc : {0.1 * tm.tau_e_tilde, 3 * tm.tau_e_tilde, 10 * tm.tau_N_tilde}) {
            // strength chosen so that h = 0.7
            const OUNoise nz{std::sqrt(0.7 / h_closed(p, {1.0, tc})), tc};
            SimConfig c;
            c.spec = p;
            c.noise = NoiseSpec::ou(nz);
            c.trials = 1000;
            c.master_seed = seed++;
            c.dt = std::min(tc, tm.tau_e_tilde / 2) / 200;
            const auto r = run_ensemble(c);
            worst = std::max(worst, std::abs(r.mean_sigma_x - std::exp(-h_closed(p, nz))) / r.stderr_sigma_x);
        }
    }
    o.check(worst <= 3.0, "max |z| " + num(worst) + " over 9 ensembles of 1000");
}

double scan_slope(NoiseKind kind, double scale, std::vector<double>& T)
{
    std::vector<double> ns;
    for (int n : {1, 2, 4, 8}) {
        const auto c = scenarios::demo_config(kind, n, scale, substream_seed(0, n));
        T.push_back(coherence_scan(c, scenarios::demo_scan_times(), 400).T_coh);
        ns.push_back(n);
    }
    return loglog_slope(ns, T);
}

void pink_scaling(Outcome& o)
{
    std::vector<double> Tp, Tw;
    const double sp = scan_slope(NoiseKind::Pink, scenarios::pink_scale, Tp);
    scan_slope(NoiseKind::White, scenarios::white_scale, Tw);
    double lo = *std::min_element(Tw.begin(), Tw.end()), hi = *std::max_element(Tw.begin(), Tw.end());
    double mean = (Tw[0] + Tw[1] + Tw[2] + Tw[3]) / 4;
    o.check(std::abs(sp - 0.8) <= 0.15, "pink T_coh ~ n^" + num(sp));
    o.check((hi - lo) / mean < 0.20, "white T_coh spread " + num((hi - lo) / mean));
}

void dc_immunity(Outcome& o)
{
    SimConfig c;
    c.spec = scenarios::demo_hsd_cp(1, 3e-9);
    c.dt = 3e-12;
    c.gradient_delta = scenarios::demo_gradient(c.spec);
    const auto tr = synthesize_noise(c.noise, c.spec.tau(), c.dt, 1);
    const double p0 = run_rotating(c, tr).phase;
    double worst = 0;
    for (double b : {1e-6, 1e-3, 1.0, 1e3}) {
        auto cc = c;
        cc.B_offset = b;
        worst = std::max(worst, std::abs(run_rotating(cc, tr).phase - p0) / std::abs(p0));
    }
    o.check(worst <= 1e-6, "DC offsets up to 1 kT change phase by " + num(worst) + " rel");
    o.check(std::abs(p0 / dc_phase_oracle(c) - 1) <= 1e-9 && std::abs(std::abs(p0) - 0.5) <= 1e-9,
            "gradient phase " + num(p0, 6) + " rad");
    const auto u = uncertainty_scan(scenarios::demo_config(NoiseKind::Pink, 1, scenarios::readout_scale, 0),
                                    {1, 2, 4, 8}, 500);
    std::string stds;
    for (const auto& r : u.rows) stds += (stds.empty() ? "" : " ") + num(r.std_projection);
    o.check(u.strictly_decreasing, "pink readout std over n = 1,2,4,8: " + stds);
}

void axion_pipeline(Outcome& o)
{
    constexpr double tol = 1e-10;
    std::mt19937_64 rng(111);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double sub = 0;
    for (int i = 0; i < 100; ++i) {
        const int n = 1 + static_cast<int>(8 * u(rng));
        const double tN = std::pow(10.0, -4 + 2 * u(rng));
        const auto p = scenarios::nv_hybrid(n, tN, u(rng) < 0.5 ? 0.0 : 0.05 * u(rng) * tN / n);
        AxionCouplings c;
        c.g_app = std::pow(10.0, -6 * u(rng));
        c.g_ann = std::pow(10.0, -6 * u(rng));
        c.g_aee = std::pow(10.0, -12 * u(rng));
        const double m = std::pow(10.0, -19 + 7 * u(rng)), la = std::pow(10.0, -12 * u(rng));
        const double A = signal_coefficient(p, m, c, la);
        const double G = transfer_closed(detail::signal_filter_spec(p, c, la), NoisePSD::white(1.0), units::eV_to_rad_s(m));
        sub = std::max(sub, std::abs(G / 4 - A) / A);
    }
    o.check(sub <= tol, "A vs G substitution max rel " + num(sub));

    const auto hsd1 = scenarios::nv_hybrid(1);
    double redN = 0, rede = 0;
    auto cN = AxionCouplings::nucleon(1e-9);
    const auto nr = ProtocolSpec::single(Kind::Ramsey, N, hsd1.timing.tau_N());
    for (double m : logspace(1e-18, 1e-11, 29))
        redN = std::max(redN, std::abs(signal_coefficient(hsd1, m, cN, 1.0) / signal_coefficient(nr, m, cN, 1.0) - 1));
    // the split electron windows match e-Ramsey only while m_a tau << 1
    const auto ce = AxionCouplings::electron(1e-6);
    const auto er = ProtocolSpec::single(Kind::Ramsey, e, hsd1.timing.tau_e());
    for (double m : {1e-22, 1e-21, 1e-20})
        rede = std::max(rede, std::abs(signal_coefficient(hsd1, m, ce, 1.0) / signal_coefficient(er, m, ce, 1.0) - 1));
    o.check(redN <= tol && rede <= tol, "reductions to N-Ramsey " + num(redN) + ", e-Ramsey " + num(rede));

    SearchConfig mc;
    mc.protocol = ProtocolSpec::single(Kind::Ramsey, N, 1e-3);
    mc.T_obs = 4.096;
    mc.M = 1e6;
    mc.ambient = NoisePSD::white(0.0);
    mc.apply_envelope = false;
    const int k = 100;
    const double m = units::rad_s_to_eV(2 * pi * k / mc.T_obs);
    const auto h = halo_derived(m, mc.halo);
    const double S1 = signal_psd(signal_coefficient(mc.protocol, m, AxionCouplings::nucleon(1.0), h.signal_amplitude),
                                 0.0, h.tau_a, mc.T_obs);
    const auto cc = AxionCouplings::nucleon(std::sqrt(mc.tau() / mc.M / S1));
    const double S = signal_psd(signal_coefficient(mc.protocol, m, cc, h.signal_amplitude), 0.0, h.tau_a, mc.T_obs);
    std::vector<double> v;
    for (int s = 0; s < 200; ++s) {
        const auto p = simulate_axion_timeseries(mc, m, cc, 7000 + s);
        v.push_back(p.P[k] - p.tau);
    }
    const double se = stddev_of(v) / std::sqrt(200.0);
    const double z = (mean_of(v) - (S + mc.tau() / mc.M)) / se;
    o.check(std::abs(z) <= 3, "MC on-resonance P_k - tau vs S_k + floor: z = " + num(z));

    const auto masses = scenarios::fig4_masses();
    const auto hc = sensitivity_curve(scenarios::search(scenarios::Search::HsdCP, 1e12, units::month_s), masses);
    const auto rc = sensitivity_curve(scenarios::search(scenarios::Search::NRamsey, 1e12, units::month_s), masses);
    double lo = 1e300, hi = 0, ratio = 0;
    bool mono = true;
    for (std::size_t i = 0; i < masses.size(); ++i) {
        if (masses[i] > 1e-15 * (1 + 1e-9)) continue;
        lo = std::min(lo, hc.points[i].threshold);
        hi = std::max(hi, hc.points[i].threshold);
        if (i > 0 && !(rc.points[i].threshold < rc.points[i - 1].threshold)) mono = false;
        if (std::abs(masses[i] / 1e-16 - 1) < 1e-9) ratio = rc.points[i].threshold / hc.points[i].threshold;
    }
    o.check(hi / lo - 1 < 0.10, "HSD flat over [1e-18, 1e-15] eV, variation " + num(hi / lo - 1));
    o.check(mono, "N-Ramsey degrades monotonically toward low mass");
    o.check(ratio >= 10, "N-Ramsey/HSD threshold ratio at 1e-16 eV " + num(ratio));
}

}  // namespace

int main()
{
    struct Criterion {
        const char* name;
        double limit_s;
        std::function<void(Outcome&)> run;
    };
    const Criterion criteria[] = {
        {"oracle-equivalence-A", 10, oracle_a},
        {"oracle-equivalence-B", 10, oracle_b},
        {"cp-limit", 1, cp_limit},
        {"spectral-temporal-identity", 30, spectral_identity},
        {"fine-tuned-cancellation", 10, fine_tuned_slopes},
        {"swap-time-degradation", 5, swap_time},
        {"anchors", 1, anchors},
        {"monte-carlo-vs-analytics", 300, mc_vs_analytics},
        {"pink-noise-scaling", 600, pink_scaling},
        {"dc-immunity", 600, dc_immunity},
        {"axion-pipeline", 600, axion_pipeline},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& ex) {
            o.check(false, std::string("threw: ") + ex.what());
        }
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.check(dt < c.limit_s, "runtime " + num(dt) + " s < " + num(c.limit_s) + " s");
        failed += !o.ok;
        std::printf("%s %s: %s\n", o.ok ? "PASS" : "FAIL", c.name, o.note.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
    return failed;
}
