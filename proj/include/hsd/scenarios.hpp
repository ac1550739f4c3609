#pragma once

#include <string>
#include <vector>

#include "axion.hpp"
#include "mcsim.hpp"

// Parameter sets shared by the CLI recipes and the tests.
namespace hsd::scenarios {

inline constexpr double nv_tau_N = 3.6e-3;  // s

// Nucleus with gamma_N = -0.5 gamma_e, used by the Monte Carlo demonstrations.
inline SpinSpecies demo_nucleus() { return {"N-demo", -0.5 * species::electron.gamma}; }

// Fine-tuned NV HSD-CP (or HSD-DD) with total nuclear dwell tau_N and per-cycle swap time t_ov.
inline ProtocolSpec nv_hybrid(int n, double tau_N = nv_tau_N, double t_ov = 0.0, Kind kind = Kind::HsdCP)
{
    return ProtocolSpec::hybrid(kind, species::electron, species::nitrogen14,
                                build_timing(tau_N / n, t_ov, n, species::electron, species::nitrogen14));
}

// Demo pair with fine-tuning: tau_e = total/3, tau_N = 2 total/3.
inline ProtocolSpec demo_hsd_cp(int n, double total)
{
    const auto N = demo_nucleus();
    return ProtocolSpec::hybrid(Kind::HsdCP, species::electron, N,
                                build_timing(2.0 * total / 3.0 / n, 0.0, n, species::electron, N));
}

// ---- Monte Carlo demonstrations ----

inline constexpr double demo_window = 3e-6;  // s, longest sequence and noise window
inline constexpr int demo_samples = 4096;    // noise samples over the window
inline constexpr double pink_scale = 30.0;   // gamma_e * rms * window for pink coherence scans
inline constexpr double white_scale = 240.0; // same for white noise (per-sample rms)
inline constexpr double readout_scale = 3.0; // pink scale for readout-uncertainty scans

inline double demo_rms(double scale) { return scale / (std::abs(species::electron.gamma) * demo_window); }

inline SimConfig demo_config(NoiseKind kind, int n, double scale, std::uint64_t seed)
{
    SimConfig c;
    c.spec = demo_hsd_cp(n, demo_window);
    c.dt = demo_window / demo_samples;
    c.master_seed = seed;
    c.noise_window = demo_window;
    const double rms = demo_rms(scale);
    c.noise = kind == NoiseKind::Pink ? NoiseSpec::pink(rms) : NoiseSpec::white(rms);
    return c;
}

inline std::vector<double> demo_scan_times()
{
    std::vector<double> t;
    for (int i = 1; i <= 10; ++i) t.push_back(demo_window * i / 10.0);
    return t;
}

// Site field difference giving a 0.5 rad nuclear phase for the demo sequence.
inline double demo_gradient(const ProtocolSpec& spec) { return 0.5 / std::abs(spec.N().gamma * spec.timing.tau_N()); }

// ---- axion searches ----

enum class Search { HsdCP, NRamsey, ERamsey, HsdLargeN };

inline std::string search_label(Search s)
{
    switch (s) {
    case Search::HsdCP: return "hsd-cp-n1";
    case Search::NRamsey: return "ramsey-N";
    case Search::ERamsey: return "ramsey-e";
    case Search::HsdLargeN: return "hsd-cp-n100-boost100";
    }
    return "?";
}

inline constexpr int large_n = 100;
inline constexpr double large_n_boost = 100.0;

// M NV centres observed for T_obs; the large-n scenario keeps the per-cycle
// dwell of the n = 1 sequence and multiplies T2*, T2 by 100.
inline SearchConfig search(Search s, double M, double T_obs, CouplingMode mode = CouplingMode::Nucleon)
{
    SearchConfig c;
    c.M = M;
    c.T_obs = T_obs;
    c.mode = mode;
    c.label = search_label(s);
    switch (s) {
    case Search::HsdCP: c.protocol = nv_hybrid(1); break;
    case Search::NRamsey: c.protocol = ProtocolSpec::single(Kind::Ramsey, species::nitrogen14, nv_tau_N); break;
    case Search::ERamsey:
        c.protocol = ProtocolSpec::single(Kind::Ramsey, species::electron, nv_hybrid(1).timing.tau_e());
        break;
    case Search::HsdLargeN:
        c.protocol = nv_hybrid(large_n, large_n * nv_tau_N);
        c.t2_boost = large_n_boost;
        break;
    }
    return c;
}

inline std::vector<double> fig4_masses() { return logspace(1e-18, 1e-12, 121); }

}  // namespace hsd::scenarios
