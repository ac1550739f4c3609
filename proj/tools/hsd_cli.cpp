// hsd: command-line front end for filters, relaxation, spectra, Monte Carlo
// and axion sensitivity. Every run writes CSVs plus a JSON manifest.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <hsd/axion.hpp>
#include <hsd/io.hpp>
#include <hsd/mcsim.hpp>
#include <hsd/relax.hpp>
#include <hsd/scenarios.hpp>
#include <hsd/spectra.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* artifact_version = "0.1.0";

struct ArgError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double x)
{
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

// "3.6ms", "0.4us", "1e-3", "30day". Bare numbers are seconds.
double parse_duration(const std::string& text)
{
    static const std::vector<std::pair<std::string, double>> suffixes = {
        {"ps", 1e-12}, {"ns", 1e-9}, {"us", 1e-6}, {"ms", 1e-3}, {"min", 60.0}, {"s", 1.0},
        {"h", 3600.0}, {"day", hsd::units::day_s}, {"month", hsd::units::month_s}, {"yr", hsd::units::year_s}};
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ArgError("cannot parse duration '" + text + "'");
    }
    const std::string unit = text.substr(used);
    if (unit.empty()) return v;
    for (const auto& [name, scale] : suffixes)
        if (unit == name) return v * scale;
    throw ArgError("unknown time unit '" + unit + "' in '" + text + "'");
}

struct Globals {
    std::string out;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string config;
    std::string recipe;
};

struct ProtocolArgs {
    std::string kind = "hsd-cp";
    std::string tau = "1ms";   // single-spin kinds: total time
    std::string tauN = "3.6ms";  // hybrid kinds: total nuclear dwell
    std::string tauE;          // hybrid kinds: total electron dwell (omit with --fine-tune)
    std::string tov = "0";     // per-cycle swap time
    int n = 1;
    bool fine_tune = false;
    std::string species = "e";   // single-spin kinds: e | N
    std::string nucleus = "N";   // hybrid kinds: N | demo
};

void add_protocol_options(CLI::App* sub, ProtocolArgs& a)
{
    sub->add_option("--kind", a.kind, "ramsey | he | dd | cp | hsd-cp | hsd-dd");
    sub->add_option("--tau", a.tau, "total time of single-spin kinds");
    sub->add_option("--tauN", a.tauN, "total nuclear dwell of hybrid kinds");
    sub->add_option("--tauE", a.tauE, "total electron dwell of hybrid kinds");
    sub->add_option("--tov", a.tov, "swap-gate duration per swap");
    sub->add_option("--n", a.n, "repetition count")->check(CLI::PositiveNumber);
    sub->add_flag("--fine-tune", a.fine_tune, "choose tau_e from the cancellation condition");
    sub->add_option("--species", a.species, "species of single-spin kinds: e | N")->check(CLI::IsMember({"e", "N"}));
    sub->add_option("--nucleus", a.nucleus, "nucleus of hybrid kinds: N | demo (gamma = -gamma_e/2)")
        ->check(CLI::IsMember({"N", "demo"}));
}

hsd::ProtocolSpec make_spec(const ProtocolArgs& a)
{
    using namespace hsd;
    const Kind kind = parse_kind(a.kind);
    if (!is_hybrid(kind)) {
        const auto& s = a.species == "N" ? species::nitrogen14 : species::electron;
        return ProtocolSpec::single(kind, s, parse_duration(a.tau), a.n);
    }
    const SpinSpecies N = a.nucleus == "demo" ? scenarios::demo_nucleus() : species::nitrogen14;
    const double tN = parse_duration(a.tauN), tov = parse_duration(a.tov);
    if (a.fine_tune) {
        if (!a.tauE.empty()) throw ArgError("--tauE and --fine-tune are mutually exclusive");
        return ProtocolSpec::hybrid(kind, species::electron, N, build_timing(tN / a.n, tov, a.n, species::electron, N));
    }
    if (a.tauE.empty()) throw ArgError("hybrid kinds need --tauE or --fine-tune");
    ProtocolTiming t;
    t.n = a.n;
    t.tau_N_tilde = tN / a.n;
    t.tau_e_tilde = parse_duration(a.tauE) / a.n;
    t.t_ov = tov;
    return ProtocolSpec::hybrid(kind, species::electron, N, t);
}

// Output bookkeeping and the manifest.
class Run {
public:
    Run(std::string command, const Globals& g, const CLI::App* sub)
        : command_(std::move(command)), g_(g), start_(std::chrono::steady_clock::now())
    {
        dir_ = g.out.empty() ? fs::path(".") : fs::path(g.out);
        fs::create_directories(dir_);
        config_["out"] = dir_.string();
        config_["seed"] = g.seed;
        config_["threads"] = g.threads;
        config_["recipe"] = g.recipe;
        for (const CLI::Option* opt : sub->get_options()) {
            if (opt->get_lnames().empty() || opt->get_lnames()[0] == "help") continue;
            const std::string name = opt->get_lnames()[0];
            if (opt->get_expected_min() == 0) {
                config_[name] = opt->count() > 0 && opt->as<bool>();
                continue;
            }
            if (opt->count() > 0) {
                const auto r = opt->results();
                if (opt->get_multi_option_policy() == CLI::MultiOptionPolicy::TakeAll)
                    config_[name] = r;
                else
                    config_[name] = r.back();
            } else if (!opt->get_default_str().empty()) {
                config_[name] = opt->get_default_str();
            }
        }
    }

    std::string path(const std::string& name)
    {
        outputs_.push_back(name);
        return (dir_ / name).string();
    }

    std::vector<std::pair<std::string, std::string>> meta(const std::string& what) const
    {
        return {{"command", command_}, {"recipe", g_.recipe}, {"content", what},
                {"seed", std::to_string(g_.seed)}, {"version", artifact_version}};
    }

    void finish() const
    {
        json m;
        m["command"] = command_;
        m["config"] = config_;
        m["master_seed"] = g_.seed;
        m["version"] = artifact_version;
        m["outputs"] = outputs_;
        m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const std::string name = command_ + (g_.recipe.empty() ? "" : "_" + g_.recipe) + ".manifest.json";
        std::ofstream os(dir_ / name);
        os << m.dump(2) << '\n';
    }

private:
    std::string command_;
    Globals g_;
    fs::path dir_;
    json config_;
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
};

void require_recipe(const Globals& g, std::initializer_list<const char*> allowed)
{
    if (g.recipe.empty()) return;
    for (const char* r : allowed)
        if (g.recipe == r) return;
    throw ArgError("recipe '" + g.recipe + "' does not belong to this command");
}

// ---- filter ----

void cmd_filter(Run& run, const ProtocolArgs& pa)
{
    const auto spec = make_spec(pa);
    const auto f = hsd::build_filter(spec);
    hsd::CsvWriter csv(run.path("segments.csv"), {"t_start", "t_end", "amplitude"},
                       {{"kind", std::string(hsd::kind_name(spec.kind))},
                        {"n", std::to_string(spec.timing.n)},
                        {"total_time", fmt(f.total_time)},
                        {"moment0", fmt(hsd::moment(f, 0))}});
    for (const auto& s : f.segments) csv.row(fmt(double(s.t0)), fmt(double(s.t1)), fmt(s.a));
    for (const auto& w : spec.warnings()) std::cerr << "warning: " << w << '\n';
}

// ---- relax ----

struct RelaxArgs {
    double lambda = 1e-9;
    std::vector<std::string> tauc{"1us"};
};

void recipe_fig2a(Run& run)
{
    hsd::CsvWriter csv(run.path("fig2a.csv"),
                       {"tau_c_over_tau_e", "n", "h_normalized", "asymptote_long", "asymptote_intermediate",
                        "asymptote_short", "asymptote_short_electron_only"},
                       run.meta("normalized exponent h/(2 lambda^2 gamma_e^2 tau_e^2), NV HSD-CP, tau_N = 3.6 ms"));
    for (int n : {1, 2, 4, 8}) {
        const auto spec = hsd::scenarios::nv_hybrid(n);
        for (double x : hsd::logspace(1e-4, 1e7, 111)) {
            const auto r = hsd::fig2a_row(spec, x);
            csv.row(fmt(r.tau_c_over_tau_e), r.n, fmt(r.h_normalized), fmt(r.asymptote_long),
                    fmt(r.asymptote_intermediate), fmt(r.asymptote_short), fmt(r.asymptote_short_electron_only));
        }
    }
}

void cmd_relax(Run& run, const Globals& g, const ProtocolArgs& pa, const RelaxArgs& ra)
{
    require_recipe(g, {"fig2a"});
    if (g.recipe == "fig2a") return recipe_fig2a(run);
    const auto spec = make_spec(pa);
    const auto f = hsd::build_filter(spec);
    hsd::CsvWriter csv(run.path("relax.csv"), {"tau_c_s", "h_closed", "h_oracle", "sigma_x", "regime", "h_asymptotic"},
                       run.meta("relaxation exponent under OU noise, lambda = " + fmt(ra.lambda) + " T"));
    for (const auto& s : ra.tauc) {
        const hsd::OUNoise nz{ra.lambda, parse_duration(s)};
        const double h = hsd::h_closed(spec, nz);
        std::string regime = "undefined";
        double asym = std::numeric_limits<double>::quiet_NaN();
        try {
            const auto r = hsd::classify_regime(spec, nz);
            regime = std::string(hsd::regime_name(r));
            asym = hsd::h_asymptotic(spec, nz, r);
        } catch (const hsd::RegimeUndefined&) {
        }
        csv.row(fmt(nz.tau_c), fmt(h), fmt(hsd::h_oracle(f, nz)), fmt(std::exp(-h)), regime, fmt(asym));
    }
}

// ---- spectra ----

struct SpectraArgs {
    std::string psd = "white";
    double amp = 1e-14;  // T/sqrt(Hz)
    double lambda = 1e-9;
    std::string tauc = "1ms";
    double knee = 2.0 * std::numbers::pi * 1e3;
    double omega_ref = 1.0;
    double wmin = 1e-1, wmax = 1e7;
    int points = 200;
    bool integrate = false;
};

hsd::NoisePSD make_psd(const SpectraArgs& a)
{
    if (a.psd == "white") return hsd::NoisePSD::white(a.amp);
    if (a.psd == "lorentzian") return hsd::NoisePSD::lorentzian(a.lambda, parse_duration(a.tauc));
    if (a.psd == "knee") return hsd::NoisePSD::piecewise_knee(a.amp, a.knee);
    if (a.psd == "oneoverf") return hsd::NoisePSD::one_over_f(a.amp, a.omega_ref);
    throw ArgError("unknown PSD '" + a.psd + "'");
}

// G / (gamma_N^2 tau_N^2 P) with a white PSD, so both Ramsey curves sit near 1 at low frequency.
void write_normalized_G(hsd::CsvWriter& csv, const std::string& label, const hsd::ProtocolSpec& spec)
{
    const double norm = std::pow(hsd::species::nitrogen14.gamma * hsd::scenarios::nv_tau_N, 2);
    const hsd::Gain gain(hsd::build_filter(spec));
    for (double w : hsd::logspace(1e-1, 1e7, 321)) csv.row(fmt(w), label, fmt(gain(w) / norm));
}

void recipe_fig3a(Run& run)
{
    using namespace hsd;
    CsvWriter csv(run.path("fig3a.csv"), {"omega_rad_s", "protocol_label", "G_normalized"},
                  run.meta("G/(gamma_N^2 tau_N^2 P), white PSD, tau_N = 3.6 ms"));
    const auto base = scenarios::nv_hybrid(1);
    write_normalized_G(csv, "ramsey-N", ProtocolSpec::single(Kind::Ramsey, species::nitrogen14, scenarios::nv_tau_N));
    write_normalized_G(csv, "ramsey-e", ProtocolSpec::single(Kind::Ramsey, species::electron, base.timing.tau_e()));
    for (int n : {1, 2, 4, 8}) write_normalized_G(csv, "hsd-cp-n" + std::to_string(n), scenarios::nv_hybrid(n));
    write_normalized_G(csv, "hsd-dd-n1", scenarios::nv_hybrid(1, scenarios::nv_tau_N, 0.0, Kind::HsdDD));
}

void recipe_fig3b(Run& run)
{
    using namespace hsd;
    CsvWriter csv(run.path("fig3b.csv"), {"omega_rad_s", "protocol_label", "G_normalized"},
                  run.meta("G/(gamma_N^2 tau_N^2 P) for HSD-CP n = 4 with swap time t_ov"));
    write_normalized_G(csv, "ramsey-N", ProtocolSpec::single(Kind::Ramsey, species::nitrogen14, scenarios::nv_tau_N));
    write_normalized_G(csv, "tov-0", scenarios::nv_hybrid(4));
    write_normalized_G(csv, "tov-tauN/80", scenarios::nv_hybrid(4, scenarios::nv_tau_N, scenarios::nv_tau_N / 80));
    write_normalized_G(csv, "tov-tauN/8", scenarios::nv_hybrid(4, scenarios::nv_tau_N, scenarios::nv_tau_N / 8));
}

void cmd_spectra(Run& run, const Globals& g, const ProtocolArgs& pa, const SpectraArgs& sa)
{
    require_recipe(g, {"fig3a", "fig3b", "fig3ab"});
    if (g.recipe == "fig3a" || g.recipe == "fig3ab") recipe_fig3a(run);
    if (g.recipe == "fig3b" || g.recipe == "fig3ab") recipe_fig3b(run);
    if (!g.recipe.empty()) return;
    if (!(sa.wmin > 0.0 && sa.wmax > sa.wmin) || sa.points < 2) throw ArgError("need 0 < wmin < wmax and points >= 2");
    const auto spec = make_spec(pa);
    const auto f = hsd::build_filter(spec);
    const auto psd = make_psd(sa);
    auto meta = run.meta("noise transfer G = P |ghat|^2");
    meta.emplace_back("psd", sa.psd);
    if (sa.integrate) {
        const auto r = hsd::relaxation_from_spectrum(f, psd);
        meta.emplace_back("h_spectral", fmt(r.exponent));
        meta.emplace_back("sigma_x_spectral", fmt(r.sigma_x));
        meta.emplace_back("h_error_estimate", fmt(r.error_estimate));
    }
    hsd::CsvWriter csv(run.path("spectra.csv"), {"omega_rad_s", "G", "gain", "P"}, meta);
    const hsd::Gain gain(f);
    for (double w : hsd::logspace(sa.wmin, sa.wmax, sa.points)) {
        const double g2 = gain(w), p = psd(w);
        csv.row(fmt(w), fmt(g2 == 0.0 ? 0.0 : g2 * p), fmt(g2), fmt(p));
    }
}

// ---- mc ----

struct McArgs {
    std::string noise = "ou";
    double rms = 1e-9;
    std::string tauc = "1us";
    double beta = 1.0;
    int tones = 8;
    std::string dt = "1ns";
    std::string frame = "rotating";
    double offset = 0.0;
    double gradient = 0.0;
    double transverse = 0.0;
    int trials = 100;
    int realizations = 400;
    int repeats = 500;
};

void recipe_fig2bc(Run& run, const Globals& g, const McArgs& ma)
{
    using namespace hsd;
    CsvWriter decay(run.path("fig2bc_decay.csv"), {"noise", "n", "tau_total", "mean_sigma_x", "stderr"},
                    run.meta("coherence decay of the demo HSD-CP pair"));
    CsvWriter fits(run.path("fig2bc_fit.csv"), {"noise", "n", "T_coh", "p", "T_coh_err", "p_err", "residual_rms"},
                   run.meta("stretched-exponential fits exp(-(tau/T_coh)^p)"));
    const auto taus = scenarios::demo_scan_times();
    for (auto [kind, scale] : {std::pair{NoiseKind::Pink, scenarios::pink_scale},
                               std::pair{NoiseKind::White, scenarios::white_scale}}) {
        for (int n : {1, 2, 4, 8}) {
            auto cfg = scenarios::demo_config(kind, n, scale, substream_seed(g.seed, n));
            cfg.threads = g.threads;
            auto s = coherence_decay(cfg, taus, ma.realizations);
            const std::string label(noise_kind_name(kind));
            for (std::size_t i = 0; i < s.tau.size(); ++i)
                decay.row(label, n, fmt(s.tau[i]), fmt(s.mean_sigma_x[i]), fmt(s.stderr_sigma_x[i]));
            try {
                s = fit_coherence(s);
            } catch (const FitFailed& e) {
                // keep the decay; the fit row is left NaN
                std::cerr << "warning [" << label << " n=" << n << "]: " << e.what() << '\n';
                s.T_coh = std::numeric_limits<double>::quiet_NaN();
                s.covariance.setConstant(std::numeric_limits<double>::quiet_NaN());
                s.residual_rms = std::numeric_limits<double>::quiet_NaN();
            }
            fits.row(label, n, fmt(s.T_coh), fmt(s.p), fmt(std::sqrt(s.covariance(0, 0))),
                     fmt(std::sqrt(s.covariance(1, 1))), fmt(s.residual_rms));
        }
    }
}

void recipe_fig3cde(Run& run, const Globals& g, const McArgs& ma)
{
    using namespace hsd;
    const int points = 301;
    {
        CsvWriter csv(run.path("fig3c.csv"), {"t", "phase_projection", "label"},
                      run.meta("noiseless readout traces: common offsets cancel, the site difference remains"));
        SimConfig c;
        c.spec = scenarios::demo_hsd_cp(1, scenarios::demo_window);
        const double delta = scenarios::demo_gradient(c.spec);
        const auto tr = synthesize_noise(c.noise, c.spec.tau(), c.spec.tau(), 0);
        for (auto [label, b, d] : {std::tuple{"offset-0", 0.0, 0.0}, std::tuple{"offset-10delta", 10 * delta, 0.0},
                                   std::tuple{"gradient", 0.0, delta}, std::tuple{"gradient+offset", 10 * delta, delta}}) {
            c.B_offset = b;
            c.gradient_delta = d;
            for (const auto& p : phase_trajectory(c, tr, points)) csv.row(fmt(p.t), fmt(p.projection), label);
        }
    }
    {
        CsvWriter csv(run.path("fig3d.csv"), {"t", "phase_projection", "label"},
                      run.meta("readout traces under pink noise"));
        for (int n : {1, 8}) {
            const auto cfg = scenarios::demo_config(NoiseKind::Pink, n, scenarios::readout_scale, g.seed);
            for (int k = 0; k < 5; ++k) {
                const auto tr = synthesize_noise(cfg.noise, scenarios::demo_window, cfg.dt, substream_seed(g.seed, k));
                const std::string label = "n" + std::to_string(n) + "-trace" + std::to_string(k);
                for (const auto& p : phase_trajectory(cfg, tr, points)) csv.row(fmt(p.t), fmt(p.projection), label);
            }
        }
    }
    CsvWriter csv(run.path("fig3e.csv"), {"noise", "n", "std_projection", "std_phase", "mean_projection"},
                  run.meta("readout spread versus n at fixed total time"));
    for (auto [kind, scale] : {std::pair{NoiseKind::Pink, scenarios::readout_scale},
                               std::pair{NoiseKind::White, scenarios::readout_scale * 8}}) {
        auto cfg = scenarios::demo_config(kind, 1, scale, g.seed);
        cfg.threads = g.threads;
        const auto u = uncertainty_scan(cfg, {1, 2, 4, 8}, ma.repeats);
        for (const auto& r : u.rows)
            csv.row(std::string(noise_kind_name(kind)), r.n, fmt(r.std_projection), fmt(r.std_phase),
                    fmt(r.mean_projection));
    }
}

void cmd_mc(Run& run, const Globals& g, const ProtocolArgs& pa, const McArgs& ma)
{
    require_recipe(g, {"fig2bc", "fig3cde"});
    if (g.recipe == "fig2bc") return recipe_fig2bc(run, g, ma);
    if (g.recipe == "fig3cde") return recipe_fig3cde(run, g, ma);
    using namespace hsd;
    SimConfig c;
    c.spec = make_spec(pa);
    c.dt = parse_duration(ma.dt);
    c.frame = ma.frame == "lab" ? Frame::Lab : Frame::Rotating;
    c.B_offset = ma.offset;
    c.gradient_delta = ma.gradient;
    c.B_transverse = ma.transverse;
    c.trials = ma.trials;
    c.master_seed = g.seed;
    c.threads = g.threads;
    c.noise.kind = parse_noise_kind(ma.noise);
    c.noise.rms = ma.rms;
    c.noise.tau_c = parse_duration(ma.tauc);
    c.noise.beta = ma.beta;
    c.noise.tones = ma.tones;
    const auto r = run_ensemble(c);
    auto meta = run.meta("per-trial readout");
    meta.emplace_back("mean_sigma_x", fmt(r.mean_sigma_x));
    meta.emplace_back("stderr_sigma_x", fmt(r.stderr_sigma_x));
    meta.emplace_back("std_projection", fmt(r.std_projection));
    if (c.noise.kind == NoiseKind::OU)
        meta.emplace_back("sigma_x_analytic", fmt(std::exp(-h_closed(c.spec, {c.noise.rms / 2, c.noise.tau_c}))));
    CsvWriter csv(run.path("ensemble.csv"), {"trial", "seed", "phase", "sigma_x", "projection"}, meta);
    for (std::size_t k = 0; k < r.phase.size(); ++k)
        csv.row(k, r.seeds[k], fmt(r.phase[k]), fmt(r.sigma_x[k]), fmt(r.projection[k]));
}

// ---- axion ----

struct AxionArgs {
    std::string protocol = "hsd-cp";
    int n = 1;
    std::string tauN = "3.6ms";
    double M = 1e12;
    std::string Tobs = "1month";
    std::string mode = "nucleon";
    double mmin = 1e-18, mmax = 1e-12;
    int points = 121;
    double boost = 1.0;
    bool no_ambient = false;
    bool no_envelope = false;
};

void write_curve(hsd::CsvWriter& csv, const hsd::SensitivityCurve& c, const std::string& scenario)
{
    for (const auto& p : c.points)
        csv.row(fmt(p.m_a), fmt(p.threshold), c.label, scenario, p.solved ? 1 : 0, fmt(p.omega));
    for (const auto& w : c.warnings) std::cerr << "warning [" << c.label << "]: " << w << '\n';
}

const std::vector<std::string> curve_columns = {"m_a_eV", "threshold", "protocol_label", "scenario", "solved",
                                                "omega_rad_s"};

void recipe_fig4(Run& run, const Globals& g, const std::string& name, double M, double T_obs)
{
    using namespace hsd;
    auto meta = run.meta("f_a_tilde_inv threshold [GeV^-1]");
    meta.emplace_back("M", fmt(M));
    meta.emplace_back("T_obs_s", fmt(T_obs));
    CsvWriter csv(run.path(name + ".csv"), curve_columns, meta);
    const std::string scenario = name == "fig4a" ? "M1e12-1month" : "M1e20-1yr";
    for (auto s : {scenarios::Search::NRamsey, scenarios::Search::HsdCP, scenarios::Search::HsdLargeN})
        write_curve(csv, sensitivity_curve(scenarios::search(s, M, T_obs), scenarios::fig4_masses(), g.threads), scenario);
}

void recipe_gaee(Run& run, const Globals& g)
{
    using namespace hsd;
    auto meta = run.meta("g_aee threshold [dimensionless]");
    CsvWriter csv(run.path("gaee.csv"), curve_columns, meta);
    const double M = 1e12, T = units::month_s;
    auto hsd1 = scenarios::search(scenarios::Search::HsdCP, M, T, CouplingMode::Electron);
    auto er = scenarios::search(scenarios::Search::ERamsey, M, T, CouplingMode::Electron);
    write_curve(csv, sensitivity_curve(hsd1, scenarios::fig4_masses(), g.threads), "ambient");
    write_curve(csv, sensitivity_curve(er, scenarios::fig4_masses(), g.threads), "ambient");
    er.ambient = NoisePSD::white(0.0);
    er.label += "-ideal";
    write_curve(csv, sensitivity_curve(er, scenarios::fig4_masses(), g.threads), "projection-only");
}

void cmd_axion(Run& run, const Globals& g, const AxionArgs& aa)
{
    require_recipe(g, {"fig4a", "fig4b", "gaee"});
    using namespace hsd;
    if (g.recipe == "fig4a") return recipe_fig4(run, g, "fig4a", 1e12, units::month_s);
    if (g.recipe == "fig4b") return recipe_fig4(run, g, "fig4b", 1e20, units::year_s);
    if (g.recipe == "gaee") return recipe_gaee(run, g);
    SearchConfig c;
    const double tN = parse_duration(aa.tauN);
    if (aa.protocol == "hsd-cp")
        c.protocol = scenarios::nv_hybrid(aa.n, tN);
    else if (aa.protocol == "ramsey-N")
        c.protocol = ProtocolSpec::single(Kind::Ramsey, species::nitrogen14, tN);
    else if (aa.protocol == "ramsey-e")
        c.protocol = ProtocolSpec::single(Kind::Ramsey, species::electron, scenarios::nv_hybrid(1, tN).timing.tau_e());
    else
        throw ArgError("unknown axion protocol '" + aa.protocol + "'");
    c.label = aa.protocol;
    c.M = aa.M;
    c.T_obs = parse_duration(aa.Tobs);
    c.mode = aa.mode == "electron" ? CouplingMode::Electron : CouplingMode::Nucleon;
    c.t2_boost = aa.boost;
    c.apply_envelope = !aa.no_envelope;
    if (aa.no_ambient) c.ambient = NoisePSD::white(0.0);
    if (!(aa.mmin > 0.0 && aa.mmax >= aa.mmin) || aa.points < 1) throw ArgError("need 0 < mmin <= mmax, points >= 1");
    auto meta = run.meta(std::string(coupling_mode_name(c.mode)) + " threshold");
    CsvWriter csv(run.path("curve.csv"), curve_columns, meta);
    write_curve(csv, sensitivity_curve(c, logspace(aa.mmin, aa.mmax, aa.points), g.threads), "custom");
}

// ---- config injection ----

// Turns {"key": value} into "--key value" tokens. Keys of the top-level app
// go to `global`, keys of the subcommand to `local`.
void config_tokens(const json& cfg, CLI::App* sub, CLI::App* app, std::vector<std::string>& global,
                   std::vector<std::string>& local)
{
    for (const auto& [key, value] : cfg.items()) {
        if (key == "config") continue;
        const CLI::Option* opt = sub->get_option_no_throw("--" + key);
        auto* out = &local;
        if (!opt) {
            opt = app->get_option_no_throw("--" + key);
            out = &global;
        }
        if (!opt) throw ArgError("unknown config key '" + key + "'");
        if (key == "recipe" && value.is_string() && value.get<std::string>().empty()) continue;
        if (opt->get_expected_min() == 0) {
            if (value.is_boolean() ? value.get<bool>() : value == "true") out->push_back("--" + key);
            continue;
        }
        auto str = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        for (const auto& v : value.is_array() ? value : json::array({value})) {
            out->push_back("--" + key);
            out->push_back(str(v));
        }
    }
}

int exit_code_for(const hsd::Error& e)
{
    if (dynamic_cast<const hsd::InvalidSpec*>(&e) || dynamic_cast<const hsd::InvalidParams*>(&e) ||
        dynamic_cast<const hsd::SameSignGammas*>(&e) || dynamic_cast<const hsd::UnsupportedKind*>(&e) ||
        dynamic_cast<const hsd::UnsupportedOrder*>(&e) || dynamic_cast<const hsd::UnsupportedProtocol*>(&e) ||
        dynamic_cast<const hsd::RegimeUndefined*>(&e))
        return 2;
    return 3;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Hybrid-spin decoupling: filters, relaxation, spectra, Monte Carlo, axion sensitivity"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Globals g;
    if (const char* env = std::getenv("HSD_OUT_DIR")) g.out = env;
    app.add_option("--out", g.out, "output directory (default $HSD_OUT_DIR or .)");
    app.add_option("--seed", g.seed, "master seed");
    app.add_option("--threads", g.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--config", g.config, "JSON file of option values or a run manifest");
    app.add_option("--recipe", g.recipe, "fig2a | fig2bc | fig3a | fig3b | fig3ab | fig3cde | fig4a | fig4b | gaee");

    ProtocolArgs pa;
    auto* filter = app.add_subcommand("filter", "write the filter function segments");
    add_protocol_options(filter, pa);

    RelaxArgs ra;
    auto* relax = app.add_subcommand("relax", "relaxation exponents under OU noise");
    add_protocol_options(relax, pa);
    relax->add_option("--lambda", ra.lambda, "noise strength [T]");
    relax->add_option("--tauc", ra.tauc, "correlation times (repeatable)")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

    SpectraArgs sa;
    auto* spectra = app.add_subcommand("spectra", "noise transfer function G(omega)");
    add_protocol_options(spectra, pa);
    spectra->add_option("--psd", sa.psd, "white | lorentzian | knee | oneoverf")
        ->check(CLI::IsMember({"white", "lorentzian", "knee", "oneoverf"}));
    spectra->add_option("--amp", sa.amp, "PSD amplitude [T/sqrt(Hz)]");
    spectra->add_option("--lambda", sa.lambda, "Lorentzian strength [T]");
    spectra->add_option("--tauc", sa.tauc, "Lorentzian correlation time");
    spectra->add_option("--knee", sa.knee, "knee frequency [rad/s]");
    spectra->add_option("--omega-ref", sa.omega_ref, "1/f reference frequency [rad/s]");
    spectra->add_option("--wmin", sa.wmin, "lowest frequency [rad/s]");
    spectra->add_option("--wmax", sa.wmax, "highest frequency [rad/s]");
    spectra->add_option("--points", sa.points, "log-spaced frequencies");
    spectra->add_flag("--integrate", sa.integrate, "also integrate G into the relaxation exponent");

    McArgs ma;
    auto* mc = app.add_subcommand("mc", "Monte Carlo ensembles on spin-1 systems");
    add_protocol_options(mc, pa);
    mc->add_option("--noise", ma.noise, "none | white | pink | tones | ou")
        ->check(CLI::IsMember({"none", "white", "pink", "tones", "ou"}));
    mc->add_option("--rms", ma.rms, "noise rms [T]");
    mc->add_option("--tauc", ma.tauc, "OU correlation time");
    mc->add_option("--beta", ma.beta, "pink exponent, amplitude ~ f^-beta");
    mc->add_option("--tones", ma.tones, "number of fixed tones");
    mc->add_option("--dt", ma.dt, "noise sample spacing / lab step");
    mc->add_option("--frame", ma.frame, "rotating | lab")->check(CLI::IsMember({"rotating", "lab"}));
    mc->add_option("--offset", ma.offset, "common DC field [T]");
    mc->add_option("--gradient", ma.gradient, "extra DC field at the nuclear site [T]");
    mc->add_option("--transverse", ma.transverse, "static transverse field, lab frame [T]");
    mc->add_option("--trials", ma.trials, "ensemble size")->check(CLI::PositiveNumber);
    mc->add_option("--realizations", ma.realizations, "realizations per scan point (fig2bc)")->check(CLI::PositiveNumber);
    mc->add_option("--repeats", ma.repeats, "repeats per n (fig3cde)")->check(CLI::PositiveNumber);

    AxionArgs aa;
    auto* axion = app.add_subcommand("axion", "axion dark-matter sensitivity curves");
    axion->add_option("--protocol", aa.protocol, "hsd-cp | ramsey-N | ramsey-e")
        ->check(CLI::IsMember({"hsd-cp", "ramsey-N", "ramsey-e"}));
    axion->add_option("--n", aa.n, "HSD repetition count")->check(CLI::PositiveNumber);
    axion->add_option("--tauN", aa.tauN, "total nuclear dwell");
    axion->add_option("--M", aa.M, "number of NV centres");
    axion->add_option("--Tobs", aa.Tobs, "observation time");
    axion->add_option("--mode", aa.mode, "nucleon | electron")->check(CLI::IsMember({"nucleon", "electron"}));
    axion->add_option("--mmin", aa.mmin, "lowest axion mass [eV]");
    axion->add_option("--mmax", aa.mmax, "highest axion mass [eV]");
    axion->add_option("--points", aa.points, "log-spaced masses");
    axion->add_option("--boost", aa.boost, "T2*, T2 multiplier");
    axion->add_flag("--no-ambient", aa.no_ambient, "projection noise only");
    axion->add_flag("--no-envelope", aa.no_envelope, "skip the decoherence envelope");

    for (auto* sub : {filter, relax, spectra, mc, axion}) sub->fallthrough();

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        // config values are placed ahead of the command-line ones, which therefore win
        std::string cfg_path;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) cfg_path = args[i + 1];
            if (args[i].rfind("--config=", 0) == 0) cfg_path = args[i].substr(9);
        }
        if (!cfg_path.empty()) {
            std::ifstream is(cfg_path);
            if (!is) throw ArgError("cannot read config '" + cfg_path + "'");
            json cfg = json::parse(is, nullptr, false);
            if (cfg.is_discarded() || !cfg.is_object()) throw ArgError("config '" + cfg_path + "' is not a JSON object");
            std::string command;
            if (cfg.contains("command") && cfg.contains("config")) {
                command = cfg["command"].get<std::string>();
                cfg = cfg["config"];
            }
            auto pos = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
                return a == "filter" || a == "relax" || a == "spectra" || a == "mc" || a == "axion";
            });
            if (pos == args.end()) {
                if (command.empty()) throw ArgError("config given without a subcommand");
                args.insert(args.begin(), command);
                pos = args.begin();
            }
            std::vector<std::string> global, local;
            config_tokens(cfg, app.get_subcommand(*pos), &app, global, local);
            args.insert(pos + 1, local.begin(), local.end());
            args.insert(args.begin(), global.begin(), global.end());
        }
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    } catch (const ArgError& e) {
        std::cerr << "error: " << e.what() << '\n' << app.help();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        Run run(sub->get_name(), g, sub);
        const std::string& name = sub->get_name();
        if (name == "filter") {
            require_recipe(g, {});
            cmd_filter(run, pa);
        } else if (name == "relax") {
            cmd_relax(run, g, pa, ra);
        } else if (name == "spectra") {
            cmd_spectra(run, g, pa, sa);
        } else if (name == "mc") {
            cmd_mc(run, g, pa, ma);
        } else {
            cmd_axion(run, g, aa);
        }
        run.finish();
    } catch (const ArgError& e) {
        std::cerr << "error: " << e.what() << '\n' << sub->help();
        return 2;
    } catch (const hsd::Error& e) {
        std::cerr << "error in '" << sub->get_name() << (g.recipe.empty() ? "" : " --recipe " + g.recipe)
                  << "': " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error in '" << sub->get_name() << "': " << e.what() << '\n';
        return 3;
    }
    return 0;
}
