#include <complex>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include <hsd/filters.hpp>

#include "oracles.hpp"

using namespace hsd;

namespace {
const SpinSpecies& e = species::electron;
const SpinSpecies& N = species::nitrogen14;

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

const Kind all_kinds[] = {Kind::Ramsey, Kind::HahnEcho, Kind::DD, Kind::CP, Kind::HsdCP, Kind::HsdDD};
}  // namespace

TEST(BuildFilter, Ramsey)
{
    const auto f = build_filter(ProtocolSpec::single(Kind::Ramsey, e, 2e-6));
    ASSERT_EQ(f.segments.size(), 1u);
    EXPECT_EQ(f.segments[0].t0, 0.0L);
    EXPECT_DOUBLE_EQ(double(f.segments[0].t1), 2e-6);
    EXPECT_EQ(f.segments[0].a, e.gamma);
}

TEST(BuildFilter, DemoHsdCpLayout)
{
    // gamma_N = -gamma_e/2, tau_e_tilde = T: windows (0,T/2), (T/2,5T/2), (5T/2,3T)
    const SpinSpecies demo{"d", -0.5 * e.gamma};
    const double T = 1e-6;
    const auto f = build_filter(ProtocolSpec::hybrid(Kind::HsdCP, e, demo, build_timing(2 * T, 0.0, 1, e, demo)));
    ASSERT_EQ(f.segments.size(), 3u);
    const double ends[3][3] = {{0, T / 2, e.gamma}, {T / 2, 2.5 * T, -0.5 * e.gamma}, {2.5 * T, 3 * T, e.gamma}};
    for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(double(f.segments[i].t0), ends[i][0], 1e-21);
        EXPECT_NEAR(double(f.segments[i].t1), ends[i][1], 1e-21);
        EXPECT_DOUBLE_EQ(f.segments[i].a, ends[i][2]);
    }
}

TEST(BuildFilter, MatchesDefinitionsForAllKinds)
{
    std::mt19937_64 rng(5);
    for (Kind k : all_kinds) {
        for (int it = 0; it < 20; ++it) {
            const auto p = random_spec(k, rng);
            const auto f = build_filter(p);
            const auto ref = oracle::segments(p);
            ASSERT_EQ(f.segments.size(), ref.size()) << kind_name(k);
            for (std::size_t i = 0; i < ref.size(); ++i) {
                const double T = p.tau();
                EXPECT_LE(std::abs(static_cast<double>(oracle::R(f.segments[i].t0) - ref[i].t0)), 1e-18 * T);
                EXPECT_LE(std::abs(static_cast<double>(oracle::R(f.segments[i].t1) - ref[i].t1)), 1e-18 * T);
                EXPECT_EQ(oracle::R(f.segments[i].a), ref[i].a);
            }
        }
    }
}

TEST(BuildFilter, SortedAndContained)
{
    std::mt19937_64 rng(6);
    for (Kind k : all_kinds) {
        const auto p = random_spec(k, rng);
        const auto f = build_filter(p);
        long double prev = 0;
        for (const auto& s : f.segments) {
            EXPECT_GE(s.t0, prev);
            EXPECT_GT(s.t1, s.t0);
            prev = s.t1;
        }
        EXPECT_LE(double(prev), f.total_time * (1 + 1e-15));
    }
}

TEST(Moments, ZerothMoments)
{
    const double tau = 1e-3;
    EXPECT_DOUBLE_EQ(moment(build_filter(ProtocolSpec::single(Kind::Ramsey, e, tau)), 0), e.gamma * tau);
    for (Kind k : {Kind::HahnEcho, Kind::DD, Kind::CP}) {
        const auto f = build_filter(ProtocolSpec::single(k, e, tau, k == Kind::HahnEcho ? 1 : 4));
        EXPECT_LE(std::abs(moment(f, 0)), 1e-15 * std::abs(e.gamma * tau)) << kind_name(k);
    }
}

TEST(Moments, FineTunedHybridsCancel)
{
    for (Kind k : {Kind::HsdCP, Kind::HsdDD})
        for (int n : {1, 3, 8}) {
            const auto p = ProtocolSpec::hybrid(k, e, N, build_timing(3.6e-3 / n, 1e-6, n, e, N));
            const double scale = std::abs(e.gamma * p.timing.tau_e());
            EXPECT_LE(std::abs(moment(build_filter(p), 0)), 1e-12 * scale);
        }
}

TEST(Moments, UntunedHybridZerothMoment)
{
    ProtocolTiming t;
    t.tau_N_tilde = 1e-3;
    t.tau_e_tilde = 2e-7;
    t.n = 3;
    const auto p = ProtocolSpec::hybrid(Kind::HsdCP, e, N, t);
    const double expect = e.gamma * t.tau_e() + N.gamma * t.tau_N();
    EXPECT_NEAR(moment(build_filter(p), 0) / expect, 1.0, 1e-13);
}

TEST(Moments, HahnEchoFirstMoment)
{
    const double g = 2.0, tau = 3.0;
    const auto f = build_filter(ProtocolSpec::single(Kind::HahnEcho, SpinSpecies{"x", g}, tau));
    EXPECT_NEAR(moment(f, 1), -g * tau * tau / 4, 1e-14);
}

TEST(Moments, AgreeWithOracleUpToFourth)
{
    std::mt19937_64 rng(7);
    for (Kind k : all_kinds) {
        const auto p = random_spec(k, rng);
        const auto f = build_filter(p);
        const auto ref = oracle::segments(p);
        for (int m = 0; m <= 4; ++m) {
            const auto r = oracle::moment(ref, m);
            const double scale = static_cast<double>(abs(ref[0].a)) * std::pow(p.tau(), m + 1);
            EXPECT_LE(std::abs(moment(f, m) - static_cast<double>(r)), 1e-12 * scale) << kind_name(k) << " k=" << m;
        }
    }
}

TEST(Moments, RejectsHighOrder)
{
    const auto f = build_filter(ProtocolSpec::single(Kind::Ramsey, e, 1e-6));
    EXPECT_THROW(moment(f, 5), UnsupportedOrder);
    EXPECT_THROW(moment(f, -1), UnsupportedOrder);
}

TEST(Fourier, RamseyClosedForm)
{
    const double g = e.gamma, tau = 1e-6;
    const auto f = build_filter(ProtocolSpec::single(Kind::Ramsey, e, tau));
    for (double w : {1e2, 1e5, 3.3e6, 2e7, 1e9}) {
        // 2 g^2 (1 - cos w tau) / w^2, written without the cancellation
        const double sh = std::sin(0.5 * w * tau);
        const double expect = 4 * g * g * sh * sh / (w * w);
        EXPECT_NEAR(std::norm(fourier(f, w)) / expect, 1.0, 1e-9) << w;
    }
    EXPECT_LT(std::norm(fourier(f, 2 * std::numbers::pi / tau)), 1e-20 * g * g * tau * tau);
}

TEST(Fourier, ZeroFrequencyIsZerothMoment)
{
    std::mt19937_64 rng(8);
    for (Kind k : all_kinds) {
        const auto f = build_filter(random_spec(k, rng));
        const auto z = fourier(f, 0.0);
        EXPECT_NEAR(z.real(), moment(f, 0), 1e-12 * std::abs(f.segments[0].a) * f.total_time);
        EXPECT_EQ(z.imag(), 0.0);
    }
}

TEST(Fourier, HahnEchoAtFirstHarmonic)
{
    // HE: ghat = (g/(i w)) (1 - e^{-i w tau/2})^2
    const double g = 1.5, tau = 2e-3, w = 2 * std::numbers::pi / tau;
    const auto f = build_filter(ProtocolSpec::single(Kind::HahnEcho, SpinSpecies{"x", g}, tau));
    const std::complex<double> iw(0, w);
    const auto c = std::polar(1.0, -w * tau / 2);
    const auto expect = g / iw * (1.0 - c) * (1.0 - c);
    EXPECT_NEAR(std::norm(fourier(f, w)) / std::norm(expect), 1.0, 1e-12);
}

TEST(Fourier, ConjugateSymmetry)
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int it = 0; it < 500; ++it) {
        const Kind k = all_kinds[it % 6];
        const auto p = random_spec(k, rng);
        const auto f = build_filter(p);
        const double w = std::pow(10.0, u(rng)) * 2 * std::numbers::pi / p.tau();
        const auto a = fourier(f, w), b = fourier(f, -w);
        const double s = std::abs(a) + 1e-30;
        ASSERT_NEAR(a.real(), b.real(), 1e-13 * s);
        ASSERT_NEAR(a.imag(), -b.imag(), 1e-13 * s);
    }
}

TEST(Fourier, AgreesWithOracle)
{
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int it = 0; it < 120; ++it) {
        const auto p = random_spec(all_kinds[it % 6], rng);
        const double w = std::pow(10.0, u(rng)) * 2 * std::numbers::pi / p.tau();
        const auto ref = oracle::ghat2(p, w);
        const auto got = std::norm(fourier<long double>(build_filter(p), w));
        // near-cancelling hybrids lose digits in long double, so bound against the scale of the terms
        const double scale = std::pow(std::abs(e.gamma) * p.tau(), 2);
        EXPECT_LE(std::abs(double(got) - static_cast<double>(ref)), 1e-12 * scale + 1e-7 * static_cast<double>(ref));
    }
}

TEST(CpLimit, HsdCpReducesToCp)
{
    // tau_N, tau_e -> tau/2, t_ov -> 0, gamma_N -> -gamma, gamma_e -> gamma
    const double g = 7.0, tt = 2e-6;
    const SpinSpecies a{"a", g}, b{"b", -g};
    for (int n : {1, 2, 5}) {
        ProtocolTiming t;
        t.tau_N_tilde = tt / 2;
        t.tau_e_tilde = tt / 2;
        t.n = n;
        const auto hsd = build_filter(ProtocolSpec::hybrid(Kind::HsdCP, a, b, t));
        const auto cp = build_filter(ProtocolSpec::single(Kind::CP, a, n * tt, n));
        auto strip = [](FilterFunction f) {
            for (auto& s : f.segments) s.spin = 0;
            return f;
        };
        EXPECT_TRUE(same_structure(strip(hsd), cp)) << n;
    }
}

TEST(Merge, DropsEmptyAndJoinsEqualNeighbours)
{
    FilterFunction f;
    f.total_time = 3;
    f.segments = {{1, 2, 1.0, 0}, {0, 1, 1.0, 0}, {2, 2, 5.0, 0}, {2, 3, -1.0, 0}};
    const auto m = merged(f);
    ASSERT_EQ(m.segments.size(), 2u);
    EXPECT_EQ(m.segments[0].t1, 2.0L);
    EXPECT_EQ(m.segments[1].a, -1.0);
}

TEST(SegmentsCsv, HeaderAndRows)
{
    std::ostringstream os;
    write_segments_csv(os, build_filter(ProtocolSpec::single(Kind::CP, e, 1e-3, 2)));
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "t_start,t_end,amplitude");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 6);
}
