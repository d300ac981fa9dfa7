#include "dopptrack/caf.hpp"
#include "dopptrack/signal_synth.hpp"

#include "test_support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <numbers>

using namespace dopptrack;
using Catch::Matchers::WithinAbs;

namespace {

// Illuminator far down the -x axis, receiver at the origin: a target on the
// +x axis moving along x sees f = -2 vx / lambda exactly.
ScenarioGeometry axis_geometry(double lambda) {
    ScenarioGeometry g;
    g.tx_positions = {Vec2(-1e7, 0)};
    g.rx_positions = {Vec2(0, 0)};
    g.wavelengths = {lambda};
    g.pairing = {0};
    return g;
}

IqBuffer short_wave(std::uint64_t seed = 4, double duration = 1.2, double start = -0.1) {
    WaveformSpec w;
    w.bandwidth = 80e3;
    w.sample_rate = 100e3;
    w.duration = duration;
    w.seed = seed;
    w.start_time = start;
    return gen_waveform(w);
}

double db(double x) { return 10.0 * std::log10(x); }

}  // namespace

TEST_CASE("waveform: deterministic per seed") {
    const auto a = short_wave(9), b = short_wave(9), c = short_wave(10);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.samples.data(), b.samples.data(), a.size() * sizeof(Complex)) == 0);
    CHECK(a.samples != c.samples);
}

TEST_CASE("waveform: unit power and confined spectrum") {
    WaveformSpec w;
    w.bandwidth = 2.5e6;
    w.sample_rate = 3.84e6;
    w.duration = 0.5;
    w.seed = 77;
    const auto buf = gen_waveform(w);
    CHECK(buf.size() == 1920000);
    CHECK_THAT(mean_power(buf.samples), WithinAbs(1.0, 1e-6));

    auto spec = buf.samples;
    fft_inplace(spec, FftDirection::Forward);
    const double n = static_cast<double>(spec.size());
    double in = 0, out = 0;
    for (std::size_t m = 0; m < spec.size(); ++m) {
        const double idx = m < spec.size() / 2 ? static_cast<double>(m) : static_cast<double>(m) - n;
        (std::abs(idx * w.sample_rate / n) <= 0.5 * w.bandwidth ? in : out) += std::norm(spec[m]);
    }
    CHECK(out <= in * 1e-4);

    // Autocorrelation via |X|^2; the main lobe spans |lag| < fs/B.
    for (auto& v : spec) v = std::norm(v);
    fft_inplace(spec, FftDirection::Inverse);
    const double peak = std::abs(spec[0]);
    const double lobe = w.sample_rate / w.bandwidth;
    double side = 0.0;
    for (std::size_t lag = 1; lag < spec.size(); ++lag) {
        const double l = std::min<double>(static_cast<double>(lag), n - static_cast<double>(lag));
        if (l < lobe) continue;
        side = std::max(side, std::abs(spec[lag]));
    }
    CHECK(20.0 * std::log10(peak / side) >= 10.0);
}

TEST_CASE("waveform: invalid specs") {
    WaveformSpec w;
    w.sample_rate = 1e6;
    w.bandwidth = 2e6;
    CHECK_THROWS_AS(gen_waveform(w), std::invalid_argument);
    w.bandwidth = 1e5;
    w.duration = 0;
    CHECK_THROWS_AS(gen_waveform(w), std::invalid_argument);
}

TEST_CASE("reference: identity, shift, SNR") {
    const auto wave = short_wave();
    ChannelSpec ch;
    auto ref = synth_reference(wave, ch, 1);
    CHECK(ref.samples == wave.samples);

    ch.los_delay = 10.0 / wave.sample_rate;
    ref = synth_reference(wave, ch, 1);
    for (std::size_t i = 10; i < 1000; ++i) CHECK(ref.samples[i] == wave.samples[i - 10]);

    ch.los_delay = 2.0;
    CHECK_THROWS_AS(synth_reference(wave, ch, 1), std::invalid_argument);
}

TEST_CASE("reference: 20 dB SNR at noise power 0.01") {
    WaveformSpec w;
    w.bandwidth = 80e3;
    w.sample_rate = 100e3;
    w.duration = 10.0;
    const auto wave = gen_waveform(w);
    REQUIRE(wave.size() == 1000000);
    ChannelSpec ch;
    ch.noise_power = 0.01;
    const auto ref = synth_reference(wave, ch, 5);
    std::vector<Complex> noise(ref.size());
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = ref.samples[i] - wave.samples[i];
    CHECK_THAT(db(mean_power(wave.samples) / mean_power(noise)), WithinAbs(20.0, 0.5));
}

TEST_CASE("fractional delay matches the integer shift at integer values") {
    const auto wave = short_wave();
    const auto a = delayed(wave, 3.0 / wave.sample_rate);
    const auto b = delayed(wave, 3.0 / wave.sample_rate + 1e-15);
    for (std::size_t i = 0; i < 100; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
    // half-sample delay keeps power
    const auto c = delayed(wave, 0.5 / wave.sample_rate);
    CHECK_THAT(mean_power(c), WithinAbs(mean_power(wave.samples), 1e-9));
}

TEST_CASE("surveillance: clutter-only channel is a scaled reference") {
    const auto wave = short_wave();
    const auto g = axis_geometry(0.16);
    const auto truth = testsupport::straight_line(Vec2(100, 0), Vec2(-1, 0), 21);
    ChannelSpec ch;
    ch.target_gain = 0.0;
    ch.clutter_paths = {{Complex(0.5, 0.2), 0.0}};
    const auto surv = synth_surveillance(wave, ch, g, 0, truth, 1);
    for (std::size_t i = 0; i < surv.size(); ++i)
        CHECK(std::abs(surv.samples[i] - Complex(0.5, 0.2) * wave.samples[i]) < 1e-12);
}

TEST_CASE("surveillance: phase is continuous across interval boundaries") {
    // Constant waveform exposes the Doppler phasor directly.
    IqBuffer ones{std::vector<Complex>(100000, Complex(1, 0)), 100e3, -0.1};
    const auto g = testsupport::field_geometry();
    std::mt19937_64 rng(12);
    const auto truth = testsupport::random_motion(rng, 17);
    ChannelSpec ch;
    const auto surv = synth_surveillance(ones, ch, g, 1, truth, 1);
    const auto sched = echo_schedule(g, 1, truth, ch, ones.sample_rate);
    double worst = 0.0;
    for (std::size_t i = 1; i < surv.size(); ++i) {
        const double t_prev = ones.start_time + static_cast<double>(i - 1) / ones.sample_rate;
        const double f = sched.doppler[interval_index(t_prev, truth.step, truth.size())];
        const double expected = 2 * std::numbers::pi * f / ones.sample_rate;
        const double step = std::arg(surv.samples[i] * std::conj(surv.samples[i - 1]));
        worst = std::max(worst, std::abs(std::remainder(step - expected, 2 * std::numbers::pi)));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("surveillance: energy adds over independent components") {
    const auto wave = short_wave(21, 1.2, -0.1);
    const auto g = axis_geometry(0.16);
    const auto truth = testsupport::straight_line(Vec2(100, 0), Vec2(-4, 0), 21);
    ChannelSpec ch;
    ch.target_gain = Complex(0.6, 0.3);
    ch.clutter_paths = {{Complex(2.0, 0), 3.0 / wave.sample_rate}, {Complex(0, 1.1), 7.0 / wave.sample_rate}};
    ch.noise_power = 0.4;
    const auto surv = synth_surveillance(wave, ch, g, 0, truth, 99);
    const double expected = std::norm(ch.target_gain) + 4.0 + 1.21 + 0.4;
    CHECK(std::abs(mean_power(surv.samples) / expected - 1.0) < 0.01);
}

TEST_CASE("surveillance: CAF peak at the injected Doppler") {
    const double lambda = 0.16;
    const auto g = axis_geometry(lambda);
    const auto wave = short_wave(3, 1.2, -0.1);
    ChannelSpec ch;
    const auto cfg = CafConfig::from_timing(0.5, 0.05, wave.sample_rate);
    REQUIRE(cfg.grid.bin == 2.0);

    // f = -2 vx / lambda = +50 Hz
    const auto moving = testsupport::straight_line(Vec2(100, 0), Vec2(-25.0 * lambda, 0), 21);
    CHECK_THAT(bistatic_doppler(g, 0, Vec2(100, 0), moving.velocities[0]), WithinAbs(50.0, 1e-9));
    auto surv = synth_surveillance(wave, ch, g, 0, moving, 1);
    auto map = caf_window(surv, wave, 1, cfg);
    CHECK_THAT(map.grid.freq(map.peak_index()), WithinAbs(50.0, 1.0));

    const auto still = testsupport::straight_line(Vec2(100, 0), Vec2(0, 0), 21);
    surv = synth_surveillance(wave, ch, g, 0, still, 1);
    map = caf_window(surv, wave, 1, cfg);
    CHECK(map.grid.freq(map.peak_index()) == 0.0);
}

TEST_CASE("surveillance: buffer must cover the trajectory") {
    const auto wave = short_wave(3, 0.5, 0.0);
    const auto truth = testsupport::straight_line(Vec2(100, 0), Vec2(-1, 0), 21);
    CHECK_THROWS_AS(synth_surveillance(wave, ChannelSpec{}, axis_geometry(0.16), 0, truth, 1), std::invalid_argument);
    const auto late = short_wave(3, 1.2, 0.01);
    CHECK_THROWS_AS(synth_surveillance(late, ChannelSpec{}, axis_geometry(0.16), 0, truth, 1), std::invalid_argument);
}

TEST_CASE("surveillance: deterministic under fixed seeds") {
    const auto wave = short_wave();
    const auto g = testsupport::field_geometry();
    const auto truth = testsupport::straight_line(Vec2(12, 20), Vec2(1, 2), 21);
    ChannelSpec ch;
    ch.noise_power = 0.1;
    ch.clutter_paths = {{Complex(3, 0), 0.0}};
    const auto a = synth_surveillance(wave, ch, g, 2, truth, 42);
    const auto b = synth_surveillance(wave, ch, g, 2, truth, 42);
    CHECK(a.samples == b.samples);
}
