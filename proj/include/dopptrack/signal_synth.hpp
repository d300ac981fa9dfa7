#pragma once

// Complex-baseband synthesis of the reference and surveillance channels of
// one passive receiver. The illuminator waveform is seeded, band-limited
// complex Gaussian noise; it is generated as one period of a circular
// sequence, so delays are applied circularly and are exact for any
// sub-sample value.

#include "dopptrack/fft.hpp"
#include "dopptrack/geometry.hpp"

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace dopptrack {

struct IqBuffer {
    std::vector<Complex> samples;
    double sample_rate = 1.0;
    /// Time of samples[0], seconds.
    double start_time = 0.0;

    std::size_t size() const { return samples.size(); }
    double sample_period() const { return 1.0 / sample_rate; }
    double end_time() const { return start_time + static_cast<double>(samples.size()) / sample_rate; }

    void validate() const {
        if (samples.empty()) throw std::invalid_argument("iq buffer is empty");
        if (!(sample_rate > 0.0)) throw std::invalid_argument("iq buffer sample rate must be positive");
    }
};

struct WaveformSpec {
    double bandwidth = 2.5e6;
    double sample_rate = 3.84e6;
    double duration = 1.0;
    std::uint64_t seed = 1;
    double start_time = 0.0;

    std::size_t num_samples() const { return static_cast<std::size_t>(std::llround(duration * sample_rate)); }

    void validate() const {
        if (!(bandwidth > 0.0)) throw std::invalid_argument("waveform: bandwidth must be positive");
        if (!(sample_rate >= bandwidth)) throw std::invalid_argument("waveform: sample rate below bandwidth");
        if (!(duration > 0.0) || num_samples() == 0) throw std::invalid_argument("waveform: duration must be positive");
    }
};

struct PropagationPath {
    Complex gain{1.0, 0.0};
    /// Seconds.
    double delay = 0.0;
};

struct ChannelSpec {
    Complex los_gain{1.0, 0.0};
    double los_delay = 0.0;
    /// Static (zero-Doppler) paths seen by the surveillance antenna,
    /// including any direct-path leakage.
    std::vector<PropagationPath> clutter_paths;
    Complex target_gain{1.0, 0.0};
    /// Linear power of the additive noise in each channel.
    double noise_power = 0.0;
    /// Overrides noise_power for the reference channel when set.
    std::optional<double> reference_noise_power;

    double reference_noise() const { return reference_noise_power.value_or(noise_power); }

    void validate() const {
        if (!(los_delay >= 0.0)) throw std::invalid_argument("channel: negative LoS delay");
        for (const auto& p : clutter_paths)
            if (!(p.delay >= 0.0)) throw std::invalid_argument("channel: negative clutter delay");
        if (!(noise_power >= 0.0) || !(reference_noise() >= 0.0))
            throw std::invalid_argument("channel: negative noise power");
    }
};

inline double mean_power(const std::vector<Complex>& x) {
    double acc = 0.0;
    for (const auto& v : x) acc += std::norm(v);
    return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

inline IqBuffer gen_waveform(const WaveformSpec& spec) {
    spec.validate();
    const std::size_t n = spec.num_samples();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));

    std::vector<Complex> x(n);
    for (auto& v : x) {
        const double re = normal(rng);
        const double im = normal(rng);
        v = Complex(re, im);
    }

    fft_inplace(x, FftDirection::Forward);
    const double half_band = 0.5 * spec.bandwidth;
    for (std::size_t m = 0; m < n; ++m) {
        const double idx = m < (n + 1) / 2 ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(n);
        if (std::abs(idx * spec.sample_rate / static_cast<double>(n)) > half_band) x[m] = 0.0;
    }
    fft_inplace(x, FftDirection::Inverse);

    const double p = mean_power(x);
    if (!(p > 0.0)) throw std::invalid_argument("waveform: bandwidth too narrow for the buffer length");
    const double scale = 1.0 / std::sqrt(p);
    for (auto& v : x) v *= scale;

    return IqBuffer{std::move(x), spec.sample_rate, spec.start_time};
}

/// Circularly delayed copy of `wave` by `delay` seconds. Integer-sample
/// delays are pure index shifts; fractional ones use a DFT phase ramp.
inline std::vector<Complex> delayed(const IqBuffer& wave, double delay) {
    wave.validate();
    const std::size_t n = wave.size();
    const double shift = delay * wave.sample_rate;
    if (!(delay >= 0.0) || shift >= static_cast<double>(n))
        throw std::invalid_argument("delay must be non-negative and shorter than the buffer");

    const double rounded = std::round(shift);
    if (std::abs(shift - rounded) < 1e-9) {
        const auto d = static_cast<std::size_t>(rounded);
        std::vector<Complex> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = wave.samples[(i + n - d) % n];
        return out;
    }

    std::vector<Complex> x = wave.samples;
    fft_inplace(x, FftDirection::Forward);
    for (std::size_t m = 0; m < n; ++m) {
        const double idx = m < (n + 1) / 2 ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(n);
        x[m] *= std::polar(1.0 / static_cast<double>(n), -2.0 * std::numbers::pi * idx * shift / static_cast<double>(n));
    }
    fft_inplace(x, FftDirection::Inverse);
    return x;
}

inline void add_noise(std::vector<Complex>& x, double noise_power, std::uint64_t seed) {
    if (noise_power <= 0.0) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5 * noise_power));
    for (auto& v : x) {
        const double re = normal(rng);
        const double im = normal(rng);
        v += Complex(re, im);
    }
}

inline IqBuffer synth_reference(const IqBuffer& wave, const ChannelSpec& ch, std::uint64_t seed) {
    ch.validate();
    std::vector<Complex> out = delayed(wave, ch.los_delay);
    for (auto& v : out) v *= ch.los_gain;
    add_noise(out, ch.reference_noise(), seed);
    return IqBuffer{std::move(out), wave.sample_rate, wave.start_time};
}

/// Per-sample phase of the target echo. The instantaneous frequency is
/// held for each detection interval and the phase is its running integral,
/// so there are no phase jumps at interval boundaries.
struct EchoSchedule {
    std::vector<double> doppler;          // Hz, one per interval
    std::vector<std::ptrdiff_t> delay;    // samples, one per interval
};

inline EchoSchedule echo_schedule(const ScenarioGeometry& g, std::size_t rx, const MotionParams& truth,
                                  const ChannelSpec& ch, double sample_rate) {
    const Trajectory traj = propagate(truth);
    EchoSchedule s;
    s.doppler.reserve(truth.size());
    s.delay.reserve(truth.size());
    const double base = baseline(g, rx);
    for (std::size_t k = 0; k < truth.size(); ++k) {
        s.doppler.push_back(bistatic_doppler(g, rx, traj.positions[k], truth.velocities[k]));
        const double tau = ch.los_delay + (bistatic_range(g, rx, traj.positions[k]) - base) / kSpeedOfLight;
        s.delay.push_back(static_cast<std::ptrdiff_t>(std::llround(tau * sample_rate)));
    }
    return s;
}

/// Detection-interval index of absolute time t, clamped to the trajectory.
inline std::size_t interval_index(double t, double step, std::size_t count) {
    const double q = std::floor(t / step + 1e-9);
    if (q <= 0.0) return 0;
    const auto i = static_cast<std::size_t>(q);
    return i >= count ? count - 1 : i;
}

inline IqBuffer synth_surveillance(const IqBuffer& wave, const ChannelSpec& ch, const ScenarioGeometry& g,
                                   std::size_t rx, const MotionParams& truth, std::uint64_t seed) {
    wave.validate();
    ch.validate();
    g.validate();
    truth.validate();
    const std::size_t n = wave.size();
    const double ts = wave.sample_period();
    const double last_instant = static_cast<double>(truth.size() - 1) * truth.step;
    if (wave.start_time > 1e-12 || wave.end_time() < last_instant - 1e-12)
        throw std::invalid_argument("surveillance: buffer does not cover the trajectory span");

    std::vector<Complex> out(n, Complex{});

    if (ch.target_gain != Complex{}) {
        const EchoSchedule sched = echo_schedule(g, rx, truth, ch, wave.sample_rate);
        const auto nn = static_cast<std::ptrdiff_t>(n);
        double run_phase = 0.0;
        std::size_t run_start = 0;
        std::size_t current = interval_index(wave.start_time, truth.step, truth.size());
        for (std::size_t i = 0; i < n; ++i) {
            const double t = wave.start_time + static_cast<double>(i) * ts;
            const std::size_t k = interval_index(t, truth.step, truth.size());
            if (k != current) {
                run_phase += 2.0 * std::numbers::pi * sched.doppler[current] * static_cast<double>(i - run_start) * ts;
                run_phase = std::remainder(run_phase, 2.0 * std::numbers::pi);
                run_start = i;
                current = k;
            }
            const double phase =
                run_phase + 2.0 * std::numbers::pi * sched.doppler[k] * static_cast<double>(i - run_start) * ts;
            std::ptrdiff_t src = (static_cast<std::ptrdiff_t>(i) - sched.delay[k]) % nn;
            if (src < 0) src += nn;
            out[i] = ch.target_gain * wave.samples[static_cast<std::size_t>(src)] * std::polar(1.0, phase);
        }
    }

    for (const auto& path : ch.clutter_paths) {
        const std::vector<Complex> d = delayed(wave, path.delay);
        for (std::size_t i = 0; i < n; ++i) out[i] += path.gain * d[i];
    }

    add_noise(out, ch.noise_power, seed);
    return IqBuffer{std::move(out), wave.sample_rate, wave.start_time};
}

}  // namespace dopptrack
