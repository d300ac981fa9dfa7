#include "dopptrack/caf.hpp"
#include "dopptrack/clutter_cancel.hpp"
#include "dopptrack/signal_synth.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace dopptrack;

namespace {

IqBuffer wave(std::uint64_t seed, double duration = 1.0) {
    WaveformSpec w;
    w.bandwidth = 80e3;
    w.sample_rate = 100e3;
    w.duration = duration;
    w.seed = seed;
    return gen_waveform(w);
}

IqBuffer scaled_shift(const IqBuffer& ref, Complex gain, std::size_t shift) {
    IqBuffer out{std::vector<Complex>(ref.size()), ref.sample_rate, ref.start_time};
    for (std::size_t i = shift; i < ref.size(); ++i) out.samples[i] = gain * ref.samples[i - shift];
    return out;
}

double ratio_db(const IqBuffer& a, const IqBuffer& b) { return 10 * std::log10(mean_power(a.samples) / mean_power(b.samples)); }

CancellerConfig config(std::size_t taps, std::size_t block, double eps = 1e-9) {
    CancellerConfig c;
    c.max_delay_taps = taps;
    c.block_length = block;
    c.regularization = eps;
    return c;
}

}  // namespace

TEST_CASE("cancel: scaled reference vanishes") {
    const auto ref = wave(1, 0.2);
    const auto surv = scaled_shift(ref, 0.7, 0);
    for (std::size_t taps : {1, 4, 8}) {
        const auto out = cancel(surv, ref, config(taps, 5000));
        CHECK(out.size() == surv.size());
        CHECK(ratio_db(out, surv) <= -60.0);
    }
}

TEST_CASE("cancel: delayed copy needs a long enough tap line") {
    const auto ref = wave(2, 0.2);
    const auto surv = scaled_shift(ref, Complex(0.3, -0.4), 5);
    CHECK(ratio_db(cancel(surv, ref, config(8, 5000)), surv) <= -60.0);
    CHECK(ratio_db(cancel(surv, ref, config(3, 5000)), surv) > -10.0);
}

TEST_CASE("cancel: projection idempotence and orthogonality at zero regularization") {
    const auto ref = wave(3, 0.1);
    IqBuffer surv = wave(4, 0.1);
    const auto clutter = scaled_shift(ref, 5.0, 2);
    for (std::size_t i = 0; i < surv.size(); ++i) surv.samples[i] += clutter.samples[i];

    const auto cfg = config(8, 2500, 0.0);
    const auto once = cancel(surv, ref, cfg);
    const auto twice = cancel(once, ref, cfg);
    double diff = 0, norm = 0;
    for (std::size_t i = 0; i < once.size(); ++i) {
        diff += std::norm(twice.samples[i] - once.samples[i]);
        norm += std::norm(once.samples[i]);
    }
    CHECK(std::sqrt(diff / norm) <= 1e-6);

    for (std::size_t start : block_starts(surv.size(), cfg.block_length)) {
        const auto x = detail::delayed_reference_columns(ref, start, cfg.block_length, cfg.max_delay_taps);
        const Eigen::Map<const Eigen::VectorXcd> r(once.samples.data() + start, cfg.block_length);
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            CHECK(std::abs(x.col(c).dot(r)) / (x.col(c).norm() * r.norm()) <= 1e-6);
    }
}

TEST_CASE("cancel: linear in the surveillance input") {
    const auto ref = wave(5, 0.1);
    const auto a = wave(6, 0.1), b = wave(7, 0.1);
    IqBuffer mix = a;
    const Complex ca(1.5, -0.5), cb(-0.25, 2.0);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] = ca * a.samples[i] + cb * b.samples[i];
    const auto cfg = config(6, 2000);
    const auto oa = cancel(a, ref, cfg), ob = cancel(b, ref, cfg), om = cancel(mix, ref, cfg);
    double worst = 0;
    for (std::size_t i = 0; i < om.size(); ++i)
        worst = std::max(worst, std::abs(om.samples[i] - (ca * oa.samples[i] + cb * ob.samples[i])));
    CHECK(worst < 1e-9);
}

TEST_CASE("cancel: moving target survives while clutter is removed") {
    const auto ref = wave(8, 1.0);
    IqBuffer clutter = scaled_shift(ref, 30.0, 0);
    const auto mp = scaled_shift(ref, Complex(3, 4), 4);
    for (std::size_t i = 0; i < clutter.size(); ++i) clutter.samples[i] += mp.samples[i];
    IqBuffer target{std::vector<Complex>(ref.size()), ref.sample_rate, 0.0};
    for (std::size_t i = 0; i < ref.size(); ++i)
        target.samples[i] = ref.samples[i] * std::polar(1.0, 2 * std::numbers::pi * 50.0 * static_cast<double>(i) / ref.sample_rate);
    IqBuffer surv = clutter;
    for (std::size_t i = 0; i < surv.size(); ++i) surv.samples[i] += target.samples[i];

    // |f_D| = 50 Hz is well above 2/(block duration) = 4 Hz.
    const auto out = cancel(surv, ref, config(8, 50000));
    const auto caf_cfg = CafConfig::from_timing(0.5, 0.5, ref.sample_rate);
    const std::size_t f50 = caf_cfg.grid.nearest(50.0), f0 = caf_cfg.grid.nearest(0.0);
    for (std::size_t k = 1; k <= 2; ++k) {
        const auto before = caf_window(surv, ref, k, caf_cfg);
        const auto after = caf_window(out, ref, k, caf_cfg);
        const auto clean = caf_window(target, ref, k, caf_cfg);
        CHECK(20 * std::log10(clean.amplitudes[f50] / after.amplitudes[f50]) <= 3.0);
        CHECK(20 * std::log10(before.amplitudes[f0] / after.amplitudes[f0]) >= 40.0);
        CHECK(after.peak_index() == f50);
    }
}

TEST_CASE("cancel: errors") {
    const auto ref = wave(9, 0.05);
    auto shorter = ref;
    shorter.samples.pop_back();
    CHECK_THROWS_AS(cancel(shorter, ref, config(4, 1000)), std::invalid_argument);
    CHECK_THROWS_AS(cancel(ref, ref, config(8, 8)), std::invalid_argument);
    CHECK_THROWS_AS(cancel(ref, ref, config(4, 100000)), std::invalid_argument);

    IqBuffer silent{std::vector<Complex>(ref.size()), ref.sample_rate, 0.0};
    CHECK_THROWS_AS(cancel(ref, silent, config(4, 1000, 0.0)), CancellationError);
}

TEST_CASE("cancel: blocks tile the buffer") {
    CHECK(block_starts(10, 3) == std::vector<std::size_t>{0, 3, 6});
    CHECK(block_starts(9, 3) == std::vector<std::size_t>{0, 3, 6});
    const auto ref = wave(10, 0.0105);
    const auto surv = scaled_shift(ref, 2.0, 1);
    const auto out = cancel(surv, ref, config(4, 200));
    CHECK(out.size() == surv.size());
    CHECK(ratio_db(out, surv) <= -60.0);
}
