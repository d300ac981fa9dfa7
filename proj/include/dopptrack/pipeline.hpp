#pragma once

// End-to-end run: truth -> (signals -> cancellation -> CAF -> tracks | direct
// forward-model Doppler) -> multi-start solve -> score -> artifacts.
//
// Signal timing: instant k (1-based) starts at t = (k-1)·step. Buffers start
// at step/2 - window/2, so CAF window k is centred on the middle of
// detection interval k, where the forward model's velocity v_k applies.

#include "dopptrack/caf.hpp"
#include "dopptrack/clutter_cancel.hpp"
#include "dopptrack/config.hpp"
#include "dopptrack/csv.hpp"
#include "dopptrack/doppler_track.hpp"
#include "dopptrack/iq_io.hpp"
#include "dopptrack/score.hpp"
#include "dopptrack/signal_synth.hpp"
#include "dopptrack/solver.hpp"
#include "dopptrack/svg.hpp"
#include "dopptrack/truth.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopptrack {

class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& msg)
        : std::runtime_error(msg), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// Independent stream seed for (tag, index) under a global seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag * 0x100000001b3ull + index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

namespace seed_tag {
inline constexpr std::uint64_t waveform = 1;
inline constexpr std::uint64_t reference_noise = 2;
inline constexpr std::uint64_t surveillance_noise = 3;
inline constexpr std::uint64_t measurement_noise = 4;
}  // namespace seed_tag

struct SignalTiming {
    double sample_rate = 0.0;
    std::size_t window = 0;
    std::size_t hop = 0;
    std::size_t total = 0;
    double start_time = 0.0;
};

inline SignalTiming signal_timing(const RunConfig& cfg, std::size_t instants, double step) {
    SignalTiming t;
    t.sample_rate = cfg.waveform.sample_rate;
    t.window = static_cast<std::size_t>(std::llround(cfg.caf_window_s * t.sample_rate));
    t.hop = static_cast<std::size_t>(std::llround(step * t.sample_rate));
    if (t.window == 0 || t.hop == 0) throw StageError("config", "window or step shorter than one sample");
    t.total = (instants - 1) * t.hop + t.window;
    t.start_time = 0.5 * step - 0.5 * static_cast<double>(t.window) / t.sample_rate;
    return t;
}

/// Largest divisor of gcd(window, hop) not above sample_rate / decimated_rate.
inline std::size_t choose_decimation(std::size_t window, std::size_t hop, double sample_rate, double decimated_rate) {
    if (decimated_rate <= 0.0) return 1;
    const auto target = static_cast<std::size_t>(std::max(1.0, std::floor(sample_rate / decimated_rate)));
    const std::size_t g = std::gcd(window, hop);
    for (std::size_t d = std::min(target, g); d > 1; --d)
        if (g % d == 0) return d;
    return 1;
}

inline CafConfig caf_config_for(const RunConfig& cfg, const SignalTiming& t) {
    CafConfig c = cfg.caf;
    const CafConfig timing =
        CafConfig::from_timing(static_cast<double>(t.window) / t.sample_rate, static_cast<double>(t.hop) / t.sample_rate,
                               t.sample_rate, cfg.doppler_limit_hz);
    c.window_samples = timing.window_samples;
    c.hop_samples = timing.hop_samples;
    c.grid = timing.grid;
    c.decimation = choose_decimation(t.window, t.hop, t.sample_rate, cfg.caf_decimated_rate_hz);
    return c;
}

inline CancellerConfig canceller_config_for(const RunConfig& cfg, const SignalTiming& t) {
    CancellerConfig c = cfg.canceller;
    c.block_length = cfg.canceller_block_s > 0.0
                         ? static_cast<std::size_t>(std::llround(cfg.canceller_block_s * t.sample_rate))
                         : t.window;
    return c;
}

inline MotionParams make_truth(const RunConfig& cfg) {
    const TruthSpec& t = cfg.truth;
    if (t.file) return motion_from_record(read_trajectory_csv(*t.file));
    const std::vector<Vec2> wps = t.shape ? shape_waypoints(*t.shape, t.origin, t.width, t.height) : t.waypoints;
    return motion_from_waypoints(wps, t.num_instants, t.step, t.speed);
}

struct ReceiverSignals {
    IqBuffer reference;
    IqBuffer surveillance;
};

/// Illuminator waveforms, one per illuminator, covering the whole run.
inline std::vector<IqBuffer> make_waveforms(const RunConfig& cfg, const SignalTiming& t) {
    std::vector<IqBuffer> waves;
    for (std::size_t i = 0; i < cfg.geometry.tx_positions.size(); ++i) {
        WaveformSpec w = cfg.waveform;
        w.duration = static_cast<double>(t.total) / t.sample_rate;
        w.seed = derive_seed(cfg.seed, seed_tag::waveform, i);
        w.start_time = t.start_time;
        IqBuffer b = gen_waveform(w);
        if (b.size() != t.total) b.samples.resize(t.total);
        waves.push_back(std::move(b));
    }
    return waves;
}

inline ReceiverSignals synth_receiver(const RunConfig& cfg, const MotionParams& truth, std::size_t rx,
                                      const IqBuffer& wave) {
    const ChannelSpec& ch = cfg.channels.at(rx);
    return {synth_reference(wave, ch, derive_seed(cfg.seed, seed_tag::reference_noise, rx)),
            synth_surveillance(wave, ch, cfg.geometry, rx, truth, derive_seed(cfg.seed, seed_tag::surveillance_noise, rx))};
}

inline std::filesystem::path fixture_path(const std::filesystem::path& dir, std::size_t rx, const char* channel) {
    return dir / ("rx" + std::to_string(rx + 1) + "_" + channel + ".iq");
}

inline MeasurementSet doppler_only_measurements(const RunConfig& cfg, const MotionParams& truth) {
    Eigen::MatrixXd z = forward_doppler(cfg.geometry, truth);
    const double q = cfg.measurement.quantization_hz;
    std::mt19937_64 rng(derive_seed(cfg.seed, seed_tag::measurement_noise));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Eigen::Index k = 0; k < z.rows(); ++k)
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            double v = z(k, j);
            if (q > 0.0) v = q * std::round(v / q);
            z(k, j) = v + cfg.measurement.noise_sigma_hz * noise(rng);
        }
    return MeasurementSet{z, truth.step};
}

struct PipelineResult {
    MotionParams truth;
    MeasurementSet measurements;
    DopplerTrackSet tracks;
    /// caf_maps[j][k-1]; filled in full-signal mode.
    std::vector<std::vector<CafMap>> caf_maps;
    /// Zero-Doppler CAF amplitude before vs after cancellation, dB, per receiver.
    std::vector<double> clutter_suppression_db;
    /// Smoothed track minus forward-model truth Doppler, RMS per receiver, Hz.
    std::vector<double> track_rmse_hz;
    std::size_t caf_decimation = 1;
    SolveResult solution;
    ErrorReport report;
};

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace detail {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

inline void full_signal_tracks(const RunConfig& cfg, PipelineResult& res) {
    const std::size_t k_count = res.truth.size();
    const SignalTiming timing = signal_timing(cfg, k_count, res.truth.step);
    const CafConfig caf_cfg = stage("caf", [&] {
        CafConfig c = caf_config_for(cfg, timing);
        c.validate();
        return c;
    });
    const CancellerConfig canc_cfg = stage("cancel", [&] {
        CancellerConfig c = canceller_config_for(cfg, timing);
        c.validate();
        return c;
    });
    res.caf_decimation = caf_cfg.decimation;

    std::vector<IqBuffer> waves;
    if (!cfg.signal_source.from_files) waves = stage("synth", [&] { return make_waveforms(cfg, timing); });

    const Eigen::MatrixXd truth_doppler = forward_doppler(cfg.geometry, res.truth);
    std::vector<std::vector<Detection>> detections;
    for (std::size_t j = 0; j < cfg.geometry.num_receivers(); ++j) {
        ReceiverSignals sig = stage("synth", [&] {
            if (!cfg.signal_source.from_files) return synth_receiver(cfg, res.truth, j, waves[cfg.geometry.pairing[j]]);
            ReceiverSignals s{read_iq(fixture_path(cfg.signal_source.dir, j, "ref")).buffer,
                              read_iq(fixture_path(cfg.signal_source.dir, j, "surv")).buffer};
            for (const IqBuffer* b : {&s.reference, &s.surveillance})
                if (b->size() != timing.total || std::abs(b->sample_rate - timing.sample_rate) > 1e-6)
                    throw std::runtime_error("fixture for receiver " + std::to_string(j + 1) +
                                             " does not match the configured timing");
            return s;
        });
        const IqBuffer cleaned = stage("cancel", [&] { return cancel(sig.surveillance, sig.reference, canc_cfg); });
        auto maps = stage("caf", [&] { return caf_series(cleaned, sig.reference, k_count, caf_cfg, j); });
        const auto before = stage("caf", [&] { return caf_series(sig.surveillance, sig.reference, k_count, caf_cfg, j); });

        const std::size_t zero = caf_cfg.grid.nearest(0.0);
        std::vector<double> b0, a0;
        for (std::size_t k = 0; k < k_count; ++k) {
            b0.push_back(before[k].amplitudes[zero]);
            a0.push_back(maps[k].amplitudes[zero]);
        }
        res.clutter_suppression_db.push_back(20.0 * std::log10(median_of(b0) / median_of(a0)));

        std::vector<Detection> dets;
        for (const auto& m : maps) dets.push_back(detect(m, caf_cfg));
        detections.push_back(std::move(dets));
        res.caf_maps.push_back(std::move(maps));
    }

    res.tracks = stage("track", [&] { return build_tracks(detections, res.truth.step, cfg.kalman); });
    res.measurements = MeasurementSet{res.tracks.smoothed.transpose(), res.truth.step};
    for (std::size_t j = 0; j < cfg.geometry.num_receivers(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double mse = (res.tracks.smoothed.row(jj).transpose() - truth_doppler.col(jj)).squaredNorm() /
                           static_cast<double>(k_count);
        res.track_rmse_hz.push_back(std::sqrt(mse));
    }
}

}  // namespace detail

inline PipelineResult run_pipeline(const RunConfig& cfg) {
    PipelineResult res;
    res.truth = detail::stage("truth", [&] {
        MotionParams m = make_truth(cfg);
        m.validate();
        if (m.size() < 2) throw std::invalid_argument("truth needs at least two instants");
        return m;
    });

    if (cfg.mode == RunMode::DopplerOnly) {
        res.measurements = detail::stage("measure", [&] { return doppler_only_measurements(cfg, res.truth); });
        const Eigen::MatrixXd zt = res.measurements.values.transpose();
        res.tracks.step = res.truth.step;
        res.tracks.raw = zt;
        res.tracks.valid = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(zt.rows(), zt.cols(), true);
        res.tracks.interpolated = zt;
        res.tracks.smoothed = zt;
    } else {
        detail::full_signal_tracks(cfg, res);
    }

    res.solution = detail::stage("solve", [&] { return solve(res.measurements, cfg.geometry, cfg.solver); });
    res.report = detail::stage("score", [&] {
        ErrorReport r = score(res.solution.trajectory, propagate(res.truth));
        r.doppler_rmse = doppler_residual_rmse(res.solution.best, res.measurements, cfg.geometry);
        return r;
    });
    return res;
}

inline nlohmann::ordered_json report_json(const ErrorReport& r) {
    nlohmann::ordered_json j;
    j["p50_m"] = r.p50;
    j["p90_m"] = r.p90;
    j["max_m"] = r.max;
    j["doppler_rmse_hz"] = r.doppler_rmse;
    j["errors_m"] = r.errors;
    return j;
}

inline void write_artifacts(const RunConfig& cfg, const PipelineResult& res) {
    detail::stage("output", [&] {
        namespace fs = std::filesystem;
        fs::create_directories(cfg.output_dir);
        const fs::path& out = cfg.output_dir;

        write_trajectory_csv(out / "trajectory.csv", res.solution.best);
        write_trajectory_csv(out / "truth.csv", res.truth);
        write_track_csv(out / "tracks.csv", res.tracks);
        write_cdf_csv(out / "errors_cdf.csv", res.report.cdf);
        if (cfg.write_caf_map)
            for (std::size_t j = 0; j < res.caf_maps.size(); ++j)
                write_caf_csv(out / ("caf_map_rx" + std::to_string(j + 1) + ".csv"), res.caf_maps[j]);

        nlohmann::ordered_json rep = report_json(res.report);
        if (cfg.mode == RunMode::FullSignal) {
            rep["track_rmse_hz"] = res.track_rmse_hz;
            rep["clutter_suppression_db"] = res.clutter_suppression_db;
        }
        std::ofstream(out / "report.json", std::ios::binary) << rep.dump(2) << '\n';

        nlohmann::ordered_json sum;
        sum["seed"] = cfg.seed;
        sum["mode"] = cfg.mode == RunMode::FullSignal ? "full-signal" : "doppler-only";
        sum["num_instants"] = res.truth.size();
        sum["step_s"] = res.truth.step;
        sum["objective_hz2"] = res.solution.objective;
        sum["best_start"] = res.solution.best_start;
        sum["near_tie"] = res.solution.near_tie;
        if (cfg.mode == RunMode::FullSignal) sum["caf_decimation"] = res.caf_decimation;
        auto& starts = sum["starts"] = nlohmann::ordered_json::array();
        for (const auto& s : res.solution.per_start) {
            nlohmann::ordered_json e;
            e["objective_hz2"] = std::isfinite(s.objective) ? nlohmann::ordered_json(s.objective) : nlohmann::ordered_json(nullptr);
            e["iterations"] = s.iterations;
            e["converged"] = s.converged;
            e["initial_position"] = {s.initial_position.x(), s.initial_position.y()};
            e["final_position"] = {s.final_position.x(), s.final_position.y()};
            starts.push_back(std::move(e));
        }
        std::ofstream(out / "summary.json", std::ios::binary) << sum.dump(2) << '\n';

        if (cfg.write_svg) {
            const Trajectory truth = propagate(res.truth);
            PlotSeries t{"ground truth", "#1f4eb4", {}, {}};
            PlotSeries r{"reconstructed", "#c0282d", {}, {}};
            for (const auto& p : truth.positions) { t.x.push_back(p.x()); t.y.push_back(p.y()); }
            for (const auto& p : res.solution.trajectory.positions) { r.x.push_back(p.x()); r.y.push_back(p.y()); }
            write_svg(out / "trajectory.svg", {"Trajectory", "x (m)", "y (m)", true}, {t, r});

            PlotSeries cdf{"tracking error", "#c0282d", {}, {}, true};
            for (const auto& p : res.report.cdf) { cdf.x.push_back(p.error); cdf.y.push_back(p.probability); }
            write_svg(out / "error_cdf.svg", {"Tracking error CDF", "error (m)", "CDF"}, {cdf});
        }
        return 0;
    });
}

/// Loads a config, runs the pipeline and writes every artifact.
inline PipelineResult run(const std::filesystem::path& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    PipelineResult res = run_pipeline(cfg);
    write_artifacts(cfg, res);
    return res;
}

/// Writes reference/surveillance IQ fixtures for every receiver plus the
/// ground-truth trajectory they were synthesized from.
inline void write_fixtures(const RunConfig& cfg, const std::filesystem::path& dir) {
    const MotionParams truth = detail::stage("truth", [&] { return make_truth(cfg); });
    if (cfg.channels.size() != cfg.geometry.num_receivers())
        throw StageError("config", "need one channel entry per receiver");
    const SignalTiming timing = signal_timing(cfg, truth.size(), truth.step);
    const auto waves = detail::stage("synth", [&] { return make_waveforms(cfg, timing); });
    detail::stage("output", [&] {
        std::filesystem::create_directories(dir);
        write_trajectory_csv(dir / "truth.csv", truth);
        return 0;
    });
    for (std::size_t j = 0; j < cfg.geometry.num_receivers(); ++j) {
        const ReceiverSignals sig =
            detail::stage("synth", [&] { return synth_receiver(cfg, truth, j, waves[cfg.geometry.pairing[j]]); });
        detail::stage("output", [&] {
            write_iq(fixture_path(dir, j, "ref"), sig.reference, "rx" + std::to_string(j + 1) + " reference");
            write_iq(fixture_path(dir, j, "surv"), sig.surveillance, "rx" + std::to_string(j + 1) + " surveillance");
            return 0;
        });
    }
}

}  // namespace dopptrack
