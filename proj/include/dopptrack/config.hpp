#pragma once

// Run configuration (JSON). Relative paths inside a config file are
// resolved against the directory that holds the file. Errors name the
// offending field ("solver.num_starts: ...") or, for syntax errors, the
// line and column.

#include "dopptrack/caf.hpp"
#include "dopptrack/clutter_cancel.hpp"
#include "dopptrack/doppler_track.hpp"
#include "dopptrack/signal_synth.hpp"
#include "dopptrack/solver.hpp"
#include "dopptrack/truth.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopptrack {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RunMode { FullSignal, DopplerOnly };

struct TruthSpec {
    // Exactly one source is set.
    std::optional<Shape> shape;
    std::vector<Vec2> waypoints;
    std::optional<std::filesystem::path> file;

    Vec2 origin = Vec2::Zero();
    double width = 0.0;
    double height = 0.0;
    std::size_t num_instants = 400;
    double step = 0.05;
    std::optional<double> speed;
};

struct MeasurementNoise {
    double quantization_hz = 2.0;
    double noise_sigma_hz = 0.5;
};

struct SignalSource {
    bool from_files = false;
    std::filesystem::path dir;
};

struct RunConfig {
    std::uint64_t seed = 1;
    RunMode mode = RunMode::DopplerOnly;
    std::filesystem::path output_dir = "out";
    ScenarioGeometry geometry;
    TruthSpec truth;
    MeasurementNoise measurement;
    WaveformSpec waveform;
    std::vector<ChannelSpec> channels;
    CancellerConfig canceller;
    /// Canceller block length in seconds; 0 means one CAF window.
    double canceller_block_s = 0.0;
    double caf_window_s = 0.5;
    double doppler_limit_hz = 250.0;
    /// Rate the CAF product is integrated down to; 0 keeps the full rate.
    double caf_decimated_rate_hz = 0.0;
    CafConfig caf;
    KalmanConfig kalman;
    SolverConfig solver;
    SignalSource signal_source;
    bool write_caf_map = false;
    bool write_svg = true;
};

namespace detail {

using Json = nlohmann::json;

class Reader {
public:
    Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError((path_.empty() ? "<root>" : path_) + ": " + msg); }

    bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

    Reader at(const char* key) const {
        if (!has(key)) Reader(j_, join(key)).fail("missing required field");
        return Reader(j_.at(key), join(key));
    }

    std::optional<Reader> maybe(const char* key) const {
        if (!has(key)) return std::nullopt;
        return Reader(j_.at(key), join(key));
    }

    double number() const {
        if (!j_.is_number()) fail("expected a number");
        const double v = j_.get<double>();
        if (!std::isfinite(v)) fail("expected a finite number");
        return v;
    }

    double positive() const {
        const double v = number();
        if (!(v > 0.0)) fail("expected a positive number");
        return v;
    }

    double non_negative() const {
        const double v = number();
        if (!(v >= 0.0)) fail("expected a non-negative number");
        return v;
    }

    std::uint64_t integer() const {
        if (!j_.is_number_integer() || (j_.is_number_integer() && !j_.is_number_unsigned() && j_.get<long long>() < 0))
            fail("expected a non-negative integer");
        return j_.get<std::uint64_t>();
    }

    std::size_t count() const {
        const auto v = integer();
        if (v == 0) fail("expected a positive integer");
        return static_cast<std::size_t>(v);
    }

    bool boolean() const {
        if (!j_.is_boolean()) fail("expected true or false");
        return j_.get<bool>();
    }

    std::string string() const {
        if (!j_.is_string()) fail("expected a string");
        return j_.get<std::string>();
    }

    Vec2 point() const {
        if (!j_.is_array() || j_.size() != 2 || !j_[0].is_number() || !j_[1].is_number())
            fail("expected [x, y]");
        return Vec2(j_[0].get<double>(), j_[1].get<double>());
    }

    /// [re, im] or {"power_db": p, "phase_deg": d}.
    Complex gain() const {
        if (j_.is_array()) {
            if (j_.size() != 2 || !j_[0].is_number() || !j_[1].is_number()) fail("expected [re, im]");
            return Complex(j_[0].get<double>(), j_[1].get<double>());
        }
        if (j_.is_object()) {
            const double p = at("power_db").number();
            const double ph = maybe("phase_deg") ? maybe("phase_deg")->number() : 0.0;
            return std::polar(std::pow(10.0, p / 20.0), ph * 3.14159265358979323846 / 180.0);
        }
        fail("expected [re, im] or {power_db, phase_deg}");
    }

    std::size_t size() const {
        if (!j_.is_array()) fail("expected an array");
        return j_.size();
    }

    Reader index(std::size_t i) const { return Reader(j_.at(i), path_ + "[" + std::to_string(i) + "]"); }

    const Json& json() const { return j_; }

private:
    std::string join(const char* key) const { return path_.empty() ? std::string(key) : path_ + "." + key; }

    const Json& j_;
    std::string path_;
};

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline ScenarioGeometry parse_geometry(const Reader& r) {
    ScenarioGeometry g;
    const Reader ill = r.at("illuminators");
    for (std::size_t i = 0; i < ill.size(); ++i) {
        const Reader e = ill.index(i);
        g.tx_positions.push_back(e.at("position").point());
        if (e.has("wavelength_m"))
            g.wavelengths.push_back(e.at("wavelength_m").positive());
        else
            g.wavelengths.push_back(wavelength_from_carrier(e.at("carrier_hz").positive()));
    }
    const Reader rx = r.at("receivers");
    for (std::size_t j = 0; j < rx.size(); ++j) {
        const Reader e = rx.index(j);
        g.rx_positions.push_back(e.at("position").point());
        const auto idx = e.at("illuminator").integer();
        if (idx >= g.tx_positions.size()) e.at("illuminator").fail("no such illuminator");
        g.pairing.push_back(static_cast<std::size_t>(idx));
    }
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    return g;
}

inline TruthSpec parse_truth(const Reader& r, const std::filesystem::path& base) {
    TruthSpec t;
    int sources = 0;
    if (auto s = r.maybe("shape")) {
        ++sources;
        try {
            t.shape = parse_shape(s->string());
        } catch (const std::invalid_argument& e) {
            s->fail(e.what());
        }
        if (auto o = r.maybe("origin")) t.origin = o->point();
        t.width = r.at("width").positive();
        t.height = r.at("height").positive();
    }
    if (auto w = r.maybe("waypoints")) {
        ++sources;
        for (std::size_t i = 0; i < w->size(); ++i) t.waypoints.push_back(w->index(i).point());
        if (t.waypoints.size() < 2) w->fail("need at least two waypoints");
    }
    if (auto f = r.maybe("file")) {
        ++sources;
        t.file = resolve(base, f->string());
        if (!std::filesystem::exists(*t.file)) f->fail("file not found: " + t.file->string());
    }
    if (sources != 1) r.fail("exactly one of shape, waypoints or file is required");
    if (!t.file) {
        if (auto n = r.maybe("num_instants")) t.num_instants = n->count();
        if (t.num_instants < 2) r.at("num_instants").fail("need at least two instants");
        if (auto s = r.maybe("step")) t.step = s->positive();
        if (auto v = r.maybe("speed")) t.speed = v->positive();
    }
    return t;
}

inline ChannelSpec parse_channel(const Reader& r) {
    ChannelSpec c;
    if (auto v = r.maybe("los_gain")) c.los_gain = v->gain();
    if (auto v = r.maybe("los_delay_s")) c.los_delay = v->non_negative();
    if (auto v = r.maybe("target_gain")) c.target_gain = v->gain();
    if (auto v = r.maybe("noise_power")) c.noise_power = v->non_negative();
    if (auto v = r.maybe("reference_noise_power")) c.reference_noise_power = v->non_negative();
    if (auto cl = r.maybe("clutter")) {
        for (std::size_t i = 0; i < cl->size(); ++i) {
            const Reader p = cl->index(i);
            c.clutter_paths.push_back({p.at("gain").gain(), p.at("delay_s").non_negative()});
        }
    }
    return c;
}

inline SolverConfig parse_solver(const Reader& r) {
    SolverConfig s;
    if (auto v = r.maybe("num_starts")) s.num_starts = v->count();
    if (auto v = r.maybe("candidates_per_location")) s.candidates_per_location = v->count();
    if (auto v = r.maybe("max_iters")) s.max_iters = v->count();
    const Reader region = r.at("init_region");
    s.init_region.lo = region.at("min").point();
    s.init_region.hi = region.at("max").point();
    if (!(s.init_region.width() > 0.0) || !(s.init_region.height() > 0.0)) region.fail("empty rectangle");
    if (auto v = r.maybe("init_velocity_scale")) s.init_velocity_scale = v->non_negative();
    if (auto v = r.maybe("damping_init")) s.damping_init = v->positive();
    if (auto v = r.maybe("damping_up")) s.damping_up = v->positive();
    if (auto v = r.maybe("damping_down")) s.damping_down = v->positive();
    if (auto v = r.maybe("convergence_tol")) s.convergence_tol = v->positive();
    if (auto v = r.maybe("velocity_smoothness")) s.velocity_smoothness = v->non_negative();
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    return s;
}

/// 1-based line and column of a byte offset.
inline std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
    detail::Json j;
    try {
        j = detail::Json::parse(text);
    } catch (const detail::Json::parse_error& e) {
        throw ConfigError("syntax error at " + detail::line_col(text, e.byte) + ": " + e.what());
    }
    const detail::Reader root(j, "");
    if (!j.is_object()) root.fail("expected a JSON object");

    RunConfig c;
    c.seed = root.at("seed").integer();
    const std::string mode = root.at("mode").string();
    if (mode == "full-signal")
        c.mode = RunMode::FullSignal;
    else if (mode == "doppler-only")
        c.mode = RunMode::DopplerOnly;
    else
        root.at("mode").fail("expected \"full-signal\" or \"doppler-only\"");
    if (auto o = root.maybe("output_dir")) c.output_dir = detail::resolve(base_dir, o->string());
    else c.output_dir = base_dir / "out";

    c.geometry = detail::parse_geometry(root.at("scenario"));
    c.truth = detail::parse_truth(root.at("truth"), base_dir);

    if (auto m = root.maybe("measurement")) {
        if (auto v = m->maybe("quantization_hz")) c.measurement.quantization_hz = v->non_negative();
        if (auto v = m->maybe("noise_sigma_hz")) c.measurement.noise_sigma_hz = v->non_negative();
    }

    if (auto w = root.maybe("waveform")) {
        if (auto v = w->maybe("bandwidth_hz")) c.waveform.bandwidth = v->positive();
        if (auto v = w->maybe("sample_rate_hz")) c.waveform.sample_rate = v->positive();
        if (c.waveform.sample_rate < c.waveform.bandwidth) w->fail("sample rate below bandwidth");
    }

    if (auto ch = root.maybe("channels")) {
        for (std::size_t i = 0; i < ch->size(); ++i) c.channels.push_back(detail::parse_channel(ch->index(i)));
    }
    if (c.mode == RunMode::FullSignal && c.channels.size() != c.geometry.num_receivers())
        root.fail("full-signal mode needs one entry in \"channels\" per receiver");

    if (auto cc = root.maybe("canceller")) {
        if (auto v = cc->maybe("max_delay_taps")) c.canceller.max_delay_taps = v->count();
        if (auto v = cc->maybe("block_s")) c.canceller_block_s = v->positive();
        if (auto v = cc->maybe("regularization")) c.canceller.regularization = v->non_negative();
    }

    if (auto cf = root.maybe("caf")) {
        if (auto v = cf->maybe("window_s")) c.caf_window_s = v->positive();
        if (auto v = cf->maybe("doppler_limit_hz")) c.doppler_limit_hz = v->positive();
        if (auto v = cf->maybe("decimated_rate_hz")) c.caf_decimated_rate_hz = v->positive();
        if (auto v = cf->maybe("gamma")) c.caf.gamma = v->number();
        if (c.caf.gamma <= 1.0) cf->at("gamma").fail("gamma must exceed 1");
        if (auto v = cf->maybe("train_half_len")) c.caf.train_half_len = v->count();
        if (auto v = cf->maybe("exclude_test_cell")) c.caf.exclude_test_cell = v->boolean();
        if (auto v = cf->maybe("delay_grid")) {
            c.caf.delay_grid.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                const auto& e = v->index(i).json();
                if (!e.is_number_integer()) v->index(i).fail("expected an integer sample delay");
                c.caf.delay_grid.push_back(e.get<std::ptrdiff_t>());
            }
            if (c.caf.delay_grid.empty()) v->fail("empty delay grid");
        }
    }

    if (auto k = root.maybe("kalman")) {
        if (auto v = k->maybe("process_noise")) c.kalman.process_noise = v->positive();
        if (auto v = k->maybe("measurement_noise")) c.kalman.measurement_noise = v->positive();
        if (auto v = k->maybe("initial_variance")) c.kalman.initial_variance = v->positive();
        if (auto v = k->maybe("backward_pass")) c.kalman.backward_pass = v->boolean();
    }

    c.solver = detail::parse_solver(root.at("solver"));
    if (!root.at("solver").has("seed")) c.solver.seed = c.seed;
    else c.solver.seed = root.at("solver").at("seed").integer();

    if (auto s = root.maybe("signal_source")) {
        const std::string kind = s->at("kind").string();
        if (kind == "files") {
            c.signal_source.from_files = true;
            c.signal_source.dir = detail::resolve(base_dir, s->at("dir").string());
            if (!std::filesystem::is_directory(c.signal_source.dir))
                s->at("dir").fail("directory not found: " + c.signal_source.dir.string());
        } else if (kind != "synth") {
            s->at("kind").fail("expected \"synth\" or \"files\"");
        }
    }

    if (auto o = root.maybe("outputs")) {
        if (auto v = o->maybe("caf_map")) c.write_caf_map = v->boolean();
        if (auto v = o->maybe("svg")) c.write_svg = v->boolean();
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    const auto base = std::filesystem::absolute(path).parent_path();
    try {
        return parse_run_config(ss.str(), base);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace dopptrack
