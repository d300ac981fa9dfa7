#pragma once

// Windowed cross-ambiguity function over a Doppler grid, the adaptive
// (cell-averaging) threshold and single-target peak selection.
//
// Window k (1-based) covers samples [(k-1)·hop, (k-1)·hop + window) of the
// buffers. The Doppler phase uses the absolute sample index within the
// buffer, so a window's amplitude does not depend on where it starts.
//
// With decimation D > 1 the surveillance x conj(reference) product is
// summed over runs of D samples first and each run is phased at its centre
// sample. D = 1 evaluates the ambiguity sum exactly.

#include "dopptrack/fft.hpp"
#include "dopptrack/signal_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace dopptrack {

struct DopplerGrid {
    double f_min = -250.0;
    double f_max = 250.0;
    double bin = 2.0;

    std::size_t size() const { return static_cast<std::size_t>(std::llround((f_max - f_min) / bin)) + 1; }
    double freq(std::size_t i) const { return f_min + static_cast<double>(i) * bin; }

    /// Index of the grid cell closest to f (clamped).
    std::size_t nearest(double f) const {
        const double i = std::round((f - f_min) / bin);
        if (i <= 0.0) return 0;
        return std::min(static_cast<std::size_t>(i), size() - 1);
    }
};

struct CafConfig {
    std::size_t window_samples = 1;
    std::size_t hop_samples = 1;
    DopplerGrid grid;
    std::vector<std::ptrdiff_t> delay_grid{0};
    double gamma = 1.5;
    std::size_t train_half_len = 8;
    /// Classical cell-averaging: leave the cell under test out of its own
    /// training window. Off by default.
    bool exclude_test_cell = false;
    std::size_t decimation = 1;

    /// Window and hop from durations; the Doppler bin is 1/window.
    static CafConfig from_timing(double window_s, double hop_s, double sample_rate, double doppler_limit = 250.0) {
        CafConfig c;
        c.window_samples = static_cast<std::size_t>(std::llround(window_s * sample_rate));
        c.hop_samples = static_cast<std::size_t>(std::llround(hop_s * sample_rate));
        c.grid.bin = sample_rate / static_cast<double>(c.window_samples);
        const double half = std::floor(doppler_limit / c.grid.bin) * c.grid.bin;
        c.grid.f_min = -half;
        c.grid.f_max = half;
        return c;
    }

    void validate() const {
        if (window_samples < 1) throw std::invalid_argument("caf: window must hold at least one sample");
        if (hop_samples < 1) throw std::invalid_argument("caf: hop must be at least one sample");
        if (!(grid.f_min < grid.f_max) || !(grid.bin > 0.0)) throw std::invalid_argument("caf: bad Doppler grid");
        if (delay_grid.empty()) throw std::invalid_argument("caf: empty delay grid");
        if (!(gamma > 1.0)) throw std::invalid_argument("caf: gamma must exceed 1");
        if (train_half_len < 1) throw std::invalid_argument("caf: need at least one training cell");
        if (decimation < 1 || window_samples % decimation != 0 || hop_samples % decimation != 0)
            throw std::invalid_argument("caf: decimation must divide window and hop");
    }
};

struct CafMap {
    std::vector<double> amplitudes;
    DopplerGrid grid;
    std::size_t k = 1;
    std::size_t receiver = 0;
    std::ptrdiff_t best_delay = 0;

    std::size_t peak_index() const {
        return static_cast<std::size_t>(std::max_element(amplitudes.begin(), amplitudes.end()) - amplitudes.begin());
    }
};

struct Detection {
    std::size_t k = 1;
    double doppler = 0.0;
    double amplitude = 0.0;
    bool valid = false;
};

namespace detail {

/// Sums of surv[n]·conj(ref[n - delay]) over consecutive runs of `decimation`
/// samples, starting at `first` and covering `count` samples.
inline std::vector<Complex> decimated_product(const IqBuffer& surv, const IqBuffer& ref, std::ptrdiff_t delay,
                                              std::size_t first, std::size_t count, std::size_t decimation) {
    std::vector<Complex> out(count / decimation);
    const auto ref_len = static_cast<std::ptrdiff_t>(ref.size());
    for (std::size_t m = 0; m < out.size(); ++m) {
        Complex acc{};
        const std::size_t base = first + m * decimation;
        for (std::size_t i = 0; i < decimation; ++i) {
            const std::size_t n = base + i;
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(n) - delay;
            if (r >= 0 && r < ref_len) acc += surv.samples[n] * std::conj(ref.samples[static_cast<std::size_t>(r)]);
        }
        out[m] = acc;
    }
    return out;
}

/// |Σ_m chunks[m]·exp(-j2π f (first_center + m·spacing) ts)| for every grid f.
inline void doppler_amplitudes(std::span<const Complex> chunks, double first_center, double spacing, double ts,
                               const DopplerGrid& grid, std::span<double> out) {
    constexpr std::size_t resync = 256;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double w = -2.0 * std::numbers::pi * grid.freq(i) * ts;
        const Complex rot = std::polar(1.0, w * spacing);
        Complex acc{};
        Complex ph{};
        for (std::size_t m = 0; m < chunks.size(); ++m) {
            if (m % resync == 0)
                ph = std::polar(1.0, w * (first_center + static_cast<double>(m) * spacing));
            acc += chunks[m] * ph;
            ph *= rot;
        }
        out[i] = std::abs(acc);
    }
}

inline void check_window(const IqBuffer& surv, const IqBuffer& ref, std::size_t k, const CafConfig& cfg) {
    surv.validate();
    ref.validate();
    if (surv.size() != ref.size()) throw std::invalid_argument("caf: buffer length mismatch");
    if (k < 1) throw std::out_of_range("caf: detection index is 1-based");
    const std::size_t start = (k - 1) * cfg.hop_samples;
    if (start + cfg.window_samples > surv.size()) throw std::out_of_range("caf: window beyond buffer end");
}

/// Combines per-delay amplitude rows into a map: max over delays per bin;
/// best_delay is the delay that wins at the global peak.
inline CafMap combine_delays(const std::vector<std::vector<double>>& per_delay, const CafConfig& cfg,
                             std::size_t k, std::size_t receiver) {
    CafMap map;
    map.grid = cfg.grid;
    map.k = k;
    map.receiver = receiver;
    map.amplitudes = per_delay.front();
    std::vector<std::size_t> winner(map.amplitudes.size(), 0);
    for (std::size_t d = 1; d < per_delay.size(); ++d)
        for (std::size_t i = 0; i < map.amplitudes.size(); ++i)
            if (per_delay[d][i] > map.amplitudes[i]) {
                map.amplitudes[i] = per_delay[d][i];
                winner[i] = d;
            }
    map.best_delay = cfg.delay_grid[winner[map.peak_index()]];
    return map;
}

}  // namespace detail

inline std::size_t available_windows(std::size_t buffer_len, const CafConfig& cfg) {
    if (buffer_len < cfg.window_samples) return 0;
    return (buffer_len - cfg.window_samples) / cfg.hop_samples + 1;
}

/// Direct evaluation of one window.
inline CafMap caf_window(const IqBuffer& surv, const IqBuffer& ref, std::size_t k, const CafConfig& cfg,
                         std::size_t receiver = 0) {
    cfg.validate();
    detail::check_window(surv, ref, k, cfg);
    const std::size_t start = (k - 1) * cfg.hop_samples;
    const double first_center = static_cast<double>(start) + 0.5 * static_cast<double>(cfg.decimation - 1);

    std::vector<std::vector<double>> per_delay;
    for (const auto delay : cfg.delay_grid) {
        const auto chunks = detail::decimated_product(surv, ref, delay, start, cfg.window_samples, cfg.decimation);
        std::vector<double> amp(cfg.grid.size());
        detail::doppler_amplitudes(chunks, first_center, static_cast<double>(cfg.decimation),
                                   surv.sample_period(), cfg.grid, amp);
        per_delay.push_back(std::move(amp));
    }
    return detail::combine_delays(per_delay, cfg, k, receiver);
}

/// Same quantity as caf_window for a zero-only delay grid, evaluated with one
/// DFT of the window. Requires the grid bin to equal 1/(window·Ts) and the
/// grid to sit on integer multiples of the bin.
inline CafMap caf_window_fft(const IqBuffer& surv, const IqBuffer& ref, std::size_t k, const CafConfig& cfg,
                             std::size_t receiver = 0) {
    cfg.validate();
    detail::check_window(surv, ref, k, cfg);
    if (cfg.decimation != 1 || cfg.delay_grid.size() != 1 || cfg.delay_grid[0] != 0)
        throw std::invalid_argument("caf fft: needs decimation 1 and delay grid {0}");
    const double n = static_cast<double>(cfg.window_samples);
    if (std::abs(cfg.grid.bin * n * surv.sample_period() - 1.0) > 1e-9)
        throw std::invalid_argument("caf fft: grid bin must equal the window's DFT resolution");
    const double m0 = cfg.grid.f_min / cfg.grid.bin;
    if (std::abs(m0 - std::round(m0)) > 1e-9) throw std::invalid_argument("caf fft: grid is off the DFT bins");
    if (std::max(std::abs(cfg.grid.f_min), std::abs(cfg.grid.f_max)) >= 0.5 * surv.sample_rate)
        throw std::invalid_argument("caf fft: grid exceeds Nyquist");

    const std::size_t start = (k - 1) * cfg.hop_samples;
    std::vector<Complex> x(cfg.window_samples);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = surv.samples[start + i] * std::conj(ref.samples[start + i]);
    fft_inplace(x, FftDirection::Forward);

    CafMap map;
    map.grid = cfg.grid;
    map.k = k;
    map.receiver = receiver;
    map.amplitudes.resize(cfg.grid.size());
    const auto len = static_cast<long long>(cfg.window_samples);
    for (std::size_t i = 0; i < map.amplitudes.size(); ++i) {
        long long m = std::llround(m0) + static_cast<long long>(i);
        m %= len;
        if (m < 0) m += len;
        map.amplitudes[i] = std::abs(x[static_cast<std::size_t>(m)]);
    }
    return map;
}

/// Maps for windows k = 1..count. The decimated product is formed once for
/// the whole buffer, so results equal caf_window() window by window.
inline std::vector<CafMap> caf_series(const IqBuffer& surv, const IqBuffer& ref, std::size_t count,
                                      const CafConfig& cfg, std::size_t receiver = 0) {
    cfg.validate();
    surv.validate();
    ref.validate();
    if (surv.size() != ref.size()) throw std::invalid_argument("caf: buffer length mismatch");
    if (count > available_windows(surv.size(), cfg))
        throw std::out_of_range("caf: buffer too short for the requested number of windows");
    if (count == 0) return {};

    const std::size_t span_len = (count - 1) * cfg.hop_samples + cfg.window_samples;
    const std::size_t per_window = cfg.window_samples / cfg.decimation;
    const std::size_t per_hop = cfg.hop_samples / cfg.decimation;

    std::vector<std::vector<Complex>> products;
    for (const auto delay : cfg.delay_grid)
        products.push_back(detail::decimated_product(surv, ref, delay, 0, span_len, cfg.decimation));

    std::vector<CafMap> maps;
    maps.reserve(count);
    for (std::size_t k = 1; k <= count; ++k) {
        const std::size_t start = (k - 1) * cfg.hop_samples;
        const double first_center = static_cast<double>(start) + 0.5 * static_cast<double>(cfg.decimation - 1);
        std::vector<std::vector<double>> per_delay;
        for (const auto& prod : products) {
            std::vector<double> amp(cfg.grid.size());
            detail::doppler_amplitudes(std::span<const Complex>(prod).subspan((k - 1) * per_hop, per_window),
                                       first_center, static_cast<double>(cfg.decimation), surv.sample_period(),
                                       cfg.grid, amp);
            per_delay.push_back(std::move(amp));
        }
        maps.push_back(detail::combine_delays(per_delay, cfg, k, receiver));
    }
    return maps;
}

/// Cell-averaging threshold: gamma times the mean amplitude over the
/// 2C+1 cells centred on each bin. Near the grid edges the window is
/// truncated and the mean taken over the cells that exist.
inline std::vector<double> cfar_threshold(const CafMap& map, const CafConfig& cfg) {
    const std::size_t n = map.amplitudes.size();
    const std::size_t c = cfg.train_half_len;
    if (n <= 2 * c) throw std::invalid_argument("cfar: grid shorter than the training window");

    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + map.amplitudes[i];

    std::vector<double> beta(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= c ? i - c : 0;
        const std::size_t hi = std::min(n - 1, i + c);
        double sum = prefix[hi + 1] - prefix[lo];
        double cells = static_cast<double>(hi - lo + 1);
        if (cfg.exclude_test_cell) {
            sum -= map.amplitudes[i];
            cells -= 1.0;
        }
        beta[i] = cfg.gamma * sum / cells;
    }
    return beta;
}

/// Strongest bin among those at or above threshold; ties go to the lower
/// frequency. valid = false when nothing passes. A zero-amplitude bin never
/// passes, even against a zero threshold.
inline Detection detect(const CafMap& map, const CafConfig& cfg) {
    const auto beta = cfar_threshold(map, cfg);
    Detection det;
    det.k = map.k;
    std::size_t best = map.amplitudes.size();
    for (std::size_t i = 0; i < map.amplitudes.size(); ++i) {
        if (map.amplitudes[i] < beta[i] || !(map.amplitudes[i] > 0.0)) continue;
        if (best == map.amplitudes.size() || map.amplitudes[i] > map.amplitudes[best]) best = i;
    }
    if (best == map.amplitudes.size()) {
        det.amplitude = map.amplitudes.empty() ? 0.0 : map.amplitudes[map.peak_index()];
        return det;
    }
    det.valid = true;
    det.doppler = map.grid.freq(best);
    det.amplitude = map.amplitudes[best];
    return det;
}

}  // namespace dopptrack
