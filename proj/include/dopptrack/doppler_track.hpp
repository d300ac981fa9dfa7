#pragma once

// Per-receiver Doppler tracks: fill missed detections by linear
// interpolation, then smooth with a two-state (frequency, frequency rate)
// Kalman filter.

#include "dopptrack/caf.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopptrack {

struct KalmanConfig {
    /// Variance of the per-step frequency increment driven by rate noise, Hz².
    double process_noise = 1.0;
    double measurement_noise = 1.0;
    double initial_variance = 1.0;
    /// Run a Rauch-Tung-Striebel backward pass after the forward filter.
    bool backward_pass = false;

    void validate() const {
        if (!(process_noise > 0.0) || !(measurement_noise > 0.0) || !(initial_variance > 0.0))
            throw std::invalid_argument("kalman: variances must be positive");
    }
};

/// Rows are receivers, columns are detection instants.
struct DopplerTrackSet {
    Eigen::MatrixXd raw;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> valid;
    Eigen::MatrixXd interpolated;
    Eigen::MatrixXd smoothed;
    double step = 0.05;

    std::size_t num_receivers() const { return static_cast<std::size_t>(raw.rows()); }
    std::size_t num_instants() const { return static_cast<std::size_t>(raw.cols()); }
};

class TrackError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::vector<double> interpolate_misses(std::span<const double> values, const std::vector<bool>& valid) {
    if (values.size() != valid.size()) throw std::invalid_argument("interpolate: size mismatch");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < valid.size(); ++i)
        if (valid[i]) idx.push_back(i);
    if (idx.size() < 2) throw TrackError("interpolate: fewer than two valid detections");

    std::vector<double> out(values.begin(), values.end());
    for (std::size_t i = 0; i < idx.front(); ++i) out[i] = values[idx.front()];
    for (std::size_t i = idx.back() + 1; i < out.size(); ++i) out[i] = values[idx.back()];
    for (std::size_t s = 0; s + 1 < idx.size(); ++s) {
        const std::size_t a = idx[s];
        const std::size_t b = idx[s + 1];
        for (std::size_t i = a + 1; i < b; ++i) {
            const double w = static_cast<double>(i - a) / static_cast<double>(b - a);
            out[i] = (1.0 - w) * values[a] + w * values[b];
        }
    }
    return out;
}

inline std::vector<double> interpolate_misses(std::span<const Detection> dets) {
    std::vector<double> values;
    std::vector<bool> valid;
    for (const auto& d : dets) {
        values.push_back(d.doppler);
        valid.push_back(d.valid);
    }
    return interpolate_misses(values, valid);
}

inline std::vector<double> smooth(std::span<const double> track, double step, const KalmanConfig& cfg) {
    cfg.validate();
    if (!(step > 0.0)) throw std::invalid_argument("kalman: step must be positive");
    const std::size_t n = track.size();
    if (n == 0) return {};
    for (double v : track)
        if (!std::isfinite(v)) throw std::invalid_argument("kalman: track has gaps or non-finite values");

    using Mat2 = Eigen::Matrix2d;
    using Vec = Eigen::Vector2d;
    Mat2 f;
    f << 1.0, step, 0.0, 1.0;
    // Rate noise with variance process_noise/step² per step; g = [step/2, 1].
    const Vec g(0.5 * step, 1.0);
    const Mat2 q = g * g.transpose() * (cfg.process_noise / (step * step));
    const double r = cfg.measurement_noise;

    std::vector<Vec> x_post(n), x_prior(n);
    std::vector<Mat2> p_post(n), p_prior(n);

    Vec x(track[0], n > 1 ? (track[1] - track[0]) / step : 0.0);
    Mat2 p = Mat2::Zero();
    p(0, 0) = cfg.initial_variance;
    p(1, 1) = 2.0 * cfg.initial_variance / (step * step);
    x_prior[0] = x;
    p_prior[0] = p;
    x_post[0] = x;
    p_post[0] = p;

    for (std::size_t k = 1; k < n; ++k) {
        x = f * x;
        p = f * p * f.transpose() + q;
        x_prior[k] = x;
        p_prior[k] = p;
        const double s = p(0, 0) + r;
        const Vec gain = p.col(0) / s;
        x += gain * (track[k] - x(0));
        p = (Mat2::Identity() - gain * Eigen::RowVector2d(1.0, 0.0)) * p;
        x_post[k] = x;
        p_post[k] = p;
    }

    if (cfg.backward_pass) {
        for (std::size_t k = n - 1; k-- > 0;) {
            const Mat2 c = p_post[k] * f.transpose() * p_prior[k + 1].inverse();
            x_post[k] += c * (x_post[k + 1] - x_prior[k + 1]);
            p_post[k] += c * (p_post[k + 1] - p_prior[k + 1]) * c.transpose();
        }
    }

    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = x_post[k](0);
    return out;
}

/// Builds the full track set from per-receiver detection sequences of equal
/// length.
inline DopplerTrackSet build_tracks(const std::vector<std::vector<Detection>>& detections, double step,
                                    const KalmanConfig& cfg) {
    if (detections.empty()) throw std::invalid_argument("tracks: no receivers");
    const std::size_t k_count = detections.front().size();
    DopplerTrackSet set;
    set.step = step;
    const auto rows = static_cast<Eigen::Index>(detections.size());
    const auto cols = static_cast<Eigen::Index>(k_count);
    set.raw.resize(rows, cols);
    set.valid.resize(rows, cols);
    set.interpolated.resize(rows, cols);
    set.smoothed.resize(rows, cols);
    for (std::size_t j = 0; j < detections.size(); ++j) {
        if (detections[j].size() != k_count) throw std::invalid_argument("tracks: ragged detection sequences");
        for (std::size_t k = 0; k < k_count; ++k) {
            set.raw(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = detections[j][k].doppler;
            set.valid(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = detections[j][k].valid;
        }
        std::vector<double> filled;
        try {
            filled = interpolate_misses(detections[j]);
        } catch (const TrackError& e) {
            throw TrackError("receiver " + std::to_string(j) + ": " + e.what());
        }
        const auto sm = smooth(filled, step, cfg);
        for (std::size_t k = 0; k < k_count; ++k) {
            set.interpolated(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = filled[k];
            set.smoothed(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = sm[k];
        }
    }
    return set;
}

}  // namespace dopptrack
