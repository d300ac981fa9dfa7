#pragma once

#include "dopptrack/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dopptrack {

struct CdfPoint {
    double error = 0.0;
    double probability = 0.0;
};

struct ErrorReport {
    /// Per-instant Euclidean position errors, meters, in instant order.
    std::vector<double> errors;
    double p50 = 0.0;
    double p90 = 0.0;
    double max = 0.0;
    /// Empirical CDF: starts at (min error, 0), one point per sample, ends at probability 1.
    std::vector<CdfPoint> cdf;
    /// RMS of solved-model Doppler minus solver input, per receiver, Hz.
    std::vector<double> doppler_rmse;
};

/// Percentile of sorted samples by linear interpolation between order
/// statistics at rank (n-1)·p.
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("percentile outside [0, 1]");
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::vector<CdfPoint> empirical_cdf(std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    std::vector<CdfPoint> cdf;
    if (samples.empty()) return cdf;
    cdf.reserve(samples.size() + 1);
    cdf.push_back({samples.front(), 0.0});
    const double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) cdf.push_back({samples[i], static_cast<double>(i + 1) / n});
    return cdf;
}

inline ErrorReport report_from_errors(std::vector<double> errors) {
    ErrorReport rep;
    rep.errors = std::move(errors);
    std::vector<double> sorted = rep.errors;
    std::sort(sorted.begin(), sorted.end());
    rep.p50 = percentile_sorted(sorted, 0.5);
    rep.p90 = percentile_sorted(sorted, 0.9);
    rep.max = sorted.back();
    rep.cdf = empirical_cdf(std::move(sorted));
    return rep;
}

inline ErrorReport score(const Trajectory& recon, const Trajectory& truth) {
    if (recon.size() != truth.size()) throw std::invalid_argument("score: trajectory lengths differ");
    if (recon.size() == 0) throw std::invalid_argument("score: empty trajectories");
    if (std::abs(recon.step - truth.step) > 1e-9 * std::max(1.0, std::abs(truth.step)))
        throw std::invalid_argument("score: trajectory steps differ");
    std::vector<double> errors(recon.size());
    for (std::size_t k = 0; k < recon.size(); ++k) errors[k] = (recon.positions[k] - truth.positions[k]).norm();
    return report_from_errors(std::move(errors));
}

inline std::vector<double> doppler_residual_rmse(const MotionParams& m, const MeasurementSet& z,
                                                 const ScenarioGeometry& g) {
    const Eigen::VectorXd r = residuals(m, z, g);
    const std::size_t nj = g.num_receivers();
    std::vector<double> out(nj, 0.0);
    for (std::size_t k = 0; k < m.size(); ++k)
        for (std::size_t j = 0; j < nj; ++j) out[j] += r(static_cast<Eigen::Index>(k * nj + j)) * r(static_cast<Eigen::Index>(k * nj + j));
    for (auto& v : out) v = std::sqrt(v / static_cast<double>(m.size()));
    return out;
}

}  // namespace dopptrack
