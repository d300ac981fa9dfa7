#pragma once

// Static multistatic geometry, piecewise-constant-velocity motion model and
// the bistatic Doppler forward model shared by the simulator and the solver.
//
// Units everywhere: meters, seconds, Hz, m/s. The plane is 2-D; station and
// target heights are ignored.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopptrack {

using Vec2 = Eigen::Vector2d;

/// Rows are receivers, columns are (vx, vy). Units: Hz per m/s.
using DopplerMatrix = Eigen::Matrix<double, Eigen::Dynamic, 2>;

inline constexpr double kSpeedOfLight = 299792458.0;

/// Below this distance a station and the target are considered coincident.
inline constexpr double kDegenerateDistance = 1e-9;

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double wavelength_from_carrier(double carrier_hz) {
    if (!(carrier_hz > 0.0)) throw std::invalid_argument("carrier frequency must be positive");
    return kSpeedOfLight / carrier_hz;
}

struct ScenarioGeometry {
    std::vector<Vec2> tx_positions;
    std::vector<Vec2> rx_positions;
    /// One wavelength per illuminator.
    std::vector<double> wavelengths;
    /// pairing[j] is the illuminator observed by receiver j.
    std::vector<std::size_t> pairing;

    std::size_t num_receivers() const { return rx_positions.size(); }

    double wavelength_for(std::size_t rx) const { return wavelengths.at(pairing.at(rx)); }
    const Vec2& tx_for(std::size_t rx) const { return tx_positions.at(pairing.at(rx)); }

    void validate() const {
        if (tx_positions.empty()) throw std::invalid_argument("geometry: no illuminators");
        if (rx_positions.empty()) throw std::invalid_argument("geometry: no receivers");
        if (wavelengths.size() != tx_positions.size())
            throw std::invalid_argument("geometry: need one wavelength per illuminator");
        if (pairing.size() != rx_positions.size())
            throw std::invalid_argument("geometry: need one illuminator index per receiver");
        for (double w : wavelengths)
            if (!(w > 0.0) || !std::isfinite(w))
                throw std::invalid_argument("geometry: wavelengths must be positive");
        for (std::size_t j = 0; j < pairing.size(); ++j) {
            if (pairing[j] >= tx_positions.size())
                throw std::invalid_argument("geometry: receiver " + std::to_string(j) +
                                            " paired with unknown illuminator");
            if ((rx_positions[j] - tx_positions[pairing[j]]).norm() < kDegenerateDistance)
                throw std::invalid_argument("geometry: receiver " + std::to_string(j) +
                                            " coincides with its illuminator");
        }
    }

    /// Same geometry with every station shifted by `offset`.
    ScenarioGeometry translated(const Vec2& offset) const {
        ScenarioGeometry out = *this;
        for (auto& p : out.tx_positions) p += offset;
        for (auto& p : out.rx_positions) p += offset;
        return out;
    }
};

/// Initial position p1 plus one velocity per detection instant. Velocity k
/// holds over [(k-1)·step, k·step).
struct MotionParams {
    Vec2 initial_position = Vec2::Zero();
    std::vector<Vec2> velocities;
    double step = 0.05;

    std::size_t size() const { return velocities.size(); }

    void validate() const {
        if (velocities.empty()) throw std::invalid_argument("motion: velocity list is empty");
        if (!(step > 0.0)) throw std::invalid_argument("motion: step must be positive");
    }
};

struct Trajectory {
    std::vector<Vec2> positions;
    double step = 0.05;

    std::size_t size() const { return positions.size(); }
};

inline Trajectory propagate(const MotionParams& m) {
    m.validate();
    Trajectory out;
    out.step = m.step;
    out.positions.reserve(m.size());
    Vec2 p = m.initial_position;
    out.positions.push_back(p);
    for (std::size_t k = 1; k < m.size(); ++k) {
        p += m.velocities[k - 1] * m.step;
        out.positions.push_back(p);
    }
    return out;
}

namespace detail {

inline Vec2 unit_from(const Vec2& station, const Vec2& target, const char* what) {
    const Vec2 d = target - station;
    const double n = d.norm();
    if (!(n >= kDegenerateDistance))
        throw GeometryError(std::string("target coincides with ") + what);
    return d / n;
}

}  // namespace detail

/// Sum of the illuminator->target and receiver->target unit vectors for
/// receiver `rx`, scaled by -1/lambda. Dotting with a velocity gives Doppler.
inline Vec2 doppler_row(const ScenarioGeometry& g, std::size_t rx, const Vec2& position) {
    const Vec2 u_tx = detail::unit_from(g.tx_for(rx), position, "illuminator");
    const Vec2 u_rx = detail::unit_from(g.rx_positions.at(rx), position, "receiver");
    return -(u_tx + u_rx) / g.wavelength_for(rx);
}

inline double bistatic_doppler(const ScenarioGeometry& g, std::size_t rx, const Vec2& position,
                               const Vec2& velocity) {
    return doppler_row(g, rx, position).dot(velocity);
}

inline DopplerMatrix doppler_matrix(const ScenarioGeometry& g, const Vec2& position) {
    DopplerMatrix d(g.num_receivers(), 2);
    for (std::size_t j = 0; j < g.num_receivers(); ++j) d.row(j) = doppler_row(g, j, position).transpose();
    return d;
}

/// Gradient of bistatic_doppler(g, rx, p, v) with respect to p at fixed v.
///
/// d/dp (u·v) = (I - u uᵀ) v / |p - s| for a unit vector u = (p - s)/|p - s|.
inline Vec2 doppler_position_gradient(const ScenarioGeometry& g, std::size_t rx, const Vec2& position,
                                      const Vec2& velocity) {
    auto term = [&](const Vec2& station, const char* what) -> Vec2 {
        const Vec2 d = position - station;
        const double n = d.norm();
        if (!(n >= kDegenerateDistance)) throw GeometryError(std::string("target coincides with ") + what);
        const Vec2 u = d / n;
        return (velocity - u * u.dot(velocity)) / n;
    };
    return -(term(g.tx_for(rx), "illuminator") + term(g.rx_positions.at(rx), "receiver")) / g.wavelength_for(rx);
}

/// Illuminator->target->receiver path length for receiver `rx`.
inline double bistatic_range(const ScenarioGeometry& g, std::size_t rx, const Vec2& position) {
    return (position - g.tx_for(rx)).norm() + (position - g.rx_positions.at(rx)).norm();
}

/// Illuminator->receiver baseline length for receiver `rx`.
inline double baseline(const ScenarioGeometry& g, std::size_t rx) {
    return (g.rx_positions.at(rx) - g.tx_for(rx)).norm();
}

/// Forward-model Doppler for every receiver at every instant: result(k, j).
inline Eigen::MatrixXd forward_doppler(const ScenarioGeometry& g, const MotionParams& m) {
    const Trajectory traj = propagate(m);
    Eigen::MatrixXd z(m.size(), g.num_receivers());
    for (std::size_t k = 0; k < m.size(); ++k)
        z.row(k) = (doppler_matrix(g, traj.positions[k]) * m.velocities[k]).transpose();
    return z;
}

}  // namespace dopptrack
