#pragma once

// Ground-truth flight paths: polylines flown at constant speed and the
// parametric V, L and U shapes used for desk experiments.

#include "dopptrack/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopptrack {

enum class Shape { V, L, U };

inline Shape parse_shape(const std::string& s) {
    if (s == "V" || s == "v") return Shape::V;
    if (s == "L" || s == "l") return Shape::L;
    if (s == "U" || s == "u") return Shape::U;
    throw std::invalid_argument("unknown trajectory shape '" + s + "' (expected V, L or U)");
}

/// Waypoints of a shape spanning [origin, origin + (width, height)], flown
/// starting from the top-left corner.
inline std::vector<Vec2> shape_waypoints(Shape shape, const Vec2& origin, double width, double height) {
    if (!(width > 0.0) || !(height > 0.0)) throw std::invalid_argument("shape: width and height must be positive");
    switch (shape) {
    case Shape::V:
        return {origin + Vec2(0.0, height), origin + Vec2(0.5 * width, 0.0), origin + Vec2(width, height)};
    case Shape::L:
        return {origin + Vec2(0.0, height), origin, origin + Vec2(width, 0.0)};
    case Shape::U:
        return {origin + Vec2(0.0, height), origin, origin + Vec2(width, 0.0), origin + Vec2(width, height)};
    }
    throw std::invalid_argument("shape: unhandled shape");
}

inline double polyline_length(const std::vector<Vec2>& wps) {
    double len = 0.0;
    for (std::size_t i = 1; i < wps.size(); ++i) len += (wps[i] - wps[i - 1]).norm();
    return len;
}

/// Point at arc length s along the polyline (clamped to its ends).
inline Vec2 point_at(const std::vector<Vec2>& wps, double s) {
    if (s <= 0.0) return wps.front();
    for (std::size_t i = 1; i < wps.size(); ++i) {
        const double seg = (wps[i] - wps[i - 1]).norm();
        if (s <= seg && seg > 0.0) return wps[i - 1] + (wps[i] - wps[i - 1]) * (s / seg);
        s -= seg;
    }
    return wps.back();
}

/// Motion sampled every `step` along the polyline. Without an explicit speed
/// the whole polyline is covered in `count` instants; with one, the drone
/// hovers at the last waypoint once it gets there.
inline MotionParams motion_from_waypoints(const std::vector<Vec2>& wps, std::size_t count, double step,
                                          std::optional<double> speed = std::nullopt) {
    if (wps.size() < 2) throw std::invalid_argument("waypoints: need at least two");
    if (count < 2) throw std::invalid_argument("waypoints: need at least two instants");
    if (!(step > 0.0)) throw std::invalid_argument("waypoints: step must be positive");
    const double total = polyline_length(wps);
    if (!(total > 0.0)) throw std::invalid_argument("waypoints: zero-length path");
    const double v = speed ? *speed : total / (static_cast<double>(count - 1) * step);
    if (!(v > 0.0)) throw std::invalid_argument("waypoints: speed must be positive");

    std::vector<Vec2> pos(count);
    for (std::size_t k = 0; k < count; ++k) pos[k] = point_at(wps, std::min(total, v * static_cast<double>(k) * step));

    MotionParams m;
    m.step = step;
    m.initial_position = pos.front();
    m.velocities.resize(count);
    for (std::size_t k = 0; k + 1 < count; ++k) m.velocities[k] = (pos[k + 1] - pos[k]) / step;
    m.velocities.back() = m.velocities[count - 2];
    return m;
}

}  // namespace dopptrack
