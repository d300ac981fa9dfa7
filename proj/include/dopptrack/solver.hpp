#pragma once

// Trajectory reconstruction from multistatic Doppler tracks.
//
// Unknowns are m = [p1, v1, ..., vK] (2 + 2K values). The residual for
// receiver j at instant k is D(p_k)_j · v_k - z(k, j) with
// p_k = p1 + step · (v1 + ... + v_{k-1}). The objective is the sum of
// squared residuals and is minimized by Levenberg-Marquardt from many
// starting points; the lowest final objective wins.
//
// The damped normal equations (J_mᵀJ_m + μI) δm = -J_mᵀ r are dense in m
// because every position depends on all earlier velocities. They are solved
// exactly in the equivalent coordinates x = [p1, ..., pK, vK], where each
// residual touches only two neighbouring blocks and the system is banded.

#include "dopptrack/geometry.hpp"

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopptrack {

/// values(k, j): smoothed Doppler of receiver j at instant k, Hz.
struct MeasurementSet {
    Eigen::MatrixXd values;
    double step = 0.05;

    std::size_t num_instants() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t num_receivers() const { return static_cast<std::size_t>(values.cols()); }

    void validate(std::size_t min_instants = 1) const {
        if (num_instants() < min_instants)
            throw std::invalid_argument("measurements: need at least " + std::to_string(min_instants) + " instants");
        if (!values.allFinite()) throw std::invalid_argument("measurements: non-finite entries");
        if (!(step > 0.0)) throw std::invalid_argument("measurements: step must be positive");
    }
};

struct Rect {
    Vec2 lo = Vec2::Zero();
    Vec2 hi = Vec2::Ones();

    double width() const { return hi.x() - lo.x(); }
    double height() const { return hi.y() - lo.y(); }
};

struct SolverConfig {
    std::size_t num_starts = 125;
    /// Starts sharing one initial location (differing in velocities).
    std::size_t candidates_per_location = 5;
    std::size_t max_iters = 200;
    Rect init_region;
    double init_velocity_scale = 1.0;
    /// Initial μ relative to the largest diagonal entry of J_mᵀJ_m.
    double damping_init = 1e-3;
    double damping_up = 10.0;
    double damping_down = 0.3;
    double convergence_tol = 1e-10;
    std::uint64_t seed = 1;
    /// Weight of Σ |v_{k+1} - v_k|² added to the minimized cost. 0 disables.
    double velocity_smoothness = 0.0;

    void validate() const {
        if (num_starts < 1) throw std::invalid_argument("solver: need at least one start");
        if (candidates_per_location < 1) throw std::invalid_argument("solver: need at least one candidate per location");
        if (max_iters < 1) throw std::invalid_argument("solver: need at least one iteration");
        if (!(init_region.width() > 0.0) || !(init_region.height() > 0.0))
            throw std::invalid_argument("solver: empty initial region");
        if (!(convergence_tol > 0.0)) throw std::invalid_argument("solver: tolerance must be positive");
        if (!(init_velocity_scale >= 0.0)) throw std::invalid_argument("solver: negative velocity scale");
        if (!(damping_init > 0.0) || !(damping_up > 1.0) || !(damping_down > 0.0 && damping_down < 1.0))
            throw std::invalid_argument("solver: bad damping schedule");
        if (!(velocity_smoothness >= 0.0)) throw std::invalid_argument("solver: negative smoothness weight");
    }
};

struct StartReport {
    double objective = std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    bool converged = false;
    Vec2 initial_position = Vec2::Zero();
    Vec2 final_position = Vec2::Zero();
    /// Minimized cost at the start and after every accepted step.
    std::vector<double> cost_history;
};

struct SolveResult {
    MotionParams best;
    double objective = std::numeric_limits<double>::infinity();
    std::size_t best_start = 0;
    std::vector<StartReport> per_start;
    Trajectory trajectory;
    /// A distinct solution (initial position > 1 m away) came within 1 % of
    /// the best objective.
    bool near_tie = false;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_dims(const MotionParams& m, const MeasurementSet& z, const ScenarioGeometry& g) {
    m.validate();
    z.validate();
    if (m.size() != z.num_instants()) throw std::invalid_argument("velocity count differs from measurement count");
    if (z.num_receivers() != g.num_receivers()) throw std::invalid_argument("receiver count mismatch");
}

inline Eigen::VectorXd pack(const MotionParams& m) {
    Eigen::VectorXd v(2 + 2 * static_cast<Eigen::Index>(m.size()));
    v.head<2>() = m.initial_position;
    for (std::size_t k = 0; k < m.size(); ++k) v.segment<2>(2 + 2 * static_cast<Eigen::Index>(k)) = m.velocities[k];
    return v;
}

inline MotionParams unpack(const Eigen::VectorXd& v, double step) {
    MotionParams m;
    m.step = step;
    m.initial_position = v.head<2>();
    const auto k_count = static_cast<std::size_t>((v.size() - 2) / 2);
    m.velocities.resize(k_count);
    for (std::size_t k = 0; k < k_count; ++k) m.velocities[k] = v.segment<2>(2 + 2 * static_cast<Eigen::Index>(k));
    return m;
}

/// Forward model and its position/velocity sensitivities at every instant.
struct Linearization {
    Eigen::VectorXd residuals;           // k·J + j
    std::vector<DopplerMatrix> d;        // ∂r_k/∂v_k
    std::vector<DopplerMatrix> grad_p;   // ∂r_k/∂p_k
};

inline Linearization linearize(const MotionParams& m, const MeasurementSet& z, const ScenarioGeometry& g,
                               bool with_derivatives) {
    const Trajectory traj = propagate(m);
    const std::size_t nj = g.num_receivers();
    Linearization lin;
    lin.residuals.resize(static_cast<Eigen::Index>(m.size() * nj));
    if (with_derivatives) {
        lin.d.resize(m.size());
        lin.grad_p.resize(m.size());
    }
    for (std::size_t k = 0; k < m.size(); ++k) {
        const DopplerMatrix dk = doppler_matrix(g, traj.positions[k]);
        const Eigen::VectorXd f = dk * m.velocities[k];
        for (std::size_t j = 0; j < nj; ++j)
            lin.residuals(static_cast<Eigen::Index>(k * nj + j)) =
                f(static_cast<Eigen::Index>(j)) - z.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
        if (with_derivatives) {
            DopplerMatrix gp(nj, 2);
            for (std::size_t j = 0; j < nj; ++j)
                gp.row(static_cast<Eigen::Index>(j)) =
                    doppler_position_gradient(g, j, traj.positions[k], m.velocities[k]).transpose();
            lin.d[k] = dk;
            lin.grad_p[k] = std::move(gp);
        }
    }
    return lin;
}

inline double smoothness_cost(const MotionParams& m) {
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < m.size(); ++k) acc += (m.velocities[k + 1] - m.velocities[k]).squaredNorm();
    return acc;
}

using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// m-space → x-space inverse map: m = S·x with x = [p1..pK, vK].
inline SparseMat x_to_m(std::size_t k_count, double step) {
    const auto n = static_cast<Eigen::Index>(2 * (k_count + 1));
    std::vector<Triplet> t;
    for (int c = 0; c < 2; ++c) t.emplace_back(c, c, 1.0);
    for (std::size_t kappa = 1; kappa < k_count; ++kappa) {
        const auto row = static_cast<Eigen::Index>(2 * kappa);
        for (int c = 0; c < 2; ++c) {
            t.emplace_back(row + c, row + c, 1.0 / step);
            t.emplace_back(row + c, row - 2 + c, -1.0 / step);
        }
    }
    const auto last = static_cast<Eigen::Index>(2 * k_count);
    for (int c = 0; c < 2; ++c) t.emplace_back(last + c, last + c, 1.0);
    SparseMat s(n, n);
    s.setFromTriplets(t.begin(), t.end());
    return s;
}

/// Residual Jacobian in x coordinates; block k touches x-blocks k and k+1.
inline SparseMat jacobian_x(const Linearization& lin, std::size_t nj, double step) {
    const std::size_t k_count = lin.d.size();
    std::vector<Triplet> t;
    t.reserve(k_count * nj * 4);
    for (std::size_t k = 0; k < k_count; ++k) {
        DopplerMatrix left = lin.grad_p[k];
        DopplerMatrix right = lin.d[k];
        if (k + 1 < k_count) {
            left -= lin.d[k] / step;
            right /= step;
        }
        for (std::size_t j = 0; j < nj; ++j) {
            const auto row = static_cast<Eigen::Index>(k * nj + j);
            for (int c = 0; c < 2; ++c) {
                t.emplace_back(row, static_cast<Eigen::Index>(2 * k) + c, left(static_cast<Eigen::Index>(j), c));
                t.emplace_back(row, static_cast<Eigen::Index>(2 * k + 2) + c, right(static_cast<Eigen::Index>(j), c));
            }
        }
    }
    SparseMat jx(static_cast<Eigen::Index>(k_count * nj), static_cast<Eigen::Index>(2 * (k_count + 1)));
    jx.setFromTriplets(t.begin(), t.end());
    return jx;
}

/// Quadratic form of the velocity-difference penalty in m coordinates.
inline SparseMat smoothness_form(std::size_t k_count) {
    const auto n = static_cast<Eigen::Index>(2 * (k_count + 1));
    std::vector<Triplet> t;
    for (std::size_t k = 1; k < k_count; ++k) {
        const auto a = static_cast<Eigen::Index>(2 * k);
        const auto b = a + 2;
        for (int c = 0; c < 2; ++c) {
            t.emplace_back(a + c, a + c, 1.0);
            t.emplace_back(b + c, b + c, 1.0);
            t.emplace_back(a + c, b + c, -1.0);
            t.emplace_back(b + c, a + c, -1.0);
        }
    }
    SparseMat p(n, n);
    p.setFromTriplets(t.begin(), t.end());
    return p;
}

/// Largest diagonal entry of J_mᵀJ_m, from suffix sums of |∂r_k/∂p_k|².
inline double max_normal_diagonal(const Linearization& lin, double step) {
    const std::size_t k_count = lin.d.size();
    Eigen::Array2d suffix = Eigen::Array2d::Zero();
    double best = 0.0;
    for (std::size_t k = k_count; k-- > 0;) {
        const Eigen::Array2d dcol = lin.d[k].colwise().squaredNorm().transpose().array();
        best = std::max(best, (dcol + step * step * suffix).maxCoeff());
        suffix += lin.grad_p[k].colwise().squaredNorm().transpose().array();
    }
    return std::max(best, suffix.maxCoeff());
}

}  // namespace detail

inline Eigen::VectorXd residuals(const MotionParams& m, const MeasurementSet& z, const ScenarioGeometry& g) {
    detail::check_dims(m, z, g);
    return detail::linearize(m, z, g, false).residuals;
}

inline double objective(const MotionParams& m, const MeasurementSet& z, const ScenarioGeometry& g) {
    return residuals(m, z, g).squaredNorm();
}

/// Dense residual Jacobian, rows k·J + j, columns [p1x, p1y, v1x, v1y, ...].
inline Eigen::MatrixXd jacobian(const MotionParams& m, const MeasurementSet& z, const ScenarioGeometry& g) {
    detail::check_dims(m, z, g);
    const auto lin = detail::linearize(m, z, g, true);
    const std::size_t nj = g.num_receivers();
    const std::size_t k_count = m.size();
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k_count * nj),
                                                static_cast<Eigen::Index>(2 + 2 * k_count));
    for (std::size_t k = 0; k < k_count; ++k) {
        auto block = [&](std::size_t col) {
            return jac.block(static_cast<Eigen::Index>(k * nj), static_cast<Eigen::Index>(col),
                             static_cast<Eigen::Index>(nj), 2);
        };
        block(0) = lin.grad_p[k];
        for (std::size_t kappa = 0; kappa < k; ++kappa) block(2 + 2 * kappa) = m.step * lin.grad_p[k];
        block(2 + 2 * k) = lin.d[k];
    }
    return jac;
}

/// Solution δm of (J_mᵀJ_m + w·P + μI) δm = -(J_mᵀ r + w·P·m), computed in the
/// banded x coordinates. P is the velocity-difference penalty form.
inline Eigen::VectorXd damped_step(const MotionParams& m, const MeasurementSet& z, const ScenarioGeometry& g,
                                   double mu, double smoothness = 0.0) {
    detail::check_dims(m, z, g);
    const auto lin = detail::linearize(m, z, g, true);
    const std::size_t k_count = m.size();
    const auto jx = detail::jacobian_x(lin, g.num_receivers(), m.step);
    const auto s = detail::x_to_m(k_count, m.step);

    detail::SparseMat h(s.rows(), s.cols());
    h.setIdentity();
    h *= mu;
    Eigen::VectorXd rhs = -(jx.transpose() * lin.residuals);
    if (smoothness > 0.0) {
        const auto p = detail::smoothness_form(k_count);
        h += smoothness * p;
        rhs -= s.transpose() * (smoothness * (p * detail::pack(m)));
    }
    const detail::SparseMat lhs = detail::SparseMat(jx.transpose() * jx) + detail::SparseMat(s.transpose() * h * s);

    Eigen::SimplicialLDLT<detail::SparseMat> ldlt(lhs);
    if (ldlt.info() != Eigen::Success) throw SolverError("damped normal equations are not positive definite");
    const Eigen::VectorXd dx = ldlt.solve(rhs);
    return s * dx;
}

/// Dense reference for damped_step (no penalty); O(K³).
inline Eigen::VectorXd damped_step_dense(const MotionParams& m, const MeasurementSet& z, const ScenarioGeometry& g,
                                         double mu) {
    const Eigen::MatrixXd jac = jacobian(m, z, g);
    const Eigen::VectorXd r = residuals(m, z, g);
    Eigen::MatrixXd a = jac.transpose() * jac;
    a.diagonal().array() += mu;
    return a.ldlt().solve(-(jac.transpose() * r));
}

namespace detail {

inline double total_cost(const MotionParams& m, const MeasurementSet& z, const ScenarioGeometry& g, double w) {
    try {
        const double c = linearize(m, z, g, false).residuals.squaredNorm() + (w > 0.0 ? w * smoothness_cost(m) : 0.0);
        return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
    } catch (const GeometryError&) {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace detail

/// One Levenberg-Marquardt run from `m`, which is updated in place.
inline StartReport refine(MotionParams& m, const MeasurementSet& z, const ScenarioGeometry& g,
                          const SolverConfig& cfg) {
    detail::check_dims(m, z, g);
    StartReport rep;
    rep.initial_position = m.initial_position;
    const double w = cfg.velocity_smoothness;

    double cost = detail::total_cost(m, z, g, w);
    if (!std::isfinite(cost)) {
        rep.final_position = m.initial_position;
        return rep;
    }

    rep.cost_history.push_back(cost);
    double mu = 0.0;
    double mu_ceiling = 0.0;
    bool converged = cost <= std::numeric_limits<double>::min();
    std::size_t it = 0;
    while (!converged && it < cfg.max_iters) {
        ++it;
        if (mu == 0.0) {
            const double scale = detail::max_normal_diagonal(detail::linearize(m, z, g, true), m.step);
            mu = cfg.damping_init * std::max(scale, std::numeric_limits<double>::min());
            mu_ceiling = 1e16 * std::max(scale, 1.0);
        }
        Eigen::VectorXd delta;
        try {
            delta = damped_step(m, z, g, mu, w);
        } catch (const GeometryError&) {
            break;
        } catch (const SolverError&) {
            mu *= cfg.damping_up;
            continue;
        }
        MotionParams trial = detail::unpack(detail::pack(m) + delta, m.step);
        const double trial_cost = detail::total_cost(trial, z, g, w);
        if (trial_cost < cost) {
            const double rel = (cost - trial_cost) / cost;
            m = std::move(trial);
            cost = trial_cost;
            rep.cost_history.push_back(cost);
            mu *= cfg.damping_down;
            if (rel < cfg.convergence_tol || cost <= std::numeric_limits<double>::min()) converged = true;
        } else {
            mu *= cfg.damping_up;
            // No descent direction left at any damping: a minimum to working precision.
            if (mu > mu_ceiling) converged = true;
        }
    }
    rep.iterations = it;
    rep.converged = converged;
    rep.final_position = m.initial_position;
    rep.objective = detail::total_cost(m, z, g, 0.0);
    return rep;
}

/// Initial guess for start `s`: a stratified location over the initial
/// region (shared by `candidates_per_location` consecutive starts) and
/// zero-mean Gaussian velocities.
inline MotionParams initial_guess(std::size_t s, std::size_t k_count, double step, const SolverConfig& cfg) {
    const std::size_t locations = (cfg.num_starts + cfg.candidates_per_location - 1) / cfg.candidates_per_location;
    const double aspect = cfg.init_region.width() / cfg.init_region.height();
    const std::size_t nx = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(locations) * aspect))));
    const std::size_t ny = (locations + nx - 1) / nx;
    const std::size_t loc = s / cfg.candidates_per_location;
    const std::size_t ix = loc % nx;
    const std::size_t iy = loc / nx;

    std::seed_seq loc_seq{cfg.seed, std::uint64_t{0x10c}, static_cast<std::uint64_t>(loc)};
    std::mt19937_64 loc_rng(loc_seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double jx = unit(loc_rng);
    const double jy = unit(loc_rng);

    MotionParams m;
    m.step = step;
    m.initial_position = Vec2(cfg.init_region.lo.x() + (static_cast<double>(ix) + jx) * cfg.init_region.width() / static_cast<double>(nx),
                              cfg.init_region.lo.y() + (static_cast<double>(iy) + jy) * cfg.init_region.height() / static_cast<double>(ny));

    std::seed_seq vel_seq{cfg.seed, std::uint64_t{0x7e1}, static_cast<std::uint64_t>(s)};
    std::mt19937_64 vel_rng(vel_seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    m.velocities.resize(k_count);
    for (auto& v : m.velocities) {
        const double vx = normal(vel_rng);
        const double vy = normal(vel_rng);
        v = cfg.init_velocity_scale * Vec2(vx, vy);
    }
    return m;
}

inline SolveResult solve(const MeasurementSet& z, const ScenarioGeometry& g, const SolverConfig& cfg) {
    cfg.validate();
    g.validate();
    z.validate(2);
    if (z.num_receivers() != g.num_receivers()) throw std::invalid_argument("receiver count mismatch");

    SolveResult res;
    res.per_start.reserve(cfg.num_starts);
    double best_total = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < cfg.num_starts; ++s) {
        MotionParams m = initial_guess(s, z.num_instants(), z.step, cfg);
        StartReport rep = refine(m, z, g, cfg);
        const double total = rep.objective + cfg.velocity_smoothness * detail::smoothness_cost(m);
        if (std::isfinite(total) && total < best_total) {
            best_total = total;
            res.best = m;
            res.best_start = s;
            res.objective = rep.objective;
        }
        res.per_start.push_back(rep);
    }
    if (!std::isfinite(best_total)) throw SolverError("no start produced a finite objective");

    const Vec2 best_p = res.per_start[res.best_start].final_position;
    for (std::size_t s = 0; s < res.per_start.size(); ++s) {
        const auto& rep = res.per_start[s];
        if (s == res.best_start || !std::isfinite(rep.objective)) continue;
        if ((rep.final_position - best_p).norm() > 1.0 && rep.objective <= 1.01 * res.objective) res.near_tie = true;
    }
    res.trajectory = propagate(res.best);
    return res;
}

}  // namespace dopptrack
