#pragma once

// Block least-squares clutter cancellation. Each block of the surveillance
// buffer is projected off the span of the reference delayed by
// 0..max_delay_taps-1 samples, which removes the direct path and static
// multipath (all zero-Doppler) while leaving Doppler-shifted echoes.

#include "dopptrack/signal_synth.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dopptrack {

struct CancellerConfig {
    std::size_t max_delay_taps = 8;
    std::size_t block_length = 0;
    /// Tikhonov weight relative to trace(XᴴX)/taps; 0 gives the exact projection.
    double regularization = 1e-9;

    void validate() const {
        if (max_delay_taps < 1) throw std::invalid_argument("canceller: need at least one tap");
        if (max_delay_taps >= block_length)
            throw std::invalid_argument("canceller: taps must be fewer than the block length");
        if (!(regularization >= 0.0)) throw std::invalid_argument("canceller: negative regularization");
    }
};

class CancellationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

/// Reference delayed by 0..taps-1 samples over [start, start+len). Samples
/// before the buffer start are zero.
inline Eigen::MatrixXcd delayed_reference_columns(const IqBuffer& ref, std::size_t start, std::size_t len,
                                                  std::size_t taps) {
    Eigen::MatrixXcd x(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(taps));
    for (std::size_t d = 0; d < taps; ++d) {
        for (std::size_t n = 0; n < len; ++n) {
            const std::size_t idx = start + n;
            x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)) =
                idx >= d ? ref.samples[idx - d] : Complex{};
        }
    }
    return x;
}

}  // namespace detail

/// Start offsets of the cancellation blocks; the last block absorbs any
/// remainder shorter than a full block.
inline std::vector<std::size_t> block_starts(std::size_t length, std::size_t block_length) {
    std::vector<std::size_t> starts;
    const std::size_t count = length / block_length;
    for (std::size_t b = 0; b < count; ++b) starts.push_back(b * block_length);
    return starts;
}

inline IqBuffer cancel(const IqBuffer& surv, const IqBuffer& ref, const CancellerConfig& cfg) {
    cfg.validate();
    surv.validate();
    ref.validate();
    if (surv.size() != ref.size()) throw std::invalid_argument("canceller: buffer length mismatch");
    if (surv.size() < cfg.block_length) throw std::invalid_argument("canceller: buffer shorter than one block");

    IqBuffer out{std::vector<Complex>(surv.size()), surv.sample_rate, surv.start_time};
    const auto starts = block_starts(surv.size(), cfg.block_length);
    const auto taps = static_cast<Eigen::Index>(cfg.max_delay_taps);

    for (std::size_t b = 0; b < starts.size(); ++b) {
        const std::size_t start = starts[b];
        const std::size_t end = b + 1 < starts.size() ? starts[b + 1] : surv.size();
        const std::size_t len = end - start;

        const Eigen::MatrixXcd x = detail::delayed_reference_columns(ref, start, len, cfg.max_delay_taps);
        const Eigen::Map<const Eigen::VectorXcd> y(surv.samples.data() + start, static_cast<Eigen::Index>(len));

        Eigen::MatrixXcd gram = x.adjoint() * x;
        if (cfg.regularization > 0.0) {
            const double eps = cfg.regularization * gram.trace().real() / static_cast<double>(taps);
            gram.diagonal().array() += eps;
        }
        const Eigen::LLT<Eigen::MatrixXcd> llt(gram);
        if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14))
            throw CancellationError("canceller: singular normal equations in block " + std::to_string(b));

        const Eigen::VectorXcd w = llt.solve(x.adjoint() * y);
        Eigen::Map<Eigen::VectorXcd>(out.samples.data() + start, static_cast<Eigen::Index>(len)) = y - x * w;
    }
    return out;
}

}  // namespace dopptrack
