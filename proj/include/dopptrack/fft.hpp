#pragma once

// Thin RAII wrapper over FFTW's complex 1-D transforms.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <vector>

namespace dopptrack {

using Complex = std::complex<double>;

namespace detail {

struct FftwPlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};

}  // namespace detail

enum class FftDirection { Forward, Inverse };

/// Unnormalized in-place DFT (FFTW sign convention: forward uses e^{-j...}).
inline void fft_inplace(std::vector<Complex>& data, FftDirection dir) {
    if (data.empty()) return;
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    const int sign = dir == FftDirection::Forward ? FFTW_FORWARD : FFTW_BACKWARD;
    std::unique_ptr<fftw_plan_s, detail::FftwPlanDeleter> plan(
        fftw_plan_dft_1d(static_cast<int>(data.size()), buf, buf, sign, FFTW_ESTIMATE));
    if (!plan) throw std::runtime_error("fftw: plan creation failed");
    fftw_execute(plan.get());
}

}  // namespace dopptrack
