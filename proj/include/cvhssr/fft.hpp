#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "cvhssr/tensor.hpp"

namespace cvh {

struct ComplexGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> real;
    std::vector<float> imag;

    std::size_t size() const { return real.size(); }
};

// In-place unnormalized 1D DFT. Radix-2 for powers of two, Bluestein otherwise.
// `inverse` flips the exponent sign only (no 1/n scaling).
void fft_inplace(std::span<std::complex<double>> values, bool inverse = false);

// Unnormalized forward 2D DFT of a row-major plane, computed in double.
std::vector<std::complex<double>> fft2d_plane(std::span<const float> plane, std::size_t height,
                                              std::size_t width);

// Forward 2D DFT of a single-channel tensor.
ComplexGrid fft2d(const Tensor& input);

// Inverse 2D DFT scaled by 1/(H*W); returns the real part as a single-channel tensor.
Tensor inverse_fft2d(const ComplexGrid& spectrum);

} // namespace cvh
