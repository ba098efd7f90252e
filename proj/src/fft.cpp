#include "cvhssr/fft.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace cvh {

namespace {

using cd = std::complex<double>;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative radix-2 transform with precomputed twiddles.
class Radix2 {
public:
    explicit Radix2(std::size_t n) : n_(n), twiddle_(n / 2), reversed_(n) {
        for (std::size_t k = 0; k < n / 2; ++k) {
            twiddle_[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
        }
        std::size_t bits = 0;
        while ((std::size_t{1} << bits) < n) ++bits;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
            reversed_[i] = r;
        }
    }

    void run(std::span<cd> a, bool inverse) const {
        for (std::size_t i = 0; i < n_; ++i) {
            if (i < reversed_[i]) std::swap(a[i], a[reversed_[i]]);
        }
        for (std::size_t len = 2; len <= n_; len <<= 1) {
            const std::size_t half = len / 2;
            const std::size_t stride = n_ / len;
            for (std::size_t start = 0; start < n_; start += len) {
                for (std::size_t k = 0; k < half; ++k) {
                    cd w = twiddle_[k * stride];
                    if (inverse) w = std::conj(w);
                    const cd u = a[start + k];
                    const cd v = a[start + k + half] * w;
                    a[start + k] = u + v;
                    a[start + k + half] = u - v;
                }
            }
        }
    }

private:
    std::size_t n_;
    std::vector<cd> twiddle_;
    std::vector<std::size_t> reversed_;
};

// Length-n transform: radix-2 directly, or Bluestein's chirp-z reduction to a
// power-of-two circular convolution.
class Plan {
public:
    explicit Plan(std::size_t n) : n_(n) {
        if (is_power_of_two(n)) {
            radix_.emplace_back(n);
            return;
        }
        m_ = next_power_of_two(2 * n - 1);
        radix_.emplace_back(m_);
        chirp_.resize(n);
        const std::size_t period = 2 * n;
        for (std::size_t k = 0; k < n; ++k) {
            // k^2 mod 2n keeps the phase argument small and exact
            const std::size_t k2 = static_cast<std::size_t>((static_cast<unsigned long long>(k) * k) % period);
            chirp_[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n));
        }
        kernel_.assign(m_, cd{});
        kernel_[0] = std::conj(chirp_[0]);
        for (std::size_t k = 1; k < n; ++k) {
            kernel_[k] = std::conj(chirp_[k]);
            kernel_[m_ - k] = std::conj(chirp_[k]);
        }
        radix_.front().run(kernel_, false);
    }

    void run(std::span<cd> a, bool inverse) const {
        if (m_ == 0) {
            radix_.front().run(a, inverse);
            return;
        }
        // The inverse transform is conj(DFT(conj(x))).
        std::vector<cd> buf(m_, cd{});
        for (std::size_t k = 0; k < n_; ++k) buf[k] = (inverse ? std::conj(a[k]) : a[k]) * chirp_[k];
        radix_.front().run(buf, false);
        for (std::size_t k = 0; k < m_; ++k) buf[k] *= kernel_[k];
        radix_.front().run(buf, true);
        const double norm = 1.0 / static_cast<double>(m_);
        for (std::size_t k = 0; k < n_; ++k) {
            const cd v = buf[k] * norm * chirp_[k];
            a[k] = inverse ? std::conj(v) : v;
        }
    }

private:
    std::size_t n_;
    std::size_t m_ = 0;
    std::vector<Radix2> radix_;
    std::vector<cd> chirp_;
    std::vector<cd> kernel_;
};

void transform_2d(std::vector<cd>& grid, std::size_t height, std::size_t width, bool inverse) {
    const Plan rows(width);
    for (std::size_t y = 0; y < height; ++y) rows.run(std::span<cd>(grid.data() + y * width, width), inverse);
    const Plan cols(height);
    std::vector<cd> column(height);
    for (std::size_t x = 0; x < width; ++x) {
        for (std::size_t y = 0; y < height; ++y) column[y] = grid[y * width + x];
        cols.run(column, inverse);
        for (std::size_t y = 0; y < height; ++y) grid[y * width + x] = column[y];
    }
}

} // namespace

void fft_inplace(std::span<std::complex<double>> values, bool inverse) {
    if (values.empty()) return;
    Plan(values.size()).run(values, inverse);
}

std::vector<std::complex<double>> fft2d_plane(std::span<const float> plane, std::size_t height, std::size_t width) {
    if (plane.size() != height * width) {
        throw ShapeError("fft2d: plane length " + std::to_string(plane.size()) + " != " + std::to_string(height) + "x" +
                         std::to_string(width));
    }
    std::vector<cd> grid(plane.size());
    for (std::size_t i = 0; i < plane.size(); ++i) grid[i] = cd(plane[i], 0.0);
    transform_2d(grid, height, width, false);
    return grid;
}

ComplexGrid fft2d(const Tensor& input) {
    if (input.channels() != 1) {
        throw ShapeError("fft2d: expected a single-channel tensor, got channels " + std::to_string(input.channels()));
    }
    const auto grid = fft2d_plane(input.data(), input.height(), input.width());
    ComplexGrid out{input.height(), input.width(), std::vector<float>(grid.size()), std::vector<float>(grid.size())};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out.real[i] = static_cast<float>(grid[i].real());
        out.imag[i] = static_cast<float>(grid[i].imag());
    }
    return out;
}

Tensor inverse_fft2d(const ComplexGrid& spectrum) {
    const std::size_t n = spectrum.height * spectrum.width;
    if (spectrum.real.size() != n || spectrum.imag.size() != n) {
        throw ShapeError("inverse_fft2d: real/imag length does not match " + std::to_string(spectrum.height) + "x" +
                         std::to_string(spectrum.width));
    }
    std::vector<cd> grid(n);
    for (std::size_t i = 0; i < n; ++i) grid[i] = cd(spectrum.real[i], spectrum.imag[i]);
    transform_2d(grid, spectrum.height, spectrum.width, true);
    std::vector<float> data(n);
    const double norm = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<float>(grid[i].real() * norm);
    return Tensor(1, spectrum.height, spectrum.width, std::move(data));
}

} // namespace cvh
