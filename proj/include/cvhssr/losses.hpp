#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "cvhssr/model.hpp"
#include "cvhssr/tensor.hpp"

namespace cvh {

struct LossConfig {
    double lambda = 0.01;
    double epsilon = 1e-3;

    void validate() const;
};

// Mean squared error over every element of both views.
double mse_loss(const StereoPair& sr, const StereoPair& hr);

// Mean over the six (view, channel) planes of sqrt(D + eps^2), where D is the
// summed squared magnitude of the difference of the unnormalized 2D spectra.
double freq_charbonnier_loss(const StereoPair& sr, const StereoPair& hr, double epsilon = 1e-3);

double total_loss(const StereoPair& sr, const StereoPair& hr, const LossConfig& config = {});

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();
// Infinite PSNR is replaced by this value wherever values are averaged.
inline constexpr double kPsnrCap = 100.0;

// Data range 1.0. Identical inputs give kInfinitePsnr.
double psnr(const Tensor& a, const Tensor& b);
double capped_psnr(double value);

struct SsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

// Mean SSIM over all fully-contained Gaussian windows, averaged over channels.
// Throws ShapeError when either spatial dimension is smaller than the window.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options = {});

struct ImageMetrics {
    std::string scene;
    double psnr_left = 0.0;
    double ssim_left = 0.0;
    double psnr_right = 0.0;
    double ssim_right = 0.0;
    double psnr_pair = 0.0; // mean of the capped per-view values
    double ssim_pair = 0.0;
};

struct EvalReport {
    std::vector<ImageMetrics> images;
    // Arithmetic means over images; PSNR values capped before averaging.
    double mean_psnr_left = 0.0;
    double mean_ssim_left = 0.0;
    double mean_psnr_pair = 0.0;
    double mean_ssim_pair = 0.0;
};

ImageMetrics stereo_eval(const StereoPair& sr, const StereoPair& hr, std::string scene = {});
EvalReport aggregate(std::vector<ImageMetrics> images);

} // namespace cvh
