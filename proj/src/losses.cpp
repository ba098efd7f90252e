#include "cvhssr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cvhssr/fft.hpp"

namespace cvh {

namespace {

void check_pair_shapes(const StereoPair& sr, const StereoPair& hr, const char* op) {
    if (!sr.left.same_shape(hr.left))
        throw ShapeError(std::string(op) + ": left shape " + sr.left.shape_string() + " vs " + hr.left.shape_string());
    if (!sr.right.same_shape(hr.right))
        throw ShapeError(std::string(op) + ": right shape " + sr.right.shape_string() + " vs " + hr.right.shape_string());
}

void check_shapes(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shape " + a.shape_string() + " vs " + b.shape_string());
}

double squared_error_sum(const Tensor& a, const Tensor& b) {
    double sum = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        sum += d * d;
    }
    return sum;
}

double spectral_distance(const Tensor& sr, const Tensor& hr, std::size_t channel) {
    const auto fs = fft2d_plane(sr.channel(channel), sr.height(), sr.width());
    const auto fh = fft2d_plane(hr.channel(channel), hr.height(), hr.width());
    double d = 0.0;
    for (std::size_t i = 0; i < fs.size(); ++i) d += std::norm(fh[i] - fs[i]);
    return d;
}

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
    std::vector<double> k(size);
    const double center = static_cast<double>(size - 1) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double x = static_cast<double>(i) - center;
        k[i] = std::exp(-(x * x) / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable "valid" filtering of a plane: (H - n + 1) x (W - n + 1).
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t H, std::size_t W,
                                 const std::vector<double>& k) {
    const std::size_t n = k.size();
    const std::size_t OW = W - n + 1;
    const std::size_t OH = H - n + 1;
    std::vector<double> rows(H * OW, 0.0);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < OW; ++x) {
            double acc = 0.0;
            for (std::size_t t = 0; t < n; ++t) acc += k[t] * plane[y * W + x + t];
            rows[y * OW + x] = acc;
        }
    std::vector<double> out(OH * OW, 0.0);
    for (std::size_t y = 0; y < OH; ++y)
        for (std::size_t x = 0; x < OW; ++x) {
            double acc = 0.0;
            for (std::size_t t = 0; t < n; ++t) acc += k[t] * rows[(y + t) * OW + x];
            out[y * OW + x] = acc;
        }
    return out;
}

} // namespace

void LossConfig::validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("loss lambda must be >= 0");
    if (!(epsilon > 0.0)) throw std::invalid_argument("loss epsilon must be > 0");
}

double mse_loss(const StereoPair& sr, const StereoPair& hr) {
    check_pair_shapes(sr, hr, "mse_loss");
    const double n = static_cast<double>(sr.left.size() + sr.right.size());
    return (squared_error_sum(sr.left, hr.left) + squared_error_sum(sr.right, hr.right)) / n;
}

double freq_charbonnier_loss(const StereoPair& sr, const StereoPair& hr, double epsilon) {
    check_pair_shapes(sr, hr, "freq_charbonnier_loss");
    if (!(epsilon > 0.0)) throw std::invalid_argument("freq_charbonnier_loss: epsilon must be > 0");
    const double eps2 = epsilon * epsilon;
    double sum = 0.0;
    std::size_t samples = 0;
    for (const auto* view : {&sr.left, &sr.right}) {
        const Tensor& s = *view;
        const Tensor& h = view == &sr.left ? hr.left : hr.right;
        for (std::size_t c = 0; c < s.channels(); ++c) {
            sum += std::sqrt(spectral_distance(s, h, c) + eps2);
            ++samples;
        }
    }
    return sum / static_cast<double>(samples);
}

double total_loss(const StereoPair& sr, const StereoPair& hr, const LossConfig& config) {
    config.validate();
    return mse_loss(sr, hr) + config.lambda * freq_charbonnier_loss(sr, hr, config.epsilon);
}

double psnr(const Tensor& a, const Tensor& b) {
    check_shapes(a, b, "psnr");
    const double mse = squared_error_sum(a, b) / static_cast<double>(a.size());
    if (mse == 0.0) return kInfinitePsnr;
    return 10.0 * std::log10(1.0 / mse);
}

double capped_psnr(double value) { return std::min(value, kPsnrCap); }

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options) {
    check_shapes(a, b, "ssim");
    const std::size_t n = options.window;
    if (a.height() < n || a.width() < n) {
        throw ShapeError("ssim: image " + a.shape_string() + " is smaller than the " + std::to_string(n) + "x" +
                         std::to_string(n) + " window");
    }
    const double c1 = (options.k1 * options.data_range) * (options.k1 * options.data_range);
    const double c2 = (options.k2 * options.data_range) * (options.k2 * options.data_range);
    const auto kernel = gaussian_kernel(n, options.sigma);
    const std::size_t H = a.height();
    const std::size_t W = a.width();

    double total = 0.0;
    for (std::size_t c = 0; c < a.channels(); ++c) {
        std::vector<double> x(H * W), y(H * W), xx(H * W), yy(H * W), xy(H * W);
        const auto pa = a.channel(c);
        const auto pb = b.channel(c);
        for (std::size_t i = 0; i < H * W; ++i) {
            x[i] = pa[i];
            y[i] = pb[i];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, H, W, kernel);
        const auto my = filter_valid(y, H, W, kernel);
        const auto exx = filter_valid(xx, H, W, kernel);
        const auto eyy = filter_valid(yy, H, W, kernel);
        const auto exy = filter_valid(xy, H, W, kernel);
        double sum = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = exx[i] - mx[i] * mx[i];
            const double vy = eyy[i] - my[i] * my[i];
            const double cov = exy[i] - mx[i] * my[i];
            const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
            const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
            sum += num / den;
        }
        total += sum / static_cast<double>(mx.size());
    }
    return total / static_cast<double>(a.channels());
}

ImageMetrics stereo_eval(const StereoPair& sr, const StereoPair& hr, std::string scene) {
    check_pair_shapes(sr, hr, "stereo_eval");
    ImageMetrics m;
    m.scene = std::move(scene);
    m.psnr_left = psnr(sr.left, hr.left);
    m.psnr_right = psnr(sr.right, hr.right);
    m.ssim_left = ssim(sr.left, hr.left);
    m.ssim_right = ssim(sr.right, hr.right);
    m.psnr_pair = (capped_psnr(m.psnr_left) + capped_psnr(m.psnr_right)) / 2.0;
    m.ssim_pair = (m.ssim_left + m.ssim_right) / 2.0;
    return m;
}

EvalReport aggregate(std::vector<ImageMetrics> images) {
    EvalReport report;
    report.images = std::move(images);
    if (report.images.empty()) return report;
    for (const auto& m : report.images) {
        report.mean_psnr_left += capped_psnr(m.psnr_left);
        report.mean_ssim_left += m.ssim_left;
        report.mean_psnr_pair += m.psnr_pair;
        report.mean_ssim_pair += m.ssim_pair;
    }
    const double n = static_cast<double>(report.images.size());
    report.mean_psnr_left /= n;
    report.mean_ssim_left /= n;
    report.mean_psnr_pair /= n;
    report.mean_ssim_pair /= n;
    return report;
}

} // namespace cvh
