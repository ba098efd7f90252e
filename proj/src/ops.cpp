#include "cvhssr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cvhssr/parallel.hpp"

namespace cvh {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.channels() != b.channels())
        throw ShapeError(std::string(op) + ": channel mismatch " + a.shape_string() + " vs " + b.shape_string());
    if (a.height() != b.height())
        throw ShapeError(std::string(op) + ": height mismatch " + a.shape_string() + " vs " + b.shape_string());
    if (a.width() != b.width())
        throw ShapeError(std::string(op) + ": width mismatch " + a.shape_string() + " vs " + b.shape_string());
}

void check_conv_params(const Tensor& input, const ConvSpec& spec, const ParamTensor& weight,
                       std::span<const float> bias) {
    spec.validate();
    if (input.channels() != spec.in_channels) {
        throw ShapeError("conv2d: input channels " + std::to_string(input.channels()) + " != in_channels " +
                         std::to_string(spec.in_channels));
    }
    const auto expected = spec.weight_shape();
    if (weight.shape.size() != 4) {
        throw ShapeError("conv2d: weight rank " + std::to_string(weight.shape.size()) + " != 4, expected " +
                         shape_to_string(expected));
    }
    static const char* kDimNames[] = {"out_channels", "in_channels/groups", "kernel height", "kernel width"};
    for (std::size_t d = 0; d < 4; ++d) {
        if (weight.shape[d] != expected[d]) {
            throw ShapeError(std::string("conv2d: weight ") + kDimNames[d] + " is " + std::to_string(weight.shape[d]) +
                             ", expected " + std::to_string(expected[d]) + " (weight " + weight.shape_string() +
                             " vs " + shape_to_string(expected) + ")");
        }
    }
    if (weight.data.size() != spec.weight_count()) throw ShapeError("conv2d: weight data length mismatch");
    if (spec.has_bias && bias.size() != spec.out_channels) {
        throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) + " != out_channels " +
                         std::to_string(spec.out_channels));
    }
    if (!spec.has_bias && !bias.empty()) throw ShapeError("conv2d: bias given for a bias-free conv");
}

// 1x1 dense conv as a position-tiled matrix product. Per output element the
// accumulation order (bias, then input channels ascending) is the same as in
// the generic path, so both produce identical bits.
void pointwise_conv(const Tensor& input, const ConvSpec& spec, const float* w, std::span<const float> bias,
                    Tensor& out) {
    constexpr std::size_t kTile = 512;
    const std::size_t plane = input.plane_size();
    const std::size_t cin = spec.in_channels;
    const std::size_t tiles = (plane + kTile - 1) / kTile;
    const float* in = input.data().data();
    float* dst = out.data().data();
    parallel_for(tiles, [&](std::size_t t0, std::size_t t1) {
        for (std::size_t t = t0; t < t1; ++t) {
            const std::size_t p0 = t * kTile;
            const std::size_t len = std::min(kTile, plane - p0);
            for (std::size_t o = 0; o < spec.out_channels; ++o) {
                float* acc = dst + o * plane + p0;
                const float b = bias.empty() ? 0.0f : bias[o];
                std::fill(acc, acc + len, b);
                const float* wrow = w + o * cin;
                for (std::size_t i = 0; i < cin; ++i) {
                    const float wi = wrow[i];
                    const float* src = in + i * plane + p0;
                    for (std::size_t p = 0; p < len; ++p) acc[p] += wi * src[p];
                }
            }
        }
    });
}

void generic_conv(const Tensor& input, const ConvSpec& spec, const float* w, std::span<const float> bias,
                  Tensor& out) {
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(input.height());
    const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(input.width());
    const std::size_t plane = input.plane_size();
    const std::size_t k = spec.kernel_size;
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(spec.padding());
    const std::ptrdiff_t dil = static_cast<std::ptrdiff_t>(spec.dilation);
    const std::size_t in_per_group = spec.in_channels / spec.groups;
    const std::size_t out_per_group = spec.out_channels / spec.groups;
    const float* in = input.data().data();
    float* dst = out.data().data();

    parallel_for(spec.out_channels, [&](std::size_t o0, std::size_t o1) {
        for (std::size_t o = o0; o < o1; ++o) {
            float* acc = dst + o * plane;
            std::fill(acc, acc + plane, bias.empty() ? 0.0f : bias[o]);
            const std::size_t g = o / out_per_group;
            for (std::size_t il = 0; il < in_per_group; ++il) {
                const float* src = in + (g * in_per_group + il) * plane;
                const float* wk = w + (o * in_per_group + il) * k * k;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) * dil - pad;
                    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
                    const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(H, H - dy);
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const float wv = wk[ky * k + kx];
                        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) * dil - pad;
                        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W - dx);
                        if (x0 >= x1) continue;
                        for (std::ptrdiff_t y = y0; y < y1; ++y) {
                            float* row = acc + y * W;
                            const float* srow = src + (y + dy) * W + dx;
                            for (std::ptrdiff_t x = x0; x < x1; ++x) row[x] += wv * srow[x];
                        }
                    }
                }
            }
        }
    });
}

} // namespace

Tensor conv2d(const Tensor& input, const ConvSpec& spec, const ParamTensor& weight, std::span<const float> bias) {
    check_conv_params(input, spec, weight, bias);
    Tensor out(spec.out_channels, input.height(), input.width());
    if (spec.kernel_size == 1 && spec.groups == 1) {
        pointwise_conv(input, spec, weight.data.data(), bias, out);
    } else {
        generic_conv(input, spec, weight.data.data(), bias, out);
    }
    return out;
}

Tensor layer_norm_channel(const Tensor& input, std::span<const float> gamma, std::span<const float> beta,
                          float epsilon) {
    const std::size_t C = input.channels();
    if (gamma.size() != C)
        throw ShapeError("layer_norm: gamma length " + std::to_string(gamma.size()) + " != channels " + std::to_string(C));
    if (beta.size() != C)
        throw ShapeError("layer_norm: beta length " + std::to_string(beta.size()) + " != channels " + std::to_string(C));

    const std::size_t plane = input.plane_size();
    std::vector<double> mean(plane, 0.0);
    std::vector<double> inv_std(plane, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        const auto src = input.channel(c);
        for (std::size_t p = 0; p < plane; ++p) mean[p] += src[p];
    }
    for (auto& m : mean) m /= static_cast<double>(C);
    for (std::size_t c = 0; c < C; ++c) {
        const auto src = input.channel(c);
        for (std::size_t p = 0; p < plane; ++p) {
            const double d = src[p] - mean[p];
            inv_std[p] += d * d;
        }
    }
    for (auto& v : inv_std) v = 1.0 / std::sqrt(v / static_cast<double>(C) + static_cast<double>(epsilon));

    Tensor out(C, input.height(), input.width());
    for (std::size_t c = 0; c < C; ++c) {
        const auto src = input.channel(c);
        auto dst = out.channel(c);
        const float g = gamma[c];
        const float b = beta[c];
        for (std::size_t p = 0; p < plane; ++p) {
            const float normalized = static_cast<float>((src[p] - mean[p]) * inv_std[p]);
            dst[p] = normalized * g + b;
        }
    }
    return out;
}

Tensor global_avg_pool(const Tensor& input) {
    Tensor out(input.channels(), 1, 1);
    const double count = static_cast<double>(input.plane_size());
    for (std::size_t c = 0; c < input.channels(); ++c) {
        double sum = 0.0;
        for (float v : input.channel(c)) sum += v;
        out.at(c, 0, 0) = static_cast<float>(sum / count);
    }
    return out;
}

Tensor local_avg_pool(const Tensor& input, std::size_t window_h, std::size_t window_w) {
    if (window_h == 0 || window_w == 0) throw ShapeError("local_avg_pool: window must be positive");
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(input.height());
    const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(input.width());
    const std::ptrdiff_t wh = static_cast<std::ptrdiff_t>(window_h);
    const std::ptrdiff_t ww = static_cast<std::ptrdiff_t>(window_w);
    Tensor out(input.channels(), input.height(), input.width());

    parallel_for(input.channels(), [&](std::size_t c0, std::size_t c1) {
        // (H+1) x (W+1) summed-area table in double
        std::vector<double> table(static_cast<std::size_t>((H + 1) * (W + 1)), 0.0);
        auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) -> double& { return table[y * (W + 1) + x]; };
        for (std::size_t c = c0; c < c1; ++c) {
            const auto src = input.channel(c);
            for (std::ptrdiff_t y = 0; y < H; ++y) {
                double row = 0.0;
                for (std::ptrdiff_t x = 0; x < W; ++x) {
                    row += src[y * W + x];
                    at(y + 1, x + 1) = at(y, x + 1) + row;
                }
            }
            auto dst = out.channel(c);
            for (std::ptrdiff_t y = 0; y < H; ++y) {
                const std::ptrdiff_t top = std::max<std::ptrdiff_t>(0, y - wh / 2);
                const std::ptrdiff_t bottom = std::min<std::ptrdiff_t>(H, y - wh / 2 + wh);
                for (std::ptrdiff_t x = 0; x < W; ++x) {
                    const std::ptrdiff_t left = std::max<std::ptrdiff_t>(0, x - ww / 2);
                    const std::ptrdiff_t right = std::min<std::ptrdiff_t>(W, x - ww / 2 + ww);
                    const double sum = at(bottom, right) - at(top, right) - at(bottom, left) + at(top, left);
                    const double count = static_cast<double>((bottom - top) * (right - left));
                    dst[y * W + x] = static_cast<float>(sum / count);
                }
            }
        }
    });
    return out;
}

Tensor pixel_shuffle(const Tensor& input, std::size_t factor) {
    if (factor == 0) throw ShapeError("pixel_shuffle: factor must be positive");
    const std::size_t r2 = factor * factor;
    if (input.channels() % r2 != 0) {
        throw ShapeError("pixel_shuffle: channels " + std::to_string(input.channels()) + " not divisible by " +
                         std::to_string(r2));
    }
    const std::size_t C = input.channels() / r2;
    const std::size_t H = input.height();
    const std::size_t W = input.width();
    Tensor out(C, H * factor, W * factor);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < factor; ++i)
            for (std::size_t j = 0; j < factor; ++j)
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t w = 0; w < W; ++w)
                        out.at(c, h * factor + i, w * factor + j) = input.at(c * r2 + i * factor + j, h, w);
    return out;
}

Tensor pixel_unshuffle(const Tensor& input, std::size_t factor) {
    if (factor == 0) throw ShapeError("pixel_unshuffle: factor must be positive");
    if (input.height() % factor != 0 || input.width() % factor != 0) {
        throw ShapeError("pixel_unshuffle: spatial size " + input.shape_string() + " not divisible by " +
                         std::to_string(factor));
    }
    const std::size_t r2 = factor * factor;
    const std::size_t H = input.height() / factor;
    const std::size_t W = input.width() / factor;
    Tensor out(input.channels() * r2, H, W);
    for (std::size_t c = 0; c < input.channels(); ++c)
        for (std::size_t i = 0; i < factor; ++i)
            for (std::size_t j = 0; j < factor; ++j)
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t w = 0; w < W; ++w)
                        out.at(c * r2 + i * factor + j, h, w) = input.at(c, h * factor + i, w * factor + j);
    return out;
}

void softmax_inplace(std::span<float> rows, std::size_t cols) {
    if (cols == 0 || rows.size() % cols != 0) throw ShapeError("softmax: length not a multiple of the row width");
    std::vector<double> e(cols);
    for (std::size_t r = 0; r < rows.size() / cols; ++r) {
        float* row = rows.data() + r * cols;
        const float peak = *std::max_element(row, row + cols);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            e[j] = std::exp(static_cast<double>(row[j]) - peak);
            sum += e[j];
        }
        for (std::size_t j = 0; j < cols; ++j) row[j] = static_cast<float>(e[j] / sum);
    }
}

std::vector<float> softmax(std::span<const float> rows, std::size_t cols) {
    std::vector<float> out(rows.begin(), rows.end());
    softmax_inplace(out, cols);
    return out;
}

float gelu(float x) {
    const double v = x;
    return static_cast<float>(0.5 * v * (1.0 + std::erf(v * 0.70710678118654752440)));
}

Tensor gelu(const Tensor& input) {
    Tensor out(input.channels(), input.height(), input.width());
    auto dst = out.data();
    const auto src = input.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = gelu(src[i]);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.channels(), a.height(), a.width());
    auto dst = out.data();
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x[i] + y[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Tensor out(a.channels(), a.height(), a.width());
    auto dst = out.data();
    const auto x = a.data();
    if (b.channels() == a.channels() && b.height() == 1 && b.width() == 1 && a.plane_size() != 1) {
        const std::size_t plane = a.plane_size();
        for (std::size_t c = 0; c < a.channels(); ++c) {
            const float s = b.at(c, 0, 0);
            for (std::size_t p = 0; p < plane; ++p) dst[c * plane + p] = x[c * plane + p] * s;
        }
        return out;
    }
    check_same_shape(a, b, "mul");
    const auto y = b.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x[i] * y[i];
    return out;
}

Tensor scale(const Tensor& input, float factor) {
    Tensor out(input.channels(), input.height(), input.width());
    auto dst = out.data();
    const auto src = input.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * factor;
    return out;
}

Tensor scale_channels(const Tensor& input, std::span<const float> factors) {
    if (factors.size() != input.channels()) {
        throw ShapeError("scale_channels: factor count " + std::to_string(factors.size()) + " != channels " +
                         std::to_string(input.channels()));
    }
    Tensor out(input.channels(), input.height(), input.width());
    for (std::size_t c = 0; c < input.channels(); ++c) {
        const auto src = input.channel(c);
        auto dst = out.channel(c);
        for (std::size_t p = 0; p < src.size(); ++p) dst[p] = src[p] * factors[c];
    }
    return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& input) {
    if (input.channels() % 2 != 0) {
        throw ShapeError("split_channels: channel count " + std::to_string(input.channels()) + " is odd");
    }
    const std::size_t half = input.channels() / 2;
    const std::size_t n = half * input.plane_size();
    const auto src = input.data();
    return {Tensor(half, input.height(), input.width(), std::vector<float>(src.begin(), src.begin() + n)),
            Tensor(half, input.height(), input.width(), std::vector<float>(src.begin() + n, src.end()))};
}

Tensor concat_channels(const Tensor& first, const Tensor& second) {
    if (first.height() != second.height())
        throw ShapeError("concat_channels: height mismatch " + first.shape_string() + " vs " + second.shape_string());
    if (first.width() != second.width())
        throw ShapeError("concat_channels: width mismatch " + first.shape_string() + " vs " + second.shape_string());
    std::vector<float> data;
    data.reserve(first.size() + second.size());
    data.insert(data.end(), first.data().begin(), first.data().end());
    data.insert(data.end(), second.data().begin(), second.data().end());
    return Tensor(first.channels() + second.channels(), first.height(), first.width(), std::move(data));
}

Tensor bilinear_upsample(const Tensor& input, std::size_t factor) {
    if (factor == 0) throw ShapeError("bilinear_upsample: factor must be positive");
    const std::size_t H = input.height();
    const std::size_t W = input.width();
    const std::size_t OH = H * factor;
    const std::size_t OW = W * factor;

    struct Tap {
        std::size_t lo;
        std::size_t hi;
        float t;
    };
    auto taps = [factor](std::size_t out_size, std::size_t in_size) {
        std::vector<Tap> result(out_size);
        for (std::size_t o = 0; o < out_size; ++o) {
            double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
            if (src < 0.0) src = 0.0;
            std::size_t lo = static_cast<std::size_t>(src);
            if (lo > in_size - 1) lo = in_size - 1;
            const std::size_t hi = std::min(lo + 1, in_size - 1);
            result[o] = {lo, hi, static_cast<float>(src - static_cast<double>(lo))};
        }
        return result;
    };
    const auto ytaps = taps(OH, H);
    const auto xtaps = taps(OW, W);

    Tensor out(input.channels(), OH, OW);
    for (std::size_t c = 0; c < input.channels(); ++c) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            const Tap& ty = ytaps[oy];
            for (std::size_t ox = 0; ox < OW; ++ox) {
                const Tap& tx = xtaps[ox];
                const float a = input.at(c, ty.lo, tx.lo);
                const float b = input.at(c, ty.lo, tx.hi);
                const float d = input.at(c, ty.hi, tx.lo);
                const float e = input.at(c, ty.hi, tx.hi);
                const float top = a + tx.t * (b - a);
                const float bottom = d + tx.t * (e - d);
                out.at(c, oy, ox) = top + ty.t * (bottom - top);
            }
        }
    }
    return out;
}

} // namespace cvh
