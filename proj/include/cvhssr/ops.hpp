#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "cvhssr/tensor.hpp"

namespace cvh {

inline constexpr float kLayerNormEpsilon = 1e-6f;

// Cross-correlation with zero padding, stride 1, output spatial size equal to the
// input. `bias` must be non-empty iff spec.has_bias.
Tensor conv2d(const Tensor& input, const ConvSpec& spec, const ParamTensor& weight,
              std::span<const float> bias = {});

// Normalizes the channel vector at each spatial position (population variance),
// then applies the per-channel affine.
Tensor layer_norm_channel(const Tensor& input, std::span<const float> gamma,
                          std::span<const float> beta, float epsilon = kLayerNormEpsilon);

// (C, 1, 1) per-channel means.
Tensor global_avg_pool(const Tensor& input);

// Mean over a window centered at each position, clipped to the image (the
// divisor is the size of the valid intersection). Even windows extend one
// further toward the top/left.
Tensor local_avg_pool(const Tensor& input, std::size_t window_h, std::size_t window_w);

// out[c, h*r+i, w*r+j] = in[c*r*r + i*r + j, h, w]
Tensor pixel_shuffle(const Tensor& input, std::size_t factor);
Tensor pixel_unshuffle(const Tensor& input, std::size_t factor);

// Row-wise softmax of a row-major matrix with `cols` columns.
std::vector<float> softmax(std::span<const float> rows, std::size_t cols);
void softmax_inplace(std::span<float> rows, std::size_t cols);

// Exact erf-based GELU.
float gelu(float x);
Tensor gelu(const Tensor& input);

Tensor add(const Tensor& a, const Tensor& b);
// Elementwise product. `b` may also be (C, 1, 1), broadcast over space.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& input, float factor);
// input[c] * factors[c]
Tensor scale_channels(const Tensor& input, std::span<const float> factors);

// First and second channel halves.
std::pair<Tensor, Tensor> split_channels(const Tensor& input);
Tensor concat_channels(const Tensor& first, const Tensor& second);

// Bilinear resize by an integer factor, half-pixel centers (align_corners off),
// edge-clamped.
Tensor bilinear_upsample(const Tensor& input, std::size_t factor);

} // namespace cvh
