#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvh {

// Raised for any dimension or parameter-shape mismatch. The message names the
// offending dimension.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Dense channels x height x width single-precision array, channel-major then
// row-major. Operations never mutate their inputs; they return new tensors.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f);
    Tensor(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> data);

    std::size_t channels() const { return channels_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t plane_size() const { return height_ * width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float& at(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * height_ + y) * width_ + x];
    }
    float at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * height_ + y) * width_ + x];
    }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    std::span<float> channel(std::size_t c) { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const float> channel(std::size_t c) const {
        return {data_.data() + c * plane_size(), plane_size()};
    }

    // Single-channel copy of channel c.
    Tensor channel_tensor(std::size_t c) const;

    bool same_shape(const Tensor& other) const {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }
    std::string shape_string() const;

private:
    std::size_t channels_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<float> data_;
};

// Byte-level equality: distinguishes -0 from +0 and compares NaN payloads.
bool bitwise_equal(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

// N-dimensional learned parameter (conv weights are rank 4, biases and
// affine vectors rank 1).
struct ParamTensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    ParamTensor() = default;
    explicit ParamTensor(std::vector<std::size_t> dims, float fill = 0.0f);
    ParamTensor(std::vector<std::size_t> dims, std::vector<float> values);

    std::size_t size() const { return data.size(); }
    std::string shape_string() const;
};

bool bitwise_equal(const ParamTensor& a, const ParamTensor& b);
std::size_t element_count(std::span<const std::size_t> shape);
std::string shape_to_string(std::span<const std::size_t> shape);

// Stride-1 same-padded convolution geometry.
struct ConvSpec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_size = 1;
    std::size_t dilation = 1;
    std::size_t groups = 1;
    bool has_bias = true;

    std::size_t padding() const { return dilation * (kernel_size - 1) / 2; }
    std::vector<std::size_t> weight_shape() const;
    std::size_t weight_count() const;
    std::size_t param_count() const { return weight_count() + (has_bias ? out_channels : 0); }

    // Throws ShapeError on even kernels, zero sizes or group divisibility violations.
    void validate() const;

    static ConvSpec pointwise(std::size_t in, std::size_t out);
    static ConvSpec depthwise(std::size_t channels, std::size_t kernel, std::size_t dilation = 1);
    static ConvSpec dense(std::size_t in, std::size_t out, std::size_t kernel);
};

} // namespace cvh
