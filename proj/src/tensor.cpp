#include "cvhssr/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace cvh {

namespace {

void require_positive(std::size_t value, const char* name) {
    if (value == 0) throw ShapeError(std::string("tensor ") + name + " must be positive");
}

} // namespace

Tensor::Tensor(std::size_t channels, std::size_t height, std::size_t width, float fill)
    : channels_(channels), height_(height), width_(width) {
    require_positive(channels, "channels");
    require_positive(height, "height");
    require_positive(width, "width");
    data_.assign(channels * height * width, fill);
}

Tensor::Tensor(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    require_positive(channels, "channels");
    require_positive(height, "height");
    require_positive(width, "width");
    if (data_.size() != channels * height * width) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                         shape_string());
    }
}

Tensor Tensor::channel_tensor(std::size_t c) const {
    if (c >= channels_) throw ShapeError("channel index " + std::to_string(c) + " out of range for " + shape_string());
    const auto plane = channel(c);
    return Tensor(1, height_, width_, std::vector<float>(plane.begin(), plane.end()));
}

std::string Tensor::shape_string() const {
    std::ostringstream out;
    out << "(" << channels_ << ", " << height_ << ", " << width_ << ")";
    return out.str();
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

bool all_finite(const Tensor& t) {
    for (float v : t.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::size_t element_count(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(std::span<const std::size_t> shape) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
    out << "]";
    return out.str();
}

ParamTensor::ParamTensor(std::vector<std::size_t> dims, float fill)
    : shape(std::move(dims)), data(element_count(shape), fill) {}

ParamTensor::ParamTensor(std::vector<std::size_t> dims, std::vector<float> values)
    : shape(std::move(dims)), data(std::move(values)) {
    if (data.size() != element_count(shape)) {
        throw ShapeError("parameter data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_to_string(shape));
    }
}

std::string ParamTensor::shape_string() const { return shape_to_string(shape); }

bool bitwise_equal(const ParamTensor& a, const ParamTensor& b) {
    return a.shape == b.shape && a.data.size() == b.data.size() &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

std::vector<std::size_t> ConvSpec::weight_shape() const {
    return {out_channels, in_channels / groups, kernel_size, kernel_size};
}

std::size_t ConvSpec::weight_count() const {
    return out_channels * (in_channels / groups) * kernel_size * kernel_size;
}

void ConvSpec::validate() const {
    if (in_channels == 0) throw ShapeError("conv in_channels must be positive");
    if (out_channels == 0) throw ShapeError("conv out_channels must be positive");
    if (kernel_size == 0 || kernel_size % 2 == 0)
        throw ShapeError("conv kernel_size must be odd, got " + std::to_string(kernel_size));
    if (dilation == 0) throw ShapeError("conv dilation must be >= 1");
    if (groups == 0) throw ShapeError("conv groups must be >= 1");
    if (in_channels % groups != 0)
        throw ShapeError("conv in_channels " + std::to_string(in_channels) + " not divisible by groups " +
                         std::to_string(groups));
    if (out_channels % groups != 0)
        throw ShapeError("conv out_channels " + std::to_string(out_channels) + " not divisible by groups " +
                         std::to_string(groups));
}

ConvSpec ConvSpec::pointwise(std::size_t in, std::size_t out) {
    return ConvSpec{in, out, 1, 1, 1, true};
}

ConvSpec ConvSpec::depthwise(std::size_t channels, std::size_t kernel, std::size_t dilation) {
    return ConvSpec{channels, channels, kernel, dilation, channels, true};
}

ConvSpec ConvSpec::dense(std::size_t in, std::size_t out, std::size_t kernel) {
    return ConvSpec{in, out, kernel, 1, 1, true};
}

} // namespace cvh
