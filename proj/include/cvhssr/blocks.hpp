#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cvhssr/tensor.hpp"

namespace cvh {

// Convolution weights bound to their geometry.
struct ConvLayer {
    ConvSpec spec;
    ParamTensor weight;
    ParamTensor bias;

    static ConvLayer zeros(const ConvSpec& spec);
    Tensor operator()(const Tensor& input) const;
};

struct LayerNormParams {
    ParamTensor gamma;
    ParamTensor beta;

    static LayerNormParams identity(std::size_t channels);
    Tensor operator()(const Tensor& input) const;
};

struct TlcWindow {
    std::size_t height = 0;
    std::size_t width = 0;
};

// Cross-hierarchy information mining block: gated extractor with hybrid
// (channel + large-kernel) attention, then a GELU-gated feed-forward. Both
// halves are residual. The expansion convs map C -> 2C so each gate returns C.
struct ChimbParams {
    LayerNormParams ln1;
    ConvLayer pw_expand1; // 1x1 C -> 2C
    ConvLayer dw3_1;      // depthwise 3x3 on 2C
    ConvLayer ca_pw;      // 1x1 C -> C on pooled statistics
    ConvLayer lka_dw5;    // depthwise 5x5
    ConvLayer lka_dwd7;   // depthwise 7x7, dilation 3
    ConvLayer lka_pw;     // 1x1 C -> C
    ConvLayer pw_out0;    // 1x1 C -> C
    LayerNormParams ln2;
    ConvLayer pw_expand2; // 1x1 C -> 2C
    ConvLayer dw3_2;      // depthwise 3x3 on 2C
    ConvLayer pw_out3;    // 1x1 C -> C

    static ChimbParams zeros(std::size_t channels);
    std::size_t channels() const { return ln1.gamma.size(); }
};

inline constexpr std::size_t kLkaDilation = 3;

// One attention direction: queries from the source view, keys and values from the target.
struct AttentionParams {
    ConvLayer q_pw, q_dw;
    ConvLayer k_pw, k_dw;
    ConvLayer v_pw, v_dw;
    ConvLayer out_pw;

    static AttentionParams zeros(std::size_t channels);
};

struct CvimParams {
    LayerNormParams ln_left;
    LayerNormParams ln_right;
    AttentionParams left_to_right; // queries from the left view
    AttentionParams right_to_left; // queries from the right view
    ParamTensor gamma_left;  // per-channel fusion scales
    ParamTensor gamma_right;

    static CvimParams zeros(std::size_t channels);
    std::size_t channels() const { return gamma_left.size(); }
    // Exchanges every left/right role.
    CvimParams mirrored() const;
};

// Visit every learned tensor with its relative name ("pw_expand1.weight",
// "left_to_right.q_pw.bias", "gamma_left", ...), in canonical order.
using ParamVisitor = std::function<void(const std::string& name, ParamTensor& tensor)>;
using ConstParamVisitor = std::function<void(const std::string& name, const ParamTensor& tensor)>;
void for_each_param(ChimbParams& p, const ParamVisitor& fn);
void for_each_param(const ChimbParams& p, const ConstParamVisitor& fn);
void for_each_param(CvimParams& p, const ParamVisitor& fn);
void for_each_param(const CvimParams& p, const ConstParamVisitor& fn);

Tensor simple_gate(const Tensor& x);
Tensor nonlinear_gate(const Tensor& x);

// x * pw(pool(x)); pool is global, or local with `tlc` unless the window
// already covers the whole map, in which case the global path is used.
Tensor channel_attention(const Tensor& x, const ConvLayer& ca_pw, std::optional<TlcWindow> tlc = std::nullopt);

Tensor large_kernel_attention(const Tensor& x, const ConvLayer& dw5, const ConvLayer& dwd7, const ConvLayer& pw);

Tensor chimb_forward(const Tensor& f_in, const ChimbParams& p, std::optional<TlcWindow> tlc = std::nullopt);

// Single-head scaled dot-product attention restricted to each image row
// (epipolar line). `ln_source` normalizes the query input, `ln_target` the key
// input; values come from the raw target.
Tensor cross_view_attention(const Tensor& source, const Tensor& target, const LayerNormParams& ln_source,
                            const LayerNormParams& ln_target, const AttentionParams& p);

// Per-row attention core on already projected Q, K, V (all (C, H, W)).
Tensor row_attention(const Tensor& q, const Tensor& k, const Tensor& v);

std::pair<Tensor, Tensor> cvim_forward(const Tensor& f_left, const Tensor& f_right, const CvimParams& p);

} // namespace cvh
