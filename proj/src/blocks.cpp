#include "cvhssr/blocks.hpp"

#include <cmath>
#include <string>

#include "cvhssr/ops.hpp"
#include "cvhssr/parallel.hpp"

namespace cvh {

ConvLayer ConvLayer::zeros(const ConvSpec& spec) {
    spec.validate();
    ConvLayer layer{spec, ParamTensor(spec.weight_shape()), ParamTensor()};
    if (spec.has_bias) layer.bias = ParamTensor({spec.out_channels});
    return layer;
}

Tensor ConvLayer::operator()(const Tensor& input) const { return conv2d(input, spec, weight, bias.data); }

LayerNormParams LayerNormParams::identity(std::size_t channels) {
    return {ParamTensor({channels}, 1.0f), ParamTensor({channels}, 0.0f)};
}

Tensor LayerNormParams::operator()(const Tensor& input) const {
    return layer_norm_channel(input, gamma.data, beta.data);
}

ChimbParams ChimbParams::zeros(std::size_t c) {
    ChimbParams p;
    p.ln1 = LayerNormParams::identity(c);
    p.pw_expand1 = ConvLayer::zeros(ConvSpec::pointwise(c, 2 * c));
    p.dw3_1 = ConvLayer::zeros(ConvSpec::depthwise(2 * c, 3));
    p.ca_pw = ConvLayer::zeros(ConvSpec::pointwise(c, c));
    p.lka_dw5 = ConvLayer::zeros(ConvSpec::depthwise(c, 5));
    p.lka_dwd7 = ConvLayer::zeros(ConvSpec::depthwise(c, 7, kLkaDilation));
    p.lka_pw = ConvLayer::zeros(ConvSpec::pointwise(c, c));
    p.pw_out0 = ConvLayer::zeros(ConvSpec::pointwise(c, c));
    p.ln2 = LayerNormParams::identity(c);
    p.pw_expand2 = ConvLayer::zeros(ConvSpec::pointwise(c, 2 * c));
    p.dw3_2 = ConvLayer::zeros(ConvSpec::depthwise(2 * c, 3));
    p.pw_out3 = ConvLayer::zeros(ConvSpec::pointwise(c, c));
    return p;
}

AttentionParams AttentionParams::zeros(std::size_t c) {
    AttentionParams p;
    p.q_pw = ConvLayer::zeros(ConvSpec::pointwise(c, c));
    p.q_dw = ConvLayer::zeros(ConvSpec::depthwise(c, 3));
    p.k_pw = ConvLayer::zeros(ConvSpec::pointwise(c, c));
    p.k_dw = ConvLayer::zeros(ConvSpec::depthwise(c, 3));
    p.v_pw = ConvLayer::zeros(ConvSpec::pointwise(c, c));
    p.v_dw = ConvLayer::zeros(ConvSpec::depthwise(c, 3));
    p.out_pw = ConvLayer::zeros(ConvSpec::pointwise(c, c));
    return p;
}

CvimParams CvimParams::zeros(std::size_t c) {
    CvimParams p;
    p.ln_left = LayerNormParams::identity(c);
    p.ln_right = LayerNormParams::identity(c);
    p.left_to_right = AttentionParams::zeros(c);
    p.right_to_left = AttentionParams::zeros(c);
    p.gamma_left = ParamTensor({c});
    p.gamma_right = ParamTensor({c});
    return p;
}

CvimParams CvimParams::mirrored() const {
    CvimParams m;
    m.ln_left = ln_right;
    m.ln_right = ln_left;
    m.left_to_right = right_to_left;
    m.right_to_left = left_to_right;
    m.gamma_left = gamma_right;
    m.gamma_right = gamma_left;
    return m;
}

namespace {

template <typename Layer, typename Fn>
void visit_conv(const std::string& name, Layer& layer, const Fn& fn) {
    fn(name + ".weight", layer.weight);
    if (layer.spec.has_bias) fn(name + ".bias", layer.bias);
}

template <typename Norm, typename Fn>
void visit_norm(const std::string& name, Norm& norm, const Fn& fn) {
    fn(name + ".weight", norm.gamma);
    fn(name + ".bias", norm.beta);
}

template <typename Chimb, typename Fn>
void visit_chimb(Chimb& p, const Fn& fn) {
    visit_norm("ln1", p.ln1, fn);
    visit_conv("pw_expand1", p.pw_expand1, fn);
    visit_conv("dw3_1", p.dw3_1, fn);
    visit_conv("ca_pw", p.ca_pw, fn);
    visit_conv("lka_dw5", p.lka_dw5, fn);
    visit_conv("lka_dwd7", p.lka_dwd7, fn);
    visit_conv("lka_pw", p.lka_pw, fn);
    visit_conv("pw_out0", p.pw_out0, fn);
    visit_norm("ln2", p.ln2, fn);
    visit_conv("pw_expand2", p.pw_expand2, fn);
    visit_conv("dw3_2", p.dw3_2, fn);
    visit_conv("pw_out3", p.pw_out3, fn);
}

template <typename Attn, typename Fn>
void visit_attention(const std::string& prefix, Attn& p, const Fn& fn) {
    visit_conv(prefix + ".q_pw", p.q_pw, fn);
    visit_conv(prefix + ".q_dw", p.q_dw, fn);
    visit_conv(prefix + ".k_pw", p.k_pw, fn);
    visit_conv(prefix + ".k_dw", p.k_dw, fn);
    visit_conv(prefix + ".v_pw", p.v_pw, fn);
    visit_conv(prefix + ".v_dw", p.v_dw, fn);
    visit_conv(prefix + ".out_pw", p.out_pw, fn);
}

template <typename Cvim, typename Fn>
void visit_cvim(Cvim& p, const Fn& fn) {
    visit_norm("ln_left", p.ln_left, fn);
    visit_norm("ln_right", p.ln_right, fn);
    visit_attention("left_to_right", p.left_to_right, fn);
    visit_attention("right_to_left", p.right_to_left, fn);
    fn("gamma_left", p.gamma_left);
    fn("gamma_right", p.gamma_right);
}

void require_even(const Tensor& x, const char* op) {
    if (x.channels() % 2 != 0) {
        throw ShapeError(std::string(op) + ": channel count " + std::to_string(x.channels()) + " is odd");
    }
}

// f + gamma * a per channel; channels with gamma == 0 are copied unchanged.
Tensor scaled_residual(const Tensor& f, const Tensor& a, const ParamTensor& gamma) {
    if (gamma.size() != f.channels()) {
        throw ShapeError("cvim: gamma length " + std::to_string(gamma.size()) + " != channels " +
                         std::to_string(f.channels()));
    }
    Tensor out = f;
    for (std::size_t c = 0; c < f.channels(); ++c) {
        const float g = gamma.data[c];
        if (g == 0.0f) continue;
        const auto src = a.channel(c);
        auto dst = out.channel(c);
        for (std::size_t p = 0; p < dst.size(); ++p) dst[p] = src[p] * g + dst[p];
    }
    return out;
}

} // namespace

void for_each_param(ChimbParams& p, const ParamVisitor& fn) { visit_chimb(p, fn); }
void for_each_param(const ChimbParams& p, const ConstParamVisitor& fn) { visit_chimb(p, fn); }
void for_each_param(CvimParams& p, const ParamVisitor& fn) { visit_cvim(p, fn); }
void for_each_param(const CvimParams& p, const ConstParamVisitor& fn) { visit_cvim(p, fn); }

Tensor simple_gate(const Tensor& x) {
    require_even(x, "simple_gate");
    const auto [x1, x2] = split_channels(x);
    return mul(x1, x2);
}

Tensor nonlinear_gate(const Tensor& x) {
    require_even(x, "nonlinear_gate");
    const auto [x1, x2] = split_channels(x);
    return mul(gelu(x1), x2);
}

Tensor channel_attention(const Tensor& x, const ConvLayer& ca_pw, std::optional<TlcWindow> tlc) {
    const bool local = tlc && (tlc->height < x.height() || tlc->width < x.width());
    if (local) {
        const Tensor pooled = local_avg_pool(x, tlc->height, tlc->width);
        return mul(x, ca_pw(pooled));
    }
    return mul(x, ca_pw(global_avg_pool(x)));
}

Tensor large_kernel_attention(const Tensor& x, const ConvLayer& dw5, const ConvLayer& dwd7, const ConvLayer& pw) {
    return mul(x, pw(dwd7(dw5(x))));
}

Tensor chimb_forward(const Tensor& f_in, const ChimbParams& p, std::optional<TlcWindow> tlc) {
    if (f_in.channels() != p.channels()) {
        throw ShapeError("chimb: input channels " + std::to_string(f_in.channels()) + " != block channels " +
                         std::to_string(p.channels()));
    }
    // extractor
    Tensor x = simple_gate(p.dw3_1(p.pw_expand1(p.ln1(f_in))));
    const Tensor hybrid = add(large_kernel_attention(x, p.lka_dw5, p.lka_dwd7, p.lka_pw), channel_attention(x, p.ca_pw, tlc));
    const Tensor f_chie = add(p.pw_out0(hybrid), f_in);

    // refinement feed-forward
    const Tensor y = nonlinear_gate(p.dw3_2(p.pw_expand2(p.ln2(f_chie))));
    return add(p.pw_out3(y), f_chie);
}

Tensor row_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (!q.same_shape(k) || !q.same_shape(v)) {
        throw ShapeError("row_attention: q/k/v shapes differ: " + q.shape_string() + ", " + k.shape_string() + ", " +
                         v.shape_string());
    }
    const std::size_t C = q.channels();
    const std::size_t H = q.height();
    const std::size_t W = q.width();
    const float inv_scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(C)));
    Tensor out(C, H, W);

    parallel_for(H, [&](std::size_t h0, std::size_t h1) {
        std::vector<float> scores(W * W);
        for (std::size_t h = h0; h < h1; ++h) {
            std::fill(scores.begin(), scores.end(), 0.0f);
            for (std::size_t c = 0; c < C; ++c) {
                const float* qrow = q.channel(c).data() + h * W;
                const float* krow = k.channel(c).data() + h * W;
                for (std::size_t i = 0; i < W; ++i) {
                    const float qi = qrow[i];
                    float* srow = scores.data() + i * W;
                    for (std::size_t j = 0; j < W; ++j) srow[j] += qi * krow[j];
                }
            }
            for (auto& s : scores) s *= inv_scale;
            softmax_inplace(scores, W);
            for (std::size_t c = 0; c < C; ++c) {
                const float* vrow = v.channel(c).data() + h * W;
                float* orow = &out.at(c, h, 0);
                for (std::size_t i = 0; i < W; ++i) {
                    const float* arow = scores.data() + i * W;
                    float acc = 0.0f;
                    for (std::size_t j = 0; j < W; ++j) acc += arow[j] * vrow[j];
                    orow[i] = acc;
                }
            }
        }
    });
    return out;
}

Tensor cross_view_attention(const Tensor& source, const Tensor& target, const LayerNormParams& ln_source,
                            const LayerNormParams& ln_target, const AttentionParams& p) {
    if (source.channels() != target.channels())
        throw ShapeError("cross_view_attention: channel mismatch " + source.shape_string() + " vs " + target.shape_string());
    if (source.height() != target.height())
        throw ShapeError("cross_view_attention: height mismatch " + source.shape_string() + " vs " + target.shape_string());
    if (source.width() != target.width())
        throw ShapeError("cross_view_attention: width mismatch " + source.shape_string() + " vs " + target.shape_string());

    const Tensor q = p.q_dw(p.q_pw(ln_source(source)));
    const Tensor k = p.k_dw(p.k_pw(ln_target(target)));
    const Tensor v = p.v_dw(p.v_pw(target));
    return p.out_pw(row_attention(q, k, v));
}

std::pair<Tensor, Tensor> cvim_forward(const Tensor& f_left, const Tensor& f_right, const CvimParams& p) {
    if (!f_left.same_shape(f_right)) {
        throw ShapeError("cvim: view shapes differ: " + f_left.shape_string() + " vs " + f_right.shape_string());
    }
    const Tensor left_from_right = cross_view_attention(f_left, f_right, p.ln_left, p.ln_right, p.left_to_right);
    const Tensor right_from_left = cross_view_attention(f_right, f_left, p.ln_right, p.ln_left, p.right_to_left);
    return {scaled_residual(f_left, left_from_right, p.gamma_left),
            scaled_residual(f_right, right_from_left, p.gamma_right)};
}

} // namespace cvh
