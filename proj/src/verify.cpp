#include "cvhssr/verify.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "cvhssr/blocks.hpp"
#include "cvhssr/fft.hpp"
#include "cvhssr/io.hpp"
#include "cvhssr/losses.hpp"
#include "cvhssr/model.hpp"
#include "cvhssr/ops.hpp"
#include "cvhssr/parallel.hpp"

namespace cvh {

namespace {

struct Outcome {
    bool passed;
    std::string detail;
};

Tensor random_tensor(std::mt19937_64& rng, std::size_t c, std::size_t h, std::size_t w, float lo = -1.0f,
                     float hi = 1.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    Tensor t(c, h, w);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

void randomize(ParameterStore& store, std::mt19937_64& rng, float amplitude) {
    std::uniform_real_distribution<float> dist(-amplitude, amplitude);
    for (auto& [path, t] : store)
        for (auto& v : t.data) v = dist(rng);
}

bool exactly_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

ModelConfig small_config(std::size_t scale) {
    ModelConfig config;
    config.channels = 8;
    config.num_blocks = 2;
    config.scale = scale;
    return config;
}

} // namespace

std::vector<CheckResult> run_invariant_suite(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::pair<std::string, std::function<Outcome()>>> checks;

    checks.emplace_back("conv2d depthwise is channel-local", [&] {
        const ConvLayer dw = [&] {
            ConvLayer layer = ConvLayer::zeros(ConvSpec::depthwise(4, 3));
            for (auto& v : layer.weight.data) v = std::uniform_real_distribution<float>(-1, 1)(rng);
            return layer;
        }();
        Tensor x = random_tensor(rng, 4, 6, 7);
        const Tensor before = dw(x);
        x.at(2, 3, 3) += 0.5f;
        const Tensor after = dw(x);
        for (std::size_t c = 0; c < 4; ++c) {
            const bool same = bitwise_equal(before.channel_tensor(c), after.channel_tensor(c));
            if ((c == 2) == same) return Outcome{false, "channel " + std::to_string(c) + " behaved unexpectedly"};
        }
        return Outcome{true, ""};
    });

    checks.emplace_back("layer norm zero mean / unit variance", [&] {
        const Tensor x = random_tensor(rng, 8, 5, 5);
        const Tensor y = layer_norm_channel(x, std::vector<float>(8, 1.0f), std::vector<float>(8, 0.0f));
        double worst_mean = 0.0, worst_var = 0.0;
        for (std::size_t p = 0; p < x.plane_size(); ++p) {
            double m = 0.0, v = 0.0, raw_m = 0.0, raw_v = 0.0;
            for (std::size_t c = 0; c < 8; ++c) {
                m += y.channel(c)[p];
                raw_m += x.channel(c)[p];
            }
            m /= 8;
            raw_m /= 8;
            for (std::size_t c = 0; c < 8; ++c) {
                v += (y.channel(c)[p] - m) * (y.channel(c)[p] - m);
                raw_v += (x.channel(c)[p] - raw_m) * (x.channel(c)[p] - raw_m);
            }
            v /= 8;
            raw_v /= 8;
            const double expected = raw_v / (raw_v + kLayerNormEpsilon);
            worst_mean = std::max(worst_mean, std::abs(m));
            worst_var = std::max(worst_var, std::abs(v / expected - 1.0));
        }
        return Outcome{worst_mean < 1e-5 && worst_var < 1e-3, "mean " + fmt(worst_mean) + ", var rel " + fmt(worst_var)};
    });

    checks.emplace_back("pixel shuffle is a bijection", [&] {
        const Tensor x = random_tensor(rng, 16, 3, 5);
        return Outcome{bitwise_equal(pixel_unshuffle(pixel_shuffle(x, 2), 2), x), ""};
    });

    checks.emplace_back("fft round trip, linearity and Parseval", [&] {
        const Tensor x = random_tensor(rng, 1, 6, 10);
        const Tensor y = random_tensor(rng, 1, 6, 10);
        const Tensor back = inverse_fft2d(fft2d(x));
        double round = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) round = std::max(round, double(std::abs(back.data()[i] - x.data()[i])));
        const float a = 0.7f, b = -1.3f;
        const auto fx = fft2d(x), fy = fft2d(y), fxy = fft2d(add(scale(x, a), scale(y, b)));
        double lin = 0.0;
        for (std::size_t i = 0; i < fx.size(); ++i) {
            lin = std::max(lin, double(std::abs(fxy.real[i] - (a * fx.real[i] + b * fy.real[i]))));
            lin = std::max(lin, double(std::abs(fxy.imag[i] - (a * fx.imag[i] + b * fy.imag[i]))));
        }
        double energy = 0.0, spectral = 0.0;
        for (float v : x.data()) energy += double(v) * v;
        for (std::size_t i = 0; i < fx.size(); ++i) spectral += double(fx.real[i]) * fx.real[i] + double(fx.imag[i]) * fx.imag[i];
        spectral /= double(x.size());
        const double parseval = std::abs(energy - spectral) / energy;
        return Outcome{round < 1e-4 && lin < 1e-4 && parseval < 1e-4,
                       "round " + fmt(round) + ", linearity " + fmt(lin) + ", Parseval " + fmt(parseval)};
    });

    checks.emplace_back("softmax rows normalized and shift invariant", [&] {
        const Tensor x = random_tensor(rng, 1, 4, 6, -5.0f, 5.0f);
        std::vector<float> rows(x.data().begin(), x.data().end());
        const auto p = softmax(rows, 6);
        for (std::size_t i = 0; i < 6; ++i) rows[6 + i] += 3.0f;
        const auto q = softmax(rows, 6);
        double sum_err = 0.0, shift = 0.0;
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < 6; ++j) {
                s += p[r * 6 + j];
                shift = std::max(shift, double(std::abs(p[r * 6 + j] - q[r * 6 + j])));
            }
            sum_err = std::max(sum_err, std::abs(s - 1.0));
        }
        return Outcome{sum_err < 1e-6 && shift < 1e-6, "sum " + fmt(sum_err) + ", shift " + fmt(shift)};
    });

    checks.emplace_back("zero-weight CHIMB is the identity", [&] {
        ChimbParams p = ChimbParams::zeros(8);
        for (auto* ln : {&p.ln1, &p.ln2}) {
            for (auto& v : ln->gamma.data) v = std::uniform_real_distribution<float>(-2, 2)(rng);
            for (auto& v : ln->beta.data) v = std::uniform_real_distribution<float>(-2, 2)(rng);
        }
        const Tensor x = random_tensor(rng, 8, 5, 9);
        return Outcome{exactly_equal(chimb_forward(x, p), x), ""};
    });

    checks.emplace_back("CVIM with zero scales is the identity", [&] {
        ModelConfig config = small_config(2);
        ParameterStore store = init_parameters(config, rng());
        const Model model = build_model(config, store);
        const Tensor l = random_tensor(rng, 8, 4, 7), r = random_tensor(rng, 8, 4, 7);
        const auto [ol, orr] = cvim_forward(l, r, model.weights().cvim[0]);
        return Outcome{bitwise_equal(ol, l) && bitwise_equal(orr, r), ""};
    });

    checks.emplace_back("CVIM mirror symmetry", [&] {
        ParameterStore store = init_parameters(small_config(2), rng());
        randomize(store, rng, 0.5f);
        const Model model = build_model(small_config(2), store);
        const CvimParams& p = model.weights().cvim[1];
        const Tensor l = random_tensor(rng, 8, 4, 7), r = random_tensor(rng, 8, 4, 7);
        const auto [a_l, a_r] = cvim_forward(l, r, p);
        const auto [b_l, b_r] = cvim_forward(r, l, p.mirrored());
        return Outcome{bitwise_equal(a_l, b_r) && bitwise_equal(a_r, b_l), ""};
    });

    checks.emplace_back("all-zero network equals bilinear upsampling", [&] {
        const ModelConfig config = small_config(4);
        ParameterStore store = init_parameters(config, 1);
        for (const auto& slot : parameter_layout(config)) {
            if (slot.kind == ParamKind::ConvWeight) std::fill(store[slot.path].data.begin(), store[slot.path].data.end(), 0.0f);
        }
        const Model model = build_model(config, store);
        const StereoPair in{random_tensor(rng, 3, 5, 6, 0, 1), random_tensor(rng, 3, 5, 6, 0, 1)};
        const StereoPair out = model.forward(in);
        return Outcome{exactly_equal(out.left, bilinear_upsample(in.left, 4)) &&
                           exactly_equal(out.right, bilinear_upsample(in.right, 4)),
                       ""};
    });

    checks.emplace_back("forward shape, view isolation at init, swap symmetry", [&] {
        const ModelConfig config = small_config(2);
        const Model fresh = build_model(config, init_parameters(config, rng()));
        const StereoPair in{random_tensor(rng, 3, 6, 9, 0, 1), random_tensor(rng, 3, 6, 9, 0, 1)};
        const StereoPair out = fresh.forward(in);
        if (out.left.channels() != 3 || out.left.height() != 12 || out.left.width() != 18)
            return Outcome{false, "output shape " + out.left.shape_string()};
        StereoPair perturbed = in;
        perturbed.right.at(1, 2, 2) += 0.25f;
        if (!bitwise_equal(fresh.forward(perturbed).left, out.left)) return Outcome{false, "right input leaked into left"};
        const StereoPair swapped = fresh.forward({in.right, in.left});
        if (!bitwise_equal(swapped.left, out.right) || !bitwise_equal(swapped.right, out.left))
            return Outcome{false, "swap symmetry broken at init"};

        ParameterStore store = init_parameters(config, rng());
        randomize(store, rng, 0.3f);
        const Model model = build_model(config, store);
        const Model mirror = build_model(config, mirror_views(store));
        const StereoPair a = model.forward(in);
        const StereoPair b = mirror.forward({in.right, in.left});
        return Outcome{bitwise_equal(a.left, b.right) && bitwise_equal(a.right, b.left), ""};
    });

    checks.emplace_back("forward deterministic across thread counts", [&] {
        const ModelConfig config = small_config(2);
        ParameterStore store = init_parameters(config, rng());
        randomize(store, rng, 0.3f);
        const Model model = build_model(config, store);
        const StereoPair in{random_tensor(rng, 3, 7, 10, 0, 1), random_tensor(rng, 3, 7, 10, 0, 1)};
        const unsigned saved = num_threads();
        set_num_threads(1);
        const StereoPair ref = model.forward(in);
        bool ok = true;
        for (unsigned t : {1u, 2u, 3u, 4u}) {
            set_num_threads(t);
            const StereoPair o = model.forward(in);
            ok = ok && bitwise_equal(o.left, ref.left) && bitwise_equal(o.right, ref.right);
        }
        set_num_threads(saved);
        return Outcome{ok, ""};
    });

    checks.emplace_back("TLC with full-map window equals global pooling", [&] {
        const ModelConfig config = small_config(2);
        ParameterStore store = init_parameters(config, rng());
        randomize(store, rng, 0.3f);
        const Model model = build_model(config, store);
        const StereoPair in{random_tensor(rng, 3, 8, 8, 0, 1), random_tensor(rng, 3, 8, 8, 0, 1)};
        const StereoPair global = model.forward(in);
        const StereoPair full = set_tlc(model, true, {8, 8}).forward(in);
        const StereoPair local = set_tlc(model, true, {3, 3}).forward(in);
        const bool same = bitwise_equal(global.left, full.left) && bitwise_equal(global.right, full.right);
        const bool differs = !bitwise_equal(global.left, local.left);
        return Outcome{same && differs && local.left.same_shape(global.left), ""};
    });

    checks.emplace_back("loss constants", [&] {
        const StereoPair x{random_tensor(rng, 3, 9, 7, 0, 1), random_tensor(rng, 3, 9, 7, 0, 1)};
        const double fc = freq_charbonnier_loss(x, x, 1e-3);
        const double total = total_loss(x, x, {0.01, 1e-3});
        return Outcome{std::abs(fc - 1e-3) <= 1e-15 && std::abs(total - 1e-5) <= 1e-17,
                       "L_FC " + fmt(fc) + ", L_total " + fmt(total)};
    });

    checks.emplace_back("metric sanity", [&] {
        const Tensor a = random_tensor(rng, 3, 16, 16, 0.0f, 0.8f);
        Tensor b = a;
        for (auto& v : b.data()) v += 0.1f;
        const double p = psnr(a, b);
        const double s = ssim(a, a);
        const bool symmetric = ssim(a, b) == ssim(b, a);
        return Outcome{std::abs(p - 20.0) <= 1e-4 && std::abs(s - 1.0) <= 1e-9 && symmetric && std::isinf(psnr(a, a)),
                       "psnr " + fmt(p) + ", ssim " + fmt(s)};
    });

    checks.emplace_back("parameter counts", [&] {
        struct Row {
            Preset preset;
            std::size_t scale;
            double published;
        };
        const Row rows[] = {{Preset::Tiny, 2, 0.66e6}, {Preset::Tiny, 4, 0.68e6}, {Preset::Small, 2, 2.22e6}, {Preset::Small, 4, 2.24e6}};
        std::string detail;
        bool ok = true;
        for (const auto& row : rows) {
            const ModelConfig config = ModelConfig::preset(row.preset, row.scale);
            const std::size_t count = param_count(config);
            const double ratio = double(count) / row.published;
            ok = ok && std::abs(ratio - 1.0) <= 0.15;
            detail += preset_name(row.preset) + "x" + std::to_string(row.scale) + "=" + std::to_string(count) + " ";
        }
        const ModelConfig config = small_config(2);
        std::size_t total = 0;
        for (const auto& [path, t] : init_parameters(config, 0)) total += t.size();
        return Outcome{ok && total == param_count(config), detail};
    });

    checks.emplace_back("weight file round trip and corruption", [&] {
        const ModelConfig config = small_config(4);
        const ParameterStore store = init_parameters(config, rng());
        auto bytes = encode_weights(config, store);
        const LoadedWeights loaded = decode_weights(bytes);
        bool same = loaded.store.size() == store.size();
        for (const auto& [path, t] : store) same = same && bitwise_equal(loaded.store.at(path), t);
        bytes[bytes.size() / 2] ^= 0x10;
        bool crc_caught = false;
        try {
            decode_weights(bytes);
        } catch (const IoError& e) {
            crc_caught = e.kind() == IoErrorKind::CrcMismatch;
        }
        return Outcome{same && crc_caught, ""};
    });

    std::vector<CheckResult> results;
    for (auto& [name, check] : checks) {
        CheckResult result{name, false, ""};
        try {
            const Outcome outcome = check();
            result.passed = outcome.passed;
            result.detail = outcome.detail;
        } catch (const std::exception& e) {
            result.detail = std::string("exception: ") + e.what();
        }
        results.push_back(std::move(result));
    }
    return results;
}

} // namespace cvh
