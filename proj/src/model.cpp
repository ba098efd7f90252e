#include "cvhssr/model.hpp"

#include <cctype>
#include <cmath>
#include <random>
#include <set>
#include <type_traits>

#include "cvhssr/ops.hpp"

namespace cvh {

namespace {

constexpr std::size_t kImageChannels = 3;

NetworkWeights zero_network(const ModelConfig& config) {
    const std::size_t c = config.channels;
    NetworkWeights net;
    net.shallow = ConvLayer::zeros(ConvSpec::dense(kImageChannels, c, 3));
    net.chimb.assign(config.num_blocks, ChimbParams::zeros(c));
    net.cvim.assign(config.num_blocks, CvimParams::zeros(c));
    net.reconstruction = ConvLayer::zeros(ConvSpec::dense(c, kImageChannels * config.scale * config.scale, 3));
    return net;
}

template <typename Net, typename Fn>
void visit_network(Net& net, const Fn& fn) {
    using Param = std::conditional_t<std::is_const_v<Net>, const ParamTensor, ParamTensor>;
    fn(std::string("shallow.weight"), net.shallow.weight);
    fn(std::string("shallow.bias"), net.shallow.bias);
    for (std::size_t i = 0; i < net.chimb.size(); ++i) {
        const std::string prefix = "blocks." + std::to_string(i) + ".";
        for_each_param(net.chimb[i], [&](const std::string& name, Param& t) { fn(prefix + "chimb." + name, t); });
        for_each_param(net.cvim[i], [&](const std::string& name, Param& t) { fn(prefix + "cvim." + name, t); });
    }
    fn(std::string("reconstruction.weight"), net.reconstruction.weight);
    fn(std::string("reconstruction.bias"), net.reconstruction.bias);
}

ParamKind classify(const std::string& path, const std::vector<std::size_t>& shape) {
    if (shape.size() == 4) return ParamKind::ConvWeight;
    const auto dot = path.rfind('.');
    const std::string_view leaf = std::string_view(path).substr(dot == std::string::npos ? 0 : dot + 1);
    if (leaf.starts_with("gamma_")) return ParamKind::FusionScale;
    const auto prev = path.rfind('.', dot - 1);
    const std::string_view owner = std::string_view(path).substr(prev + 1, dot - prev - 1);
    if (owner.starts_with("ln")) return leaf == "weight" ? ParamKind::NormScale : ParamKind::NormShift;
    return ParamKind::Bias;
}

} // namespace

ModelConfig ModelConfig::preset(Preset preset, std::size_t scale) {
    ModelConfig config;
    if (preset == Preset::Tiny) {
        config.channels = 48;
        config.num_blocks = 16;
    } else {
        config.channels = 64;
        config.num_blocks = 32;
    }
    config.scale = scale;
    config.validate();
    return config;
}

void ModelConfig::validate() const {
    if (scale != 2 && scale != 4) throw std::invalid_argument("scale must be 2 or 4, got " + std::to_string(scale));
    if (channels == 0 || channels % 2 != 0)
        throw std::invalid_argument("channels must be a positive even number, got " + std::to_string(channels));
    if (num_blocks == 0) throw std::invalid_argument("num_blocks must be positive");
    if (tlc_window.height == 0 || tlc_window.width == 0) throw std::invalid_argument("TLC window must be positive");
}

std::optional<Preset> ModelConfig::matching_preset() const {
    if (channels == 48 && num_blocks == 16) return Preset::Tiny;
    if (channels == 64 && num_blocks == 32) return Preset::Small;
    return std::nullopt;
}

std::optional<Preset> parse_preset(std::string_view name) {
    std::string lower;
    for (char ch : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    if (lower == "t" || lower == "tiny") return Preset::Tiny;
    if (lower == "s" || lower == "small") return Preset::Small;
    return std::nullopt;
}

std::string preset_name(Preset preset) { return preset == Preset::Tiny ? "T" : "S"; }

std::vector<ParamSlot> parameter_layout(const ModelConfig& config) {
    config.validate();
    NetworkWeights net = zero_network(config);
    std::vector<ParamSlot> slots;
    visit_network(net, [&](const std::string& path, ParamTensor& t) {
        slots.push_back({path, t.shape, classify(path, t.shape)});
    });
    return slots;
}

void validate_store(const ModelConfig& config, const ParameterStore& store) {
    const auto layout = parameter_layout(config);
    std::set<std::string> expected;
    for (const auto& slot : layout) {
        expected.insert(slot.path);
        const auto it = store.find(slot.path);
        if (it == store.end()) throw ParameterError(slot.path, "missing parameter '" + slot.path + "'");
        const ParamTensor& t = it->second;
        if (t.shape != slot.shape) {
            throw ParameterError(slot.path, "parameter '" + slot.path + "' has shape " + t.shape_string() +
                                                ", expected " + shape_to_string(slot.shape));
        }
        if (t.data.size() != element_count(slot.shape)) {
            throw ParameterError(slot.path, "parameter '" + slot.path + "' data length does not match its shape");
        }
    }
    for (const auto& [path, tensor] : store) {
        if (!expected.contains(path)) throw ParameterError(path, "unexpected parameter '" + path + "'");
    }
}

ParameterStore init_parameters(const ModelConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParameterStore store;
    for (const auto& slot : parameter_layout(config)) {
        ParamTensor t(slot.shape);
        switch (slot.kind) {
        case ParamKind::ConvWeight: {
            const std::size_t fan_in = slot.shape[1] * slot.shape[2] * slot.shape[3];
            const float bound = static_cast<float>(1.0 / std::sqrt(static_cast<double>(fan_in)));
            for (auto& w : t.data) {
                // top 24 bits -> uniform [0, 1), independent of the library's distributions
                const float u = static_cast<float>(rng() >> 40) * 0x1p-24f;
                w = (2.0f * u - 1.0f) * bound;
            }
            break;
        }
        case ParamKind::NormScale:
            std::fill(t.data.begin(), t.data.end(), 1.0f);
            break;
        case ParamKind::Bias:
        case ParamKind::NormShift:
        case ParamKind::FusionScale:
            break;
        }
        store.emplace(slot.path, std::move(t));
    }
    return store;
}

std::size_t param_count(const ModelConfig& config) {
    std::size_t total = 0;
    for (const auto& slot : parameter_layout(config)) total += element_count(slot.shape);
    return total;
}

std::vector<ParamGroup> param_breakdown(const ModelConfig& config) {
    std::vector<ParamGroup> groups{{"shallow", 0}, {"chimb", 0}, {"cvim", 0}, {"reconstruction", 0}};
    for (const auto& slot : parameter_layout(config)) {
        const std::size_t n = element_count(slot.shape);
        if (slot.path.starts_with("shallow.")) {
            groups[0].count += n;
        } else if (slot.path.find(".chimb.") != std::string::npos) {
            groups[1].count += n;
        } else if (slot.path.find(".cvim.") != std::string::npos) {
            groups[2].count += n;
        } else {
            groups[3].count += n;
        }
    }
    return groups;
}

ParameterStore mirror_views(const ParameterStore& store) {
    auto swap_roles = [](const std::string& path) {
        const auto cvim = path.find(".cvim.");
        if (cvim == std::string::npos) return path;
        const std::string head = path.substr(0, cvim + 6);
        std::string tail = path.substr(cvim + 6);
        static const std::pair<std::string, std::string> kPairs[] = {
            {"ln_left.", "ln_right."},
            {"left_to_right.", "right_to_left."},
            {"gamma_left", "gamma_right"},
        };
        for (const auto& [a, b] : kPairs) {
            if (tail.starts_with(a)) return head + b + tail.substr(a.size());
            if (tail.starts_with(b)) return head + a + tail.substr(b.size());
        }
        return path;
    };
    ParameterStore out;
    for (const auto& [path, tensor] : store) out.emplace(swap_roles(path), tensor);
    return out;
}

void StereoPair::validate() const {
    if (left.channels() != kImageChannels)
        throw ShapeError("left view must have 3 channels, got shape " + left.shape_string());
    if (right.channels() != kImageChannels)
        throw ShapeError("right view must have 3 channels, got shape " + right.shape_string());
    if (left.height() != right.height())
        throw ShapeError("view height mismatch: left " + left.shape_string() + " vs right " + right.shape_string());
    if (left.width() != right.width())
        throw ShapeError("view width mismatch: left " + left.shape_string() + " vs right " + right.shape_string());
}

Model build_model(const ModelConfig& config, ParameterStore store) {
    config.validate();
    validate_store(config, store);
    auto net = std::make_shared<NetworkWeights>(zero_network(config));
    visit_network(*net, [&](const std::string& path, ParamTensor& t) { t = std::move(store.at(path)); });
    return Model(config, std::move(net));
}

StereoPair Model::forward(const StereoPair& input) const {
    input.validate();
    if (!all_finite(input.left) || !all_finite(input.right)) {
        throw std::invalid_argument("forward: input contains non-finite values");
    }
    const NetworkWeights& net = *weights_;
    const std::optional<TlcWindow> tlc = config_.tlc_enabled ? std::optional(config_.tlc_window) : std::nullopt;

    Tensor left = net.shallow(input.left);
    Tensor right = net.shallow(input.right);
    for (std::size_t i = 0; i < config_.num_blocks; ++i) {
        left = chimb_forward(left, net.chimb[i], tlc);
        right = chimb_forward(right, net.chimb[i], tlc);
        auto fused = cvim_forward(left, right, net.cvim[i]);
        left = std::move(fused.first);
        right = std::move(fused.second);
    }
    const std::size_t s = config_.scale;
    return {add(pixel_shuffle(net.reconstruction(left), s), bilinear_upsample(input.left, s)),
            add(pixel_shuffle(net.reconstruction(right), s), bilinear_upsample(input.right, s))};
}

Model Model::with_tlc(bool enabled, TlcWindow window) const {
    if (window.height == 0 || window.width == 0) throw std::invalid_argument("TLC window must be positive");
    ModelConfig config = config_;
    config.tlc_enabled = enabled;
    config.tlc_window = window;
    return Model(config, weights_);
}

ParameterStore Model::parameters() const {
    ParameterStore store;
    visit_network(*weights_, [&](const std::string& path, const ParamTensor& t) { store.emplace(path, t); });
    return store;
}

Model set_tlc(const Model& model, bool enabled, TlcWindow window) { return model.with_tlc(enabled, window); }

StereoPair forward(const Model& model, const StereoPair& input) { return model.forward(input); }

} // namespace cvh
