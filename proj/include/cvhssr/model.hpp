#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cvhssr/blocks.hpp"
#include "cvhssr/tensor.hpp"

namespace cvh {

enum class Preset { Tiny, Small };

// Pooling window used by the test-time local converter. 1.5x the usual
// 30x90 low-resolution training crop.
inline constexpr TlcWindow kDefaultTlcWindow{45, 135};

struct ModelConfig {
    std::size_t channels = 48;
    std::size_t num_blocks = 16;
    std::size_t scale = 2;
    bool tlc_enabled = false;
    TlcWindow tlc_window = kDefaultTlcWindow;

    static ModelConfig preset(Preset preset, std::size_t scale);
    // Throws std::invalid_argument for scale outside {2, 4}, zero or odd sizes.
    void validate() const;
    std::optional<Preset> matching_preset() const;
};

// "t"/"T"/"tiny" or "s"/"S"/"small".
std::optional<Preset> parse_preset(std::string_view name);
std::string preset_name(Preset preset);

// Raised when a parameter store does not match a config. path() names the first offending entry.
class ParameterError : public std::invalid_argument {
public:
    ParameterError(std::string path, const std::string& message)
        : std::invalid_argument(message), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

using ParameterStore = std::map<std::string, ParamTensor>;

enum class ParamKind { ConvWeight, Bias, NormScale, NormShift, FusionScale };

struct ParamSlot {
    std::string path;
    std::vector<std::size_t> shape;
    ParamKind kind;
};

// Every parameter implied by a config, in canonical order.
std::vector<ParamSlot> parameter_layout(const ModelConfig& config);
void validate_store(const ModelConfig& config, const ParameterStore& store);

// Uniform(+-1/sqrt(fan_in)) conv weights, zero biases, identity layer norms and
// zero fusion scales. Bit-identical for equal seeds.
ParameterStore init_parameters(const ModelConfig& config, std::uint64_t seed);

std::size_t param_count(const ModelConfig& config);

struct ParamGroup {
    std::string name;
    std::size_t count;
};
std::vector<ParamGroup> param_breakdown(const ModelConfig& config);

// Exchanges the left/right roles of every cross-view module.
ParameterStore mirror_views(const ParameterStore& store);

struct StereoPair {
    Tensor left;
    Tensor right;

    // Throws ShapeError unless both views are (3, H, W) with equal shapes.
    void validate() const;
};

struct NetworkWeights {
    ConvLayer shallow;
    std::vector<ChimbParams> chimb;
    std::vector<CvimParams> cvim;
    ConvLayer reconstruction;
};

// Immutable two-branch network. Both views run through the same weights.
class Model {
public:
    const ModelConfig& config() const { return config_; }
    const NetworkWeights& weights() const { return *weights_; }

    StereoPair forward(const StereoPair& input) const;
    Model with_tlc(bool enabled, TlcWindow window) const;
    ParameterStore parameters() const;

private:
    friend Model build_model(const ModelConfig& config, ParameterStore store);
    Model(ModelConfig config, std::shared_ptr<const NetworkWeights> weights)
        : config_(config), weights_(std::move(weights)) {}

    ModelConfig config_;
    std::shared_ptr<const NetworkWeights> weights_;
};

Model build_model(const ModelConfig& config, ParameterStore store);
Model set_tlc(const Model& model, bool enabled, TlcWindow window);
StereoPair forward(const Model& model, const StereoPair& input);

} // namespace cvh
