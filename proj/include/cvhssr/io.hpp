#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvhssr/model.hpp"
#include "cvhssr/tensor.hpp"

namespace cvh {

enum class IoErrorKind {
    NotFound,
    Unreadable,
    UnsupportedFormat, // e.g. 16-bit PNG
    NotRgb,
    CorruptImage,
    BadMagic,
    UnsupportedVersion,
    Truncated,
    CrcMismatch,
    Malformed,
    ShapeMismatch,
    WriteFailed,
};

const char* to_string(IoErrorKind kind);

class IoError : public std::runtime_error {
public:
    IoError(IoErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    IoErrorKind kind() const { return kind_; }

private:
    IoErrorKind kind_;
};

// Runs `writer` against a temporary sibling of `path`, then renames it into
// place. On any failure the temporary is removed and nothing is left at `path`.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(const std::filesystem::path& tmp)>& writer);

// 8-bit RGB PNG -> (3, H, W) tensor with values v / 255.
Tensor load_png(const std::filesystem::path& path);
// Clamps to [0, 1] and quantizes with round(v * 255).
void save_png(const Tensor& image, const std::filesystem::path& path);

struct ImageSize {
    std::size_t width = 0;
    std::size_t height = 0;
};
ImageSize png_size(const std::filesystem::path& path);

// Weight container, all integers little-endian u32:
//   "CVHW" | version | channels | num_blocks | scale | tensor count |
//   per tensor: path length, UTF-8 path, rank, dims..., float32 data |
//   CRC-32 of every preceding byte.
inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::vector<std::uint8_t> encode_weights(const ModelConfig& config, const ParameterStore& store);

struct LoadedWeights {
    ModelConfig config;
    ParameterStore store;
};
LoadedWeights decode_weights(std::span<const std::uint8_t> bytes);

void write_weights(const ModelConfig& config, const ParameterStore& store, const std::filesystem::path& path);
LoadedWeights read_weights(const std::filesystem::path& path);

struct DatasetEntry {
    std::string scene;
    std::filesystem::path lr_left;
    std::filesystem::path lr_right;
    std::filesystem::path hr_left;
    std::filesystem::path hr_right;
};

struct DatasetScan {
    std::vector<DatasetEntry> entries; // sorted by scene id
    std::vector<std::string> warnings; // skipped scenes and why
};

// Accepts either <root>/<scene>/{lr0,lr1,hr0,hr1}.png or the benchmark split
// <root>/hr/<scene>/hr{0,1}.png + <root>/lr_x<scale>/<scene>/lr{0,1}.png.
DatasetScan scan_dataset(const std::filesystem::path& root, std::size_t scale);

} // namespace cvh
