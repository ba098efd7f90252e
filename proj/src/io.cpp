#include "cvhssr/io.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <system_error>

namespace cvh {

namespace fs = std::filesystem;

const char* to_string(IoErrorKind kind) {
    switch (kind) {
    case IoErrorKind::NotFound: return "not found";
    case IoErrorKind::Unreadable: return "unreadable";
    case IoErrorKind::UnsupportedFormat: return "unsupported format";
    case IoErrorKind::NotRgb: return "not RGB";
    case IoErrorKind::CorruptImage: return "corrupt image";
    case IoErrorKind::BadMagic: return "bad magic";
    case IoErrorKind::UnsupportedVersion: return "unsupported version";
    case IoErrorKind::Truncated: return "truncated";
    case IoErrorKind::CrcMismatch: return "CRC mismatch";
    case IoErrorKind::Malformed: return "malformed";
    case IoErrorKind::ShapeMismatch: return "shape mismatch";
    case IoErrorKind::WriteFailed: return "write failed";
    }
    return "unknown";
}

void write_file_atomic(const fs::path& path, const std::function<void(const fs::path& tmp)>& writer) {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    fs::path tmp = path;
    tmp += ".tmp-" + std::to_string(rng() % 1000000000ULL);
    try {
        writer(tmp);
        std::error_code ec;
        fs::rename(tmp, path, ec);
        if (ec) throw IoError(IoErrorKind::WriteFailed, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
    } catch (...) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw;
    }
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::error_code ec;
    if (!fs::exists(path, ec)) throw IoError(IoErrorKind::NotFound, "file not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoErrorKind::Unreadable, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError(IoErrorKind::Unreadable, "read error on " + path.string());
    return bytes;
}

// Opens a PNG header; on success the caller owns `image` and must free it.
void begin_png(png_image& image, const fs::path& path) {
    std::error_code ec;
    if (!fs::exists(path, ec)) throw IoError(IoErrorKind::NotFound, "image not found: " + path.string());
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        const std::string message = image.message;
        png_image_free(&image);
        throw IoError(IoErrorKind::CorruptImage, "cannot decode PNG " + path.string() + ": " + message);
    }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFu) throw IoError(IoErrorKind::Malformed, std::string(what) + " does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
        crc = crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes_[pos_ + b]) << (8 * b);
        pos_ += 4;
        return v;
    }

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) {
        if (remaining() < n) {
            throw IoError(IoErrorKind::Truncated, std::string("weight file truncated while reading ") + what + " at byte " +
                                                      std::to_string(pos_));
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

constexpr std::uint8_t kMagic[4] = {'C', 'V', 'H', 'W'};
constexpr std::uint32_t kMaxRank = 8;

} // namespace

Tensor load_png(const fs::path& path) {
    png_image image;
    begin_png(image, path);
    if (image.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&image);
        throw IoError(IoErrorKind::UnsupportedFormat, "unsupported 16-bit PNG: " + path.string());
    }
    if (!(image.format & PNG_FORMAT_FLAG_COLOR) || (image.format & PNG_FORMAT_FLAG_ALPHA)) {
        png_image_free(&image);
        throw IoError(IoErrorKind::NotRgb, "PNG is not 8-bit RGB: " + path.string());
    }
    image.format = PNG_FORMAT_RGB;
    const std::size_t W = image.width;
    const std::size_t H = image.height;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        const std::string message = image.message;
        png_image_free(&image);
        throw IoError(IoErrorKind::CorruptImage, "cannot decode PNG " + path.string() + ": " + message);
    }
    Tensor out(3, H, W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                out.at(c, y, x) = static_cast<float>(pixels[(y * W + x) * 3 + c]) / 255.0f;
    return out;
}

void save_png(const Tensor& image, const fs::path& path) {
    if (image.channels() != 3) throw ShapeError("save_png: expected 3 channels, got " + image.shape_string());
    const std::size_t W = image.width();
    const std::size_t H = image.height();
    std::vector<std::uint8_t> pixels(W * H * 3);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
                pixels[(y * W + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    write_file_atomic(path, [&](const fs::path& tmp) {
        png_image png;
        std::memset(&png, 0, sizeof(png));
        png.version = PNG_IMAGE_VERSION;
        png.width = static_cast<png_uint_32>(W);
        png.height = static_cast<png_uint_32>(H);
        png.format = PNG_FORMAT_RGB;
        if (!png_image_write_to_file(&png, tmp.c_str(), 0, pixels.data(), 0, nullptr)) {
            const std::string message = png.message;
            png_image_free(&png);
            throw IoError(IoErrorKind::WriteFailed, "cannot write PNG " + path.string() + ": " + message);
        }
    });
}

ImageSize png_size(const fs::path& path) {
    png_image image;
    begin_png(image, path);
    ImageSize size{image.width, image.height};
    png_image_free(&image);
    return size;
}

std::vector<std::uint8_t> encode_weights(const ModelConfig& config, const ParameterStore& store) {
    try {
        validate_store(config, store);
    } catch (const ParameterError& e) {
        throw IoError(IoErrorKind::ShapeMismatch, e.what());
    }
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, kWeightFormatVersion);
    put_u32(out, checked_u32(config.channels, "channels"));
    put_u32(out, checked_u32(config.num_blocks, "num_blocks"));
    put_u32(out, checked_u32(config.scale, "scale"));
    // canonical layout order, so equal stores always encode to equal bytes
    const auto layout = parameter_layout(config);
    put_u32(out, checked_u32(layout.size(), "tensor count"));
    for (const auto& slot : layout) {
        const ParamTensor& t = store.at(slot.path);
        put_u32(out, checked_u32(slot.path.size(), "path length"));
        out.insert(out.end(), slot.path.begin(), slot.path.end());
        put_u32(out, checked_u32(t.shape.size(), "rank"));
        for (auto d : t.shape) put_u32(out, checked_u32(d, "dimension"));
        for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    put_u32(out, crc32_of(out));
    return out;
}

LoadedWeights decode_weights(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw IoError(IoErrorKind::Truncated, "weight file shorter than its magic");
    if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
        throw IoError(IoErrorKind::BadMagic, "not a weight file (bad magic)");
    }
    if (bytes.size() < 4 + 4 + 4) throw IoError(IoErrorKind::Truncated, "weight file truncated in header");
    Reader reader(bytes.first(bytes.size() - 4));
    reader.take(4, "magic");
    const std::uint32_t version = reader.u32("version");
    if (version != kWeightFormatVersion) {
        throw IoError(IoErrorKind::UnsupportedVersion, "unsupported weight format version " + std::to_string(version));
    }
    LoadedWeights loaded;
    loaded.config.channels = reader.u32("channels");
    loaded.config.num_blocks = reader.u32("num_blocks");
    loaded.config.scale = reader.u32("scale");
    const std::uint32_t count = reader.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t path_len = reader.u32("path length");
        const auto path_bytes = reader.take(path_len, "tensor path");
        std::string path(path_bytes.begin(), path_bytes.end());
        const std::uint32_t rank = reader.u32("rank");
        if (rank == 0 || rank > kMaxRank) {
            throw IoError(IoErrorKind::Malformed, "tensor '" + path + "' has invalid rank " + std::to_string(rank));
        }
        std::vector<std::size_t> shape(rank);
        std::size_t elements = 1;
        for (auto& d : shape) {
            d = reader.u32("dimension");
            elements *= d;
            if (elements > reader.remaining() / 4 + 1) {
                throw IoError(IoErrorKind::Truncated, "tensor '" + path + "' extends past the end of the file");
            }
        }
        const auto raw = reader.take(elements * 4, "tensor data");
        std::vector<float> data(elements);
        for (std::size_t e = 0; e < elements; ++e) {
            std::uint32_t v = 0;
            for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(raw[e * 4 + b]) << (8 * b);
            data[e] = std::bit_cast<float>(v);
        }
        if (loaded.store.contains(path)) throw IoError(IoErrorKind::Malformed, "duplicate tensor '" + path + "'");
        loaded.store.emplace(std::move(path), ParamTensor(std::move(shape), std::move(data)));
    }
    if (reader.remaining() != 0) {
        throw IoError(IoErrorKind::Malformed,
                      "weight file has " + std::to_string(reader.remaining()) + " unexpected bytes before the CRC");
    }
    const auto body = bytes.first(bytes.size() - 4);
    const auto tail = bytes.last(4);
    const std::uint32_t stored = static_cast<std::uint32_t>(tail[0]) | static_cast<std::uint32_t>(tail[1]) << 8 |
                                 static_cast<std::uint32_t>(tail[2]) << 16 | static_cast<std::uint32_t>(tail[3]) << 24;
    if (crc32_of(body) != stored) throw IoError(IoErrorKind::CrcMismatch, "weight file CRC mismatch");

    try {
        loaded.config.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(IoErrorKind::Malformed, std::string("weight file config invalid: ") + e.what());
    }
    try {
        validate_store(loaded.config, loaded.store);
    } catch (const ParameterError& e) {
        throw IoError(IoErrorKind::ShapeMismatch, e.what());
    }
    return loaded;
}

void write_weights(const ModelConfig& config, const ParameterStore& store, const fs::path& path) {
    const auto bytes = encode_weights(config, store);
    write_file_atomic(path, [&](const fs::path& tmp) {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(IoErrorKind::WriteFailed, "cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.close();
        if (!out) throw IoError(IoErrorKind::WriteFailed, "failed writing " + path.string());
    });
}

LoadedWeights read_weights(const fs::path& path) {
    const auto bytes = read_file(path);
    return decode_weights(bytes);
}

DatasetScan scan_dataset(const fs::path& root, std::size_t scale) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw IoError(IoErrorKind::NotFound, "dataset directory not found: " + root.string());

    const fs::path hr_root = root / "hr";
    const fs::path lr_root = root / ("lr_x" + std::to_string(scale));
    const bool split = fs::is_directory(hr_root, ec) && fs::is_directory(lr_root, ec);
    const fs::path listing = split ? hr_root : root;

    std::vector<std::string> scenes;
    try {
        for (const auto& item : fs::directory_iterator(listing)) {
            if (item.is_directory()) scenes.push_back(item.path().filename().string());
        }
    } catch (const fs::filesystem_error& e) {
        throw IoError(IoErrorKind::Unreadable, "cannot read dataset directory " + listing.string() + ": " + e.what());
    }
    std::sort(scenes.begin(), scenes.end());

    DatasetScan scan;
    for (const auto& scene : scenes) {
        DatasetEntry entry;
        entry.scene = scene;
        const fs::path lr_dir = split ? lr_root / scene : root / scene;
        const fs::path hr_dir = split ? hr_root / scene : root / scene;
        entry.lr_left = lr_dir / "lr0.png";
        entry.lr_right = lr_dir / "lr1.png";
        entry.hr_left = hr_dir / "hr0.png";
        entry.hr_right = hr_dir / "hr1.png";

        std::string missing;
        for (const auto* p : {&entry.lr_left, &entry.lr_right, &entry.hr_left, &entry.hr_right}) {
            if (!fs::is_regular_file(*p, ec)) missing += (missing.empty() ? "" : ", ") + p->filename().string();
        }
        if (!missing.empty()) {
            scan.warnings.push_back(scene + ": missing " + missing);
            continue;
        }
        try {
            const ImageSize l0 = png_size(entry.lr_left);
            const ImageSize l1 = png_size(entry.lr_right);
            const ImageSize h0 = png_size(entry.hr_left);
            const ImageSize h1 = png_size(entry.hr_right);
            if (l0.width != l1.width || l0.height != l1.height) {
                scan.warnings.push_back(scene + ": lr0/lr1 dimensions differ");
                continue;
            }
            if (h0.width != h1.width || h0.height != h1.height) {
                scan.warnings.push_back(scene + ": hr0/hr1 dimensions differ");
                continue;
            }
            if (h0.width != scale * l0.width || h0.height != scale * l0.height) {
                scan.warnings.push_back(scene + ": HR " + std::to_string(h0.width) + "x" + std::to_string(h0.height) +
                                        " is not " + std::to_string(scale) + "x LR " + std::to_string(l0.width) + "x" +
                                        std::to_string(l0.height) + " (dimension mismatch)");
                continue;
            }
        } catch (const IoError& e) {
            scan.warnings.push_back(scene + ": " + e.what());
            continue;
        }
        scan.entries.push_back(std::move(entry));
    }
    return scan;
}

} // namespace cvh
