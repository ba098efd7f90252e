#include <gtest/gtest.h>
#include <png.h>
#include <zlib.h>

#include <cstring>
#include <fstream>
#include <random>

#include "cvhssr/io.hpp"
#include "oracle.hpp"

using namespace cvh;
namespace fs = std::filesystem;

namespace {

// Writes `pixels` (row-major, interleaved) with libpng in the requested format.
void write_raw_png(const fs::path& path, std::uint32_t format, std::uint32_t w, std::uint32_t h, const void* pixels) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = w;
    image.height = h;
    image.format = format;
    ASSERT_TRUE(png_image_write_to_file(&image, path.c_str(), 0, pixels, 0, nullptr)) << image.message;
}

void write_rgb(const fs::path& path, std::size_t w, std::size_t h, std::uint8_t value = 128) {
    std::vector<std::uint8_t> px(w * h * 3, value);
    write_raw_png(path, PNG_FORMAT_RGB, static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h), px.data());
}

IoErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const IoError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no IoError thrown";
    return IoErrorKind::WriteFailed;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Byte-level encoder written from the format description.
std::vector<std::uint8_t> reference_encoding(const ModelConfig& config, const ParameterStore& store) {
    std::vector<std::uint8_t> out{'C', 'V', 'H', 'W'};
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(config.channels));
    put_u32(out, static_cast<std::uint32_t>(config.num_blocks));
    put_u32(out, static_cast<std::uint32_t>(config.scale));
    const auto layout = parameter_layout(config);
    put_u32(out, static_cast<std::uint32_t>(layout.size()));
    for (const auto& slot : layout) {
        put_u32(out, static_cast<std::uint32_t>(slot.path.size()));
        out.insert(out.end(), slot.path.begin(), slot.path.end());
        const ParamTensor& t = store.at(slot.path);
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (float f : t.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(out, bits);
        }
    }
    put_u32(out, static_cast<std::uint32_t>(crc32(0L, out.data(), static_cast<uInt>(out.size()))));
    return out;
}

void restamp_crc(std::vector<std::uint8_t>& bytes) {
    bytes.resize(bytes.size() - 4);
    put_u32(bytes, static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(bytes.size()))));
}

ModelConfig small_config() {
    ModelConfig c;
    c.channels = 4;
    c.num_blocks = 1;
    c.scale = 2;
    return c;
}

} // namespace

TEST(Png, SaveLoadQuantizationBound) {
    oracle::TempDir dir;
    std::mt19937_64 rng(501);
    const Tensor x = oracle::random_tensor(rng, 3, 9, 14, 0.0f, 1.0f);
    save_png(x, dir / "x.png");
    const Tensor y = load_png(dir / "x.png");
    ASSERT_TRUE(y.same_shape(x));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(y.data()[i] - x.data()[i]), 1.0f / 510.0f + 1e-7f);
    const auto size = png_size(dir / "x.png");
    EXPECT_EQ(size.width, 14u);
    EXPECT_EQ(size.height, 9u);
}

TEST(Png, ClampsOnSave) {
    oracle::TempDir dir;
    Tensor x(3, 1, 2, std::vector<float>{-0.5f, 1.5f, 0.0f, 1.0f, 2.0f / 255.0f, 0.5f});
    save_png(x, dir / "c.png");
    const Tensor y = load_png(dir / "c.png");
    EXPECT_EQ(y.data()[0], 0.0f);
    EXPECT_EQ(y.data()[1], 1.0f);
    EXPECT_EQ(y.data()[4], 2.0f / 255.0f);
    EXPECT_EQ(y.data()[5], 128.0f / 255.0f);
}

TEST(Png, PureRed) {
    oracle::TempDir dir;
    const std::uint8_t red[] = {255, 0, 0, 255, 0, 0, 255, 0, 0, 255, 0, 0};
    write_raw_png(dir / "red.png", PNG_FORMAT_RGB, 2, 2, red);
    const Tensor t = load_png(dir / "red.png");
    EXPECT_EQ(t.shape_string(), "(3, 2, 2)");
    for (float v : t.channel(0)) EXPECT_EQ(v, 1.0f);
    for (float v : t.channel(1)) EXPECT_EQ(v, 0.0f);
    for (float v : t.channel(2)) EXPECT_EQ(v, 0.0f);
}

TEST(Png, ExactByteMapping) {
    oracle::TempDir dir;
    std::vector<std::uint8_t> px(256 * 3);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i / 3);
    write_raw_png(dir / "ramp.png", PNG_FORMAT_RGB, 256, 1, px.data());
    const Tensor t = load_png(dir / "ramp.png");
    for (std::size_t x = 0; x < 256; ++x) EXPECT_EQ(t.at(1, 0, x), static_cast<float>(x) / 255.0f);
}

TEST(Png, ErrorCategories) {
    oracle::TempDir dir;
    EXPECT_EQ(kind_of([&] { load_png(dir / "absent.png"); }), IoErrorKind::NotFound);

    std::vector<std::uint16_t> deep(2 * 2 * 3, 1000);
    write_raw_png(dir / "deep.png", PNG_FORMAT_LINEAR_RGB, 2, 2, deep.data());
    EXPECT_EQ(kind_of([&] { load_png(dir / "deep.png"); }), IoErrorKind::UnsupportedFormat);

    std::vector<std::uint8_t> gray(4, 7);
    write_raw_png(dir / "gray.png", PNG_FORMAT_GRAY, 2, 2, gray.data());
    EXPECT_EQ(kind_of([&] { load_png(dir / "gray.png"); }), IoErrorKind::NotRgb);

    std::vector<std::uint8_t> rgba(2 * 2 * 4, 9);
    write_raw_png(dir / "rgba.png", PNG_FORMAT_RGBA, 2, 2, rgba.data());
    EXPECT_EQ(kind_of([&] { load_png(dir / "rgba.png"); }), IoErrorKind::NotRgb);

    std::ofstream(dir / "junk.png") << "this is not a png file at all";
    EXPECT_EQ(kind_of([&] { load_png(dir / "junk.png"); }), IoErrorKind::CorruptImage);

    write_rgb(dir / "cut.png", 32, 32);
    auto bytes = read_bytes(dir / "cut.png");
    bytes.resize(bytes.size() / 2);
    std::ofstream(dir / "cut.png", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    EXPECT_EQ(kind_of([&] { load_png(dir / "cut.png"); }), IoErrorKind::CorruptImage);
}

TEST(Png, FailedWriteLeavesNothing) {
    oracle::TempDir dir;
    EXPECT_EQ(kind_of([&] { save_png(Tensor(3, 2, 2), dir / "missing" / "x.png"); }), IoErrorKind::WriteFailed);
    EXPECT_THROW(save_png(Tensor(1, 2, 2), dir / "one.png"), std::invalid_argument);
    EXPECT_TRUE(fs::is_empty(dir.path()));
}

TEST(WriteAtomic, RemovesTemporaryOnFailure) {
    oracle::TempDir dir;
    EXPECT_THROW(write_file_atomic(dir / "out.bin",
                                   [](const fs::path& tmp) {
                                       std::ofstream(tmp) << "partial";
                                       throw std::runtime_error("boom");
                                   }),
                 std::runtime_error);
    EXPECT_TRUE(fs::is_empty(dir.path()));
}

TEST(Weights, EncodingMatchesFormatByteForByte) {
    const auto config = small_config();
    const auto store = oracle::random_store(config, 21);
    EXPECT_EQ(encode_weights(config, store), reference_encoding(config, store));
}

TEST(Weights, RoundTripPresetT) {
    oracle::TempDir dir;
    const auto config = ModelConfig::preset(Preset::Tiny, 2);
    const auto store = init_parameters(config, 7);
    write_weights(config, store, dir / "t.cvhw");
    const LoadedWeights loaded = read_weights(dir / "t.cvhw");
    EXPECT_EQ(loaded.config.channels, 48u);
    EXPECT_EQ(loaded.config.num_blocks, 16u);
    EXPECT_EQ(loaded.config.scale, 2u);
    ASSERT_EQ(loaded.store.size(), store.size());
    for (const auto& [path, t] : store) EXPECT_TRUE(bitwise_equal(loaded.store.at(path), t)) << path;
    EXPECT_EQ(fs::file_size(dir / "t.cvhw"), encode_weights(config, store).size());
}

TEST(Weights, PreservesSpecialFloatBits) {
    const auto config = small_config();
    auto store = oracle::random_store(config, 22);
    store.at("shallow.bias").data[0] = -0.0f;
    store.at("shallow.bias").data[1] = std::numeric_limits<float>::denorm_min();
    const auto loaded = decode_weights(encode_weights(config, store));
    EXPECT_TRUE(bitwise_equal(loaded.store.at("shallow.bias"), store.at("shallow.bias")));
}

TEST(Weights, FlippedPayloadByteIsCrcError) {
    const auto bytes = encode_weights(small_config(), oracle::random_store(small_config(), 23));
    for (std::size_t pos : {bytes.size() / 2, bytes.size() - 10, std::size_t{30}}) {
        auto bad = bytes;
        bad[pos] ^= 0x10;
        const IoErrorKind k = kind_of([&] { decode_weights(bad); });
        EXPECT_TRUE(k == IoErrorKind::CrcMismatch || k == IoErrorKind::Truncated || k == IoErrorKind::Malformed) << pos;
    }
    // A byte inside float data only ever shows up as a CRC failure.
    auto bad = bytes;
    bad[bytes.size() - 6] ^= 0x01;
    EXPECT_EQ(kind_of([&] { decode_weights(bad); }), IoErrorKind::CrcMismatch);
    auto crc = bytes;
    crc.back() ^= 0x80;
    EXPECT_EQ(kind_of([&] { decode_weights(crc); }), IoErrorKind::CrcMismatch);
}

TEST(Weights, DeclaredCountBeyondContentIsTruncation) {
    // Hand-built file declaring 5 tensors while carrying 4.
    std::vector<std::uint8_t> f{'C', 'V', 'H', 'W'};
    put_u32(f, 1);
    put_u32(f, 4);
    put_u32(f, 1);
    put_u32(f, 2);
    put_u32(f, 5);
    for (int i = 0; i < 4; ++i) {
        const std::string name = "t" + std::to_string(i);
        put_u32(f, static_cast<std::uint32_t>(name.size()));
        f.insert(f.end(), name.begin(), name.end());
        put_u32(f, 1);
        put_u32(f, 2);
        put_u32(f, 0);
        put_u32(f, 0);
    }
    put_u32(f, static_cast<std::uint32_t>(crc32(0L, f.data(), static_cast<uInt>(f.size()))));
    EXPECT_EQ(kind_of([&] { decode_weights(f); }), IoErrorKind::Truncated);

    auto real = encode_weights(small_config(), oracle::random_store(small_config(), 24));
    real[20] += 1;
    restamp_crc(real);
    EXPECT_EQ(kind_of([&] { decode_weights(real); }), IoErrorKind::Truncated);
}

TEST(Weights, EveryTruncationIsDetected) {
    const auto bytes = encode_weights(small_config(), oracle::random_store(small_config(), 25));
    for (std::size_t len = 4; len < bytes.size(); len += 1 + len / 7) {
        const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + len);
        EXPECT_EQ(kind_of([&] { decode_weights(cut); }), IoErrorKind::Truncated) << len;
    }
}

TEST(Weights, HeaderErrors) {
    auto bytes = encode_weights(small_config(), oracle::random_store(small_config(), 26));
    auto magic = bytes;
    magic[0] = 'X';
    EXPECT_EQ(kind_of([&] { decode_weights(magic); }), IoErrorKind::BadMagic);
    auto version = bytes;
    version[4] = 2;
    EXPECT_EQ(kind_of([&] { decode_weights(version); }), IoErrorKind::UnsupportedVersion);
    EXPECT_EQ(kind_of([&] { decode_weights(std::vector<std::uint8_t>{'C', 'V'}); }), IoErrorKind::Truncated);
    auto trailing = bytes;
    trailing.insert(trailing.end() - 4, std::uint8_t{0});
    restamp_crc(trailing);
    EXPECT_EQ(kind_of([&] { decode_weights(trailing); }), IoErrorKind::Malformed);
}

TEST(Weights, ShapeErrorsAfterValidCrc) {
    const auto config = small_config();
    auto store = oracle::random_store(config, 27);
    auto& t = store.at("blocks.0.chimb.pw_expand1.weight");
    std::swap(t.shape[0], t.shape[1]);
    // Hand-encode the bad store; the engine's encoder refuses it.
    EXPECT_THROW(encode_weights(config, store), std::exception);
    EXPECT_EQ(kind_of([&] { decode_weights(reference_encoding(config, store)); }), IoErrorKind::ShapeMismatch);

    auto missing = oracle::random_store(config, 28);
    const auto good = reference_encoding(config, missing);
    // Drop the last tensor record (reconstruction.bias) and fix count and CRC.
    const std::string last = "reconstruction.bias";
    const std::size_t record = 4 + last.size() + 4 + 4 + missing.at(last).size() * 4;
    std::vector<std::uint8_t> cut(good.begin(), good.end() - 4 - record);
    cut[20] -= 1;
    put_u32(cut, 0);
    restamp_crc(cut);
    EXPECT_EQ(kind_of([&] { decode_weights(cut); }), IoErrorKind::ShapeMismatch);
}

TEST(Weights, MissingFileAndFailedWrite) {
    oracle::TempDir dir;
    EXPECT_EQ(kind_of([&] { read_weights(dir / "none.cvhw"); }), IoErrorKind::NotFound);
    const auto config = small_config();
    EXPECT_EQ(kind_of([&] { write_weights(config, init_parameters(config, 1), dir / "no" / "w.cvhw"); }),
              IoErrorKind::WriteFailed);
}

TEST(Dataset, EmptyDirectory) {
    oracle::TempDir dir;
    const auto scan = scan_dataset(dir.path(), 2);
    EXPECT_TRUE(scan.entries.empty());
    EXPECT_TRUE(scan.warnings.empty());
    EXPECT_EQ(kind_of([&] { scan_dataset(dir / "nope", 2); }), IoErrorKind::NotFound);
}

TEST(Dataset, ValidAndInvalidScenes) {
    oracle::TempDir dir;
    auto scene = [&](const std::string& name, std::size_t lw, std::size_t lh, std::size_t hw, std::size_t hh) {
        fs::create_directories(dir / name);
        write_rgb(dir / name / "lr0.png", lw, lh);
        write_rgb(dir / name / "lr1.png", lw, lh);
        write_rgb(dir / name / "hr0.png", hw, hh);
        write_rgb(dir / name / "hr1.png", hw, hh);
    };
    scene("b_ok", 4, 3, 16, 12);
    scene("a_ok", 5, 5, 20, 20);
    scene("c_bad", 4, 4, 12, 12);
    fs::create_directories(dir / "d_partial");
    write_rgb(dir / "d_partial" / "lr0.png", 2, 2);
    const auto scan = scan_dataset(dir.path(), 4);
    ASSERT_EQ(scan.entries.size(), 2u);
    EXPECT_EQ(scan.entries[0].scene, "a_ok");
    EXPECT_EQ(scan.entries[1].scene, "b_ok");
    EXPECT_EQ(scan.entries[1].hr_right, dir / "b_ok" / "hr1.png");
    ASSERT_EQ(scan.warnings.size(), 2u);
    EXPECT_NE(scan.warnings[0].find("c_bad"), std::string::npos);
    EXPECT_NE(scan.warnings[1].find("d_partial"), std::string::npos);

    const auto as_x2 = scan_dataset(dir.path(), 2);
    EXPECT_TRUE(as_x2.entries.empty());
}

TEST(Dataset, BenchmarkSplitLayout) {
    oracle::TempDir dir;
    fs::create_directories(dir / "hr" / "0001");
    fs::create_directories(dir / "lr_x2" / "0001");
    write_rgb(dir / "hr" / "0001" / "hr0.png", 8, 6);
    write_rgb(dir / "hr" / "0001" / "hr1.png", 8, 6);
    write_rgb(dir / "lr_x2" / "0001" / "lr0.png", 4, 3);
    write_rgb(dir / "lr_x2" / "0001" / "lr1.png", 4, 3);
    const auto scan = scan_dataset(dir.path(), 2);
    ASSERT_EQ(scan.entries.size(), 1u);
    EXPECT_EQ(scan.entries[0].scene, "0001");
    EXPECT_EQ(scan.entries[0].lr_left, dir / "lr_x2" / "0001" / "lr0.png");
}
