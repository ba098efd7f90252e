#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "cvhssr/model.hpp"
#include "cvhssr/ops.hpp"
#include "cvhssr/parallel.hpp"
#include "oracle.hpp"

using namespace cvh;

namespace {

ModelConfig small_config(std::size_t scale = 2) {
    ModelConfig c;
    c.channels = 8;
    c.num_blocks = 2;
    c.scale = scale;
    return c;
}

StereoPair random_pair(std::mt19937_64& rng, std::size_t h, std::size_t w) {
    return {oracle::random_tensor(rng, 3, h, w, 0.0f, 1.0f), oracle::random_tensor(rng, 3, h, w, 0.0f, 1.0f)};
}

std::size_t conv_size(std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; }

} // namespace

TEST(Config, PresetsAndValidation) {
    const auto t = ModelConfig::preset(Preset::Tiny, 2);
    EXPECT_EQ(t.channels, 48u);
    EXPECT_EQ(t.num_blocks, 16u);
    const auto s = ModelConfig::preset(Preset::Small, 4);
    EXPECT_EQ(s.channels, 64u);
    EXPECT_EQ(s.num_blocks, 32u);
    EXPECT_EQ(s.scale, 4u);
    EXPECT_EQ(s.matching_preset(), Preset::Small);
    EXPECT_EQ(small_config().matching_preset(), std::nullopt);
    EXPECT_THROW(ModelConfig::preset(Preset::Tiny, 3), std::invalid_argument);
    ModelConfig odd = small_config();
    odd.channels = 7;
    EXPECT_THROW(odd.validate(), std::invalid_argument);
    EXPECT_EQ(parse_preset("T"), Preset::Tiny);
    EXPECT_EQ(parse_preset("small"), Preset::Small);
    EXPECT_EQ(parse_preset("x"), std::nullopt);
}

TEST(ParamCount, WithinTolerancesOfPublishedSizes) {
    const std::pair<ModelConfig, double> rows[] = {{ModelConfig::preset(Preset::Tiny, 2), 0.66e6},
                                                   {ModelConfig::preset(Preset::Tiny, 4), 0.68e6},
                                                   {ModelConfig::preset(Preset::Small, 2), 2.22e6},
                                                   {ModelConfig::preset(Preset::Small, 4), 2.24e6}};
    for (const auto& [config, published] : rows) {
        const double n = static_cast<double>(param_count(config));
        EXPECT_LE(std::abs(n - published), 0.15 * published) << n;
    }
}

TEST(ParamCount, ScaleDifferenceIsReconstructionConv) {
    const auto t2 = ModelConfig::preset(Preset::Tiny, 2), t4 = ModelConfig::preset(Preset::Tiny, 4);
    EXPECT_EQ(param_count(t4) - param_count(t2), conv_size(48, 48, 3) - conv_size(48, 12, 3));
}

TEST(ParamCount, EqualsStoreSizeAndBreakdown) {
    for (auto config : {small_config(), ModelConfig::preset(Preset::Tiny, 2), ModelConfig::preset(Preset::Small, 4)}) {
        std::size_t from_layout = 0;
        for (const auto& slot : parameter_layout(config)) from_layout += element_count(slot.shape);
        std::size_t from_breakdown = 0;
        for (const auto& g : param_breakdown(config)) from_breakdown += g.count;
        EXPECT_EQ(from_layout, param_count(config));
        EXPECT_EQ(from_breakdown, param_count(config));
    }
    std::size_t from_store = 0;
    for (const auto& [path, t] : init_parameters(small_config(), 1)) from_store += t.size();
    EXPECT_EQ(from_store, param_count(small_config()));
}

TEST(Layout, CanonicalPathsAreUnique) {
    const auto layout = parameter_layout(small_config());
    std::set<std::string> seen;
    for (const auto& slot : layout) EXPECT_TRUE(seen.insert(slot.path).second) << slot.path;
    EXPECT_EQ(layout.front().path, "shallow.weight");
    EXPECT_EQ(layout.back().path, "reconstruction.bias");
    EXPECT_TRUE(seen.count("blocks.1.chimb.pw_expand1.weight"));
    EXPECT_TRUE(seen.count("blocks.0.cvim.left_to_right.q_dw.weight"));
    EXPECT_TRUE(seen.count("blocks.1.cvim.gamma_right"));
}

TEST(Init, DeterministicAndZeroScales) {
    const auto a = init_parameters(small_config(), 42), b = init_parameters(small_config(), 42);
    ASSERT_EQ(a.size(), b.size());
    for (const auto& [path, t] : a) EXPECT_TRUE(bitwise_equal(t, b.at(path))) << path;
    std::size_t gammas = 0;
    for (const auto& [path, t] : a) {
        if (path.find("gamma_") == std::string::npos) continue;
        ++gammas;
        for (float v : t.data) EXPECT_EQ(v, 0.0f);
    }
    EXPECT_EQ(gammas, 4u);
    EXPECT_EQ(a.at("blocks.0.chimb.ln1.weight").data, std::vector<float>(8, 1.0f));
    EXPECT_EQ(a.at("blocks.0.chimb.pw_out0.bias").data, std::vector<float>(8, 0.0f));
    const float bound = 1.0f / std::sqrt(27.0f);
    for (float v : a.at("shallow.weight").data) EXPECT_LE(std::abs(v), bound);

    const auto c = init_parameters(small_config(), 1), d = init_parameters(small_config(), 2);
    bool differs = false;
    for (const auto& [path, t] : c) differs = differs || !bitwise_equal(t, d.at(path));
    EXPECT_TRUE(differs);
}

TEST(BuildModel, AcceptsCompleteStore) {
    const auto config = ModelConfig::preset(Preset::Tiny, 2);
    EXPECT_NO_THROW(build_model(config, init_parameters(config, 3)));
}

TEST(BuildModel, NamesMissingPath) {
    auto store = init_parameters(small_config(), 3);
    store.erase("blocks.1.cvim.right_to_left.k_pw.bias");
    try {
        build_model(small_config(), store);
        FAIL() << "accepted incomplete store";
    } catch (const ParameterError& e) {
        EXPECT_EQ(e.path(), "blocks.1.cvim.right_to_left.k_pw.bias");
        EXPECT_NE(std::string(e.what()).find("blocks.1.cvim.right_to_left.k_pw.bias"), std::string::npos);
    }
}

TEST(BuildModel, NamesTransposedTensorWithBothShapes) {
    auto store = init_parameters(small_config(), 3);
    auto& t = store.at("blocks.0.chimb.pw_expand1.weight");
    std::swap(t.shape[0], t.shape[1]);
    try {
        build_model(small_config(), store);
        FAIL() << "accepted mis-shaped store";
    } catch (const ParameterError& e) {
        EXPECT_EQ(e.path(), "blocks.0.chimb.pw_expand1.weight");
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[8, 16, 1, 1]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[16, 8, 1, 1]"), std::string::npos) << msg;
    }
}

TEST(BuildModel, RejectsExtraneousPath) {
    auto store = init_parameters(small_config(), 3);
    store["blocks.0.chimb.extra.weight"] = ParamTensor({1});
    try {
        build_model(small_config(), store);
        FAIL();
    } catch (const ParameterError& e) {
        EXPECT_EQ(e.path(), "blocks.0.chimb.extra.weight");
    }
}

TEST(BuildModel, RoundTripsParameters) {
    const auto store = oracle::random_store(small_config(), 8);
    const Model m = build_model(small_config(), store);
    const auto back = m.parameters();
    ASSERT_EQ(back.size(), store.size());
    for (const auto& [path, t] : store) EXPECT_TRUE(bitwise_equal(back.at(path), t)) << path;
}

TEST(Forward, OutputShapePresetT) {
    const auto config = ModelConfig::preset(Preset::Tiny, 4);
    const Model m = build_model(config, init_parameters(config, 5));
    std::mt19937_64 rng(301);
    const StereoPair out = m.forward(random_pair(rng, 16, 24));
    EXPECT_EQ(out.left.shape_string(), "(3, 64, 96)");
    EXPECT_EQ(out.right.shape_string(), "(3, 64, 96)");
    EXPECT_TRUE(all_finite(out.left));
}

TEST(Forward, ShapesForOddSizes) {
    std::mt19937_64 rng(302);
    for (std::size_t s : {2, 4}) {
        const Model m = build_model(small_config(s), oracle::random_store(small_config(s), 6));
        for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {3, 7}, {5, 2}}) {
            const auto out = forward(m, random_pair(rng, h, w));
            EXPECT_EQ(out.left.height(), s * h);
            EXPECT_EQ(out.left.width(), s * w);
            EXPECT_EQ(out.right.channels(), 3u);
        }
    }
}

TEST(Forward, FreshModelIsolatesViews) {
    const Model m = build_model(small_config(), init_parameters(small_config(), 7));
    std::mt19937_64 rng(303);
    StereoPair a = random_pair(rng, 6, 9);
    StereoPair b = a;
    b.right = oracle::random_tensor(rng, 3, 6, 9, 0.0f, 1.0f);
    const auto oa = m.forward(a), ob = m.forward(b);
    EXPECT_TRUE(bitwise_equal(oa.left, ob.left));
    EXPECT_FALSE(bitwise_equal(oa.right, ob.right));
}

TEST(Forward, TrainedScalesCoupleViews) {
    const Model m = build_model(small_config(), oracle::random_store(small_config(), 9));
    std::mt19937_64 rng(304);
    StereoPair a = random_pair(rng, 6, 9);
    StereoPair b = a;
    b.right = oracle::random_tensor(rng, 3, 6, 9, 0.0f, 1.0f);
    EXPECT_FALSE(bitwise_equal(m.forward(a).left, m.forward(b).left));
}

TEST(Forward, SwapSymmetry) {
    std::mt19937_64 rng(305);
    const StereoPair in = random_pair(rng, 5, 8);
    const StereoPair swapped{in.right, in.left};
    // Fresh init and any store whose two view roles coincide.
    for (const auto& store : {init_parameters(small_config(), 10), oracle::view_symmetric(oracle::random_store(small_config(), 11))}) {
        const Model m = build_model(small_config(), store);
        const auto a = m.forward(in), b = m.forward(swapped);
        EXPECT_TRUE(bitwise_equal(a.left, b.right));
        EXPECT_TRUE(bitwise_equal(a.right, b.left));
    }
    // Arbitrary store: swapping the inputs together with the view roles.
    const auto store = oracle::random_store(small_config(), 12);
    const auto a = build_model(small_config(), store).forward(in);
    const auto b = build_model(small_config(), mirror_views(store)).forward(swapped);
    EXPECT_TRUE(bitwise_equal(a.left, b.right));
    EXPECT_TRUE(bitwise_equal(a.right, b.left));
}

TEST(Forward, AllZeroWeightsGiveBilinear) {
    auto store = init_parameters(small_config(4), 13);
    for (auto& [path, t] : store) {
        const bool norm_scale = path.find(".ln") != std::string::npos && path.ends_with(".weight");
        std::fill(t.data.begin(), t.data.end(), norm_scale ? 1.0f : 0.0f);
    }
    std::mt19937_64 rng(306);
    const StereoPair in = random_pair(rng, 5, 6);
    const auto out = build_model(small_config(4), store).forward(in);
    EXPECT_TRUE(bitwise_equal(out.left, bilinear_upsample(in.left, 4)));
    EXPECT_TRUE(bitwise_equal(out.right, bilinear_upsample(in.right, 4)));
}

TEST(Forward, DeterministicAcrossThreadCounts) {
    const std::size_t saved = num_threads();
    const Model m = build_model(small_config(), oracle::random_store(small_config(), 14));
    std::mt19937_64 rng(307);
    const StereoPair in = random_pair(rng, 7, 11);
    set_num_threads(1);
    const auto ref = m.forward(in);
    for (std::size_t t : {1, 2, 4, 7}) {
        set_num_threads(t);
        const auto out = m.forward(in);
        EXPECT_TRUE(bitwise_equal(out.left, ref.left)) << t;
        EXPECT_TRUE(bitwise_equal(out.right, ref.right)) << t;
    }
    set_num_threads(saved);
}

TEST(Forward, ConcurrentCallsOnSharedModel) {
    const Model m = build_model(small_config(), oracle::random_store(small_config(), 15));
    std::mt19937_64 rng(308);
    const StereoPair in = random_pair(rng, 6, 6);
    const auto ref = m.forward(in);
    std::vector<StereoPair> results(4);
    {
        std::vector<std::jthread> workers;
        for (std::size_t i = 0; i < results.size(); ++i) workers.emplace_back([&, i] { results[i] = m.forward(in); });
    }
    for (const auto& r : results) EXPECT_TRUE(bitwise_equal(r.left, ref.left));
}

TEST(Forward, RejectsBadInput) {
    const Model m = build_model(small_config(), init_parameters(small_config(), 16));
    EXPECT_THROW(m.forward({Tensor(3, 4, 4), Tensor(3, 4, 5)}), ShapeError);
    EXPECT_THROW(m.forward({Tensor(1, 4, 4), Tensor(1, 4, 4)}), ShapeError);
    Tensor bad(3, 4, 4, 0.5f);
    bad.at(1, 2, 2) = std::nanf("");
    EXPECT_THROW(m.forward({bad, Tensor(3, 4, 4)}), std::invalid_argument);
}

TEST(Tlc, FullWindowIsBitIdentical) {
    const Model m = build_model(small_config(), oracle::random_store(small_config(), 17));
    std::mt19937_64 rng(309);
    const StereoPair in = random_pair(rng, 12, 20);
    const auto plain = m.forward(in);
    const auto tlc = set_tlc(m, true, TlcWindow{12, 20}).forward(in);
    const auto huge = set_tlc(m, true, kDefaultTlcWindow).forward(in);
    EXPECT_TRUE(bitwise_equal(plain.left, tlc.left));
    EXPECT_TRUE(bitwise_equal(plain.right, tlc.right));
    EXPECT_TRUE(bitwise_equal(plain.left, huge.left));
}

TEST(Tlc, SmallWindowChangesOutputNotShape) {
    const Model m = build_model(small_config(), init_parameters(small_config(), 18));
    std::mt19937_64 rng(310);
    const StereoPair in = random_pair(rng, 32, 32);
    const auto plain = m.forward(in);
    const Model local = set_tlc(m, true, TlcWindow{8, 8});
    EXPECT_TRUE(local.config().tlc_enabled);
    const auto out = local.forward(in);
    EXPECT_TRUE(out.left.same_shape(plain.left));
    double diff = 0.0;
    for (std::size_t i = 0; i < out.left.size(); ++i) diff += std::abs(out.left.data()[i] - plain.left.data()[i]);
    EXPECT_GT(diff, 0.0);
    const auto off = set_tlc(local, false, TlcWindow{8, 8}).forward(in);
    EXPECT_TRUE(bitwise_equal(off.left, plain.left));
}
