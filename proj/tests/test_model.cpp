#include "support/oracles.hpp"

#include "ocmp/checkpoint.hpp"
#include "ocmp/compress.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>

using namespace ocmp;

namespace {

bool has_group(const ModelGraph& m, std::vector<int> g) {
    return std::find(m.residual_groups.begin(), m.residual_groups.end(), g) != m.residual_groups.end();
}

}  // namespace

TEST(ModelZoo, RegistryBuildsValidGraphs) {
    for (const auto& arch : model_registry()) {
        const ModelGraph m = build_model(arch, 1.0, 4, 1);
        EXPECT_NO_THROW(validate_model(m)) << arch;
        const Tensor logits = infer_logits(m, oracle::random_images(3, m.input_shape, 2));
        EXPECT_EQ(logits.shape(), (Shape{3, 4})) << arch;
        EXPECT_TRUE(logits.all_finite());
    }
}

TEST(ModelZoo, UnknownArchitectureListsRegistry) {
    try {
        build_model("vgg", 1.0, 4, 1);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("toy_resnet"), std::string::npos);
    }
    EXPECT_THROW(build_model("toy_cnn", 1.0, 1, 1), ValidationError);
}

TEST(ModelZoo, WidthScalingHalvesChannels) {
    const ModelGraph m = build_model("toy_cnn", 0.5, 4, 1);
    EXPECT_EQ(m.layers[0].out_channels, 8);
    EXPECT_EQ(m.layers[3].out_channels, 16);
    EXPECT_EQ(m.layers[6].out_channels, 32);
    EXPECT_EQ(scaled_channels(16, 0.01), 1);
}

TEST(ModelZoo, ResidualGroupsTieSkipConnectedLayers) {
    const ModelGraph m = build_model("toy_resnet", 1.0, 4, 1);
    EXPECT_TRUE(has_group(m, {0, 4}));
    EXPECT_TRUE(has_group(m, {7, 11}));
    const auto src = channel_sources(m);
    EXPECT_EQ(src[5], 0);   // residual add carries the stem's channels
    EXPECT_EQ(src[12], 7);
}

TEST(ModelZoo, ShapeInferenceRejectsMismatch) {
    ModelGraph m = build_model("toy_cnn", 1.0, 4, 1);
    m.layers[3].in_channels = 5;
    EXPECT_THROW(infer_shapes(m), ShapeError);
}

TEST(ModelZoo, ValidationRejectsBadBits) {
    ModelGraph m = build_model("toy_mlp", 1.0, 4, 1);
    m.layers[0].weight_bits = 0;
    EXPECT_THROW(validate_model(m), ValidationError);
}

TEST(ModelZoo, ExitHeadsAttachInOrder) {
    const ModelGraph m = build_model("toy_cnn", 1.0, 4, 1);
    const int pos[] = {2, 5};
    const ModelGraph h = attach_exit_heads(m, pos, 3);
    ASSERT_EQ(h.exit_heads.size(), 2u);
    EXPECT_EQ(h.exit_heads[0].attach_index, 2);
    EXPECT_EQ(h.exit_heads[0].classifier().in_channels, 16);
    EXPECT_EQ(h.exit_heads[1].classifier().in_channels, 32);
    EXPECT_EQ(infer_all_logits(h, oracle::random_images(2, h.input_shape, 1)).size(), 3u);
    const int bad[] = {10};
    EXPECT_THROW(attach_exit_heads(m, bad, 3), ValidationError);
    const int unsorted[] = {5, 2};
    EXPECT_THROW(attach_exit_heads(m, unsorted, 3), ValidationError);
    EXPECT_EQ(parameter_count(h, true) - parameter_count(h, false), (16u * 4 + 4) + (32u * 4 + 4));
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const ModelGraph base = build_model("toy_resnet", 0.5, 4, 9);
    const int pos[] = {6};
    ModelGraph m = set_bit_widths(attach_exit_heads(base, pos, 2), 4, 6, oracle::random_images(4, base.input_shape, 1));
    m.meta["note"] = "x";
    const ModelGraph back = deserialize_checkpoint(serialize_checkpoint(m));
    EXPECT_TRUE(identical(m, back));
    EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(m));

    const auto path = (std::filesystem::temp_directory_path() / "ocmp_roundtrip.ckpt").string();
    save_checkpoint(m, path);
    EXPECT_TRUE(identical(load_checkpoint(path), m));
    std::remove(path.c_str());
}

TEST(Checkpoint, CorruptInputsGiveDistinctErrors) {
    const std::string good = serialize_checkpoint(build_model("toy_mlp", 1.0, 4, 1));
    auto message = [](const std::string& bytes) {
        try {
            deserialize_checkpoint(bytes);
        } catch (const CheckpointError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message("garbage").find("not a checkpoint"), std::string::npos);
    std::string v2 = good;
    v2[5] = '2';
    EXPECT_NE(message(v2).find("version mismatch"), std::string::npos);
    EXPECT_NE(message(good.substr(0, good.size() - 100)).find("truncated"), std::string::npos);
    EXPECT_NE(message(good + "abcd").find("trailing"), std::string::npos);

    // Declare a layer width that the stored parameters do not have.
    std::string bad = good;
    const auto at = bad.find("\"out\": 128");
    ASSERT_NE(at, std::string::npos);
    bad.replace(at, 10, "\"out\": 127");
    EXPECT_NE(message(bad).find("shape mismatch"), std::string::npos);
    EXPECT_THROW(load_checkpoint("/nonexistent/dir/file.ckpt"), Error);
}
