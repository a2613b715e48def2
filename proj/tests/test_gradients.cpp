#include "support/oracles.hpp"

#include "ocmp/compress.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ocmp;

namespace {

// Passes when at least 95% of the sampled coordinates agree to 1e-4 relative.
void expect_gradients(const ModelGraph& m, oracle::LossKind loss, uint64_t seed, int64_t batch = 3) {
    const Tensor x = oracle::random_images(batch, m.input_shape, seed);
    const auto y = oracle::random_labels(batch, m.num_classes, seed + 1);
    const auto r = oracle::check_gradients(m, x, y, loss, 150, seed + 2);
    EXPECT_GE(r.pass_fraction(), 0.95) << m.arch << ": " << r.passed << "/" << r.coords << " worst " << r.worst;
}

ModelGraph quantized(const std::string& arch, int wb, int ab) {
    ModelGraph m = build_model(arch, 1.0, 4, 11);
    return set_bit_widths(m, wb, ab, oracle::random_images(16, m.input_shape, 5));
}

}  // namespace

TEST(GradientOracle, ToyMlpCrossEntropy) {
    expect_gradients(build_model("toy_mlp", 1.0, 4, 3), oracle::LossKind::CrossEntropy, 21);
}

TEST(GradientOracle, ToyCnnCrossEntropy) {
    expect_gradients(build_model("toy_cnn", 1.0, 4, 3), oracle::LossKind::CrossEntropy, 22);
}

TEST(GradientOracle, ToyResnetCrossEntropy) {
    expect_gradients(build_model("toy_resnet", 1.0, 4, 3), oracle::LossKind::CrossEntropy, 23);
}

TEST(GradientOracle, DistillationLoss) {
    expect_gradients(build_model("toy_cnn", 0.5, 4, 4), oracle::LossKind::Distillation, 24);
    expect_gradients(build_model("toy_mlp", 1.0, 4, 4), oracle::LossKind::Distillation, 25);
}

TEST(GradientOracle, StraightThroughQuantizedPaths) {
    expect_gradients(quantized("toy_cnn", 4, 4), oracle::LossKind::CrossEntropy, 26);
    expect_gradients(quantized("toy_mlp", 2, 3), oracle::LossKind::CrossEntropy, 27);
    expect_gradients(quantized("toy_resnet", 8, 8), oracle::LossKind::Distillation, 28);
}

TEST(GradientOracle, BinaryWeights) {
    expect_gradients(quantized("toy_mlp", 1, 32), oracle::LossKind::CrossEntropy, 29);
}

// Tanh, windowed average pooling and a dense layer on a rank-4 input.
TEST(GradientOracle, HandBuiltGraph) {
    ModelGraph m;
    m.arch = "custom";
    m.num_classes = 3;
    m.input_shape = ActShape{2, 8, 8, 4};
    LayerSpec c;
    c.kind = LayerKind::Conv2d;
    c.in_channels = 2;
    c.out_channels = 5;
    c.kernel = 3;
    c.stride = 2;
    c.pad = 1;
    LayerSpec t;
    t.kind = LayerKind::Tanh;
    LayerSpec p;
    p.kind = LayerKind::AvgPool;
    p.kernel = 2;
    LayerSpec d;
    d.kind = LayerKind::Dense;
    d.in_channels = 5 * 2 * 2;
    d.out_channels = 3;
    m.layers = {c, t, p, d};
    infer_shapes(m);
    init_layer(m.layers[0], 1);
    init_layer(m.layers[3], 2);
    std::mt19937_64 rng(3);
    std::normal_distribution<float> nd(0.0f, 0.1f);
    for (float& v : m.layers[3].bias.values()) v = nd(rng);
    validate_model(m);
    expect_gradients(m, oracle::LossKind::CrossEntropy, 30, 4);
}
