#include "support/oracles.hpp"

#include "ocmp/compress.hpp"
#include "ocmp/quant.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace ocmp;

TEST(Tensor, ConstructionChecksPayloadSize) {
    EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
    Tensor t({2, 3}, 1.5f);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(shape_numel({2, 3, 4}), 24);
    EXPECT_EQ(shape_str({2, 3}), "[2x3]");
}

TEST(Tensor, SliceAndGatherRows) {
    Tensor t({3, 2}, std::vector<float>{0, 1, 2, 3, 4, 5});
    const Tensor s = slice_rows(t, 1, 3);
    EXPECT_EQ(s.shape(), (Shape{2, 2}));
    EXPECT_EQ(s[0], 2.0f);
    const int64_t rows[] = {2, 0};
    const Tensor g = gather_rows(t, rows);
    EXPECT_EQ(g[0], 4.0f);
    EXPECT_EQ(g[3], 1.0f);
    EXPECT_TRUE(t.identical(Tensor({3, 2}, std::vector<float>{0, 1, 2, 3, 4, 5})));
}

TEST(Autograd, NonScalarLossRejected) {
    Tape tape;
    Var x = tape.leaf(Tensor({2}, 1.0f), true);
    EXPECT_THROW(backward(tape, x), ValidationError);
}

TEST(Autograd, SharedInputAccumulatesAndClosuresRunOnce) {
    Tape tape;
    Var x = tape.leaf(Tensor({1, 1}, std::vector<float>{3.0f}), true);
    Var y = ops::add(x, x);             // 2x
    Var z = ops::affine(y, 1.0f, 0.0f);  // still 2x
    Var w = ops::add(z, y);             // 4x
    Var loss = ops::weighted_sum(std::vector<Var>{w}, std::vector<float>{1.0f});
    backward(tape, loss);
    EXPECT_FLOAT_EQ(tape.grad(x)[0], 4.0f);
    EXPECT_EQ(tape.backward_visits(), 4u);  // y, z, w, loss
}

TEST(Autograd, UnreachedParameterGetsZeroGradient) {
    Tape tape;
    Var a = tape.leaf(Tensor({1, 1}, 2.0f), true);
    Var b = tape.leaf(Tensor({1, 3}, 1.0f), true);
    Var loss = ops::weighted_sum(std::vector<Var>{a}, std::vector<float>{2.0f});
    backward(tape, loss);
    const Var params[] = {a, b};
    const auto g = gradients(tape, params);
    EXPECT_FLOAT_EQ(g[0][0], 2.0f);
    EXPECT_EQ(g[1].shape(), (Shape{1, 3}));
    for (float v : g[1].values()) EXPECT_EQ(v, 0.0f);
}

TEST(Autograd, PrimitiveShapeErrors) {
    Tape tape;
    Var x = tape.constant(Tensor({1, 3, 4, 4}));
    Var w = tape.constant(Tensor({2, 2, 3, 3}));
    Var b = tape.constant(Tensor({2}));
    EXPECT_THROW(ops::conv2d(x, w, b, 1, 1), ShapeError);
    Var m1 = tape.constant(Tensor({2, 3}));
    Var m2 = tape.constant(Tensor({2, 3}));
    EXPECT_THROW(ops::matmul(m1, m2), ShapeError);
}

TEST(Autograd, CrossEntropyOfUniformLogits) {
    Tape tape;
    Var z = tape.constant(Tensor({2, 4}));
    const int labels[] = {1, 3};
    EXPECT_NEAR(ops::cross_entropy(z, labels).value()[0], std::log(4.0), 1e-6);
    const Tensor p = softmax_rows(Tensor({1, 3}, std::vector<float>{1, 2, 3}));
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-6);
    EXPECT_EQ(argmax_rows(Tensor({1, 3}, std::vector<float>{1, 5, 3}))[0], 1);
}

TEST(Sgd, MomentumUpdateRule) {
    Tensor p({2}, std::vector<float>{1.0f, -1.0f});
    Tensor* params[] = {&p};
    const Tensor g({2}, std::vector<float>{0.5f, 2.0f});
    std::vector<Tensor> vel;
    SgdConfig cfg{0.1f, 0.9f, 0};
    sgd_step(params, std::span<const Tensor>(&g, 1), cfg, vel);
    // v = -0.05, -0.2 ; p = 0.95, -1.2
    EXPECT_FLOAT_EQ(p[0], 0.95f);
    EXPECT_FLOAT_EQ(p[1], -1.2f);
    sgd_step(params, std::span<const Tensor>(&g, 1), cfg, vel);
    // v = 0.9 * -0.05 - 0.05 = -0.095
    EXPECT_FLOAT_EQ(p[0], 0.855f);
    EXPECT_THROW((SgdConfig{-1.0f, 0.9f, 0}.validate()), ValidationError);
}

TEST(Training, GlobalNormClipping) {
    std::vector<Tensor> g{Tensor({2}, std::vector<float>{3.0f, 0.0f}), Tensor({1}, std::vector<float>{4.0f})};
    clip_global_norm(g, 1.0f);
    EXPECT_NEAR(g[0][0], 0.6f, 1e-6);
    EXPECT_NEAR(g[1][0], 0.8f, 1e-6);
    clip_global_norm(g, 10.0f);  // already below the bound
    EXPECT_NEAR(g[1][0], 0.8f, 1e-6);
}

TEST(Distillation, AlphaOneIsCrossEntropy) {
    Tape tape;
    Var z = tape.constant(Tensor({2, 3}, std::vector<float>{0.3f, -1.0f, 2.0f, 1.5f, 0.1f, -0.4f}));
    const int labels[] = {2, 0};
    const Tensor teacher({2, 3}, std::vector<float>{5, 0, 0, 0, 5, 0});
    EXPECT_EQ(kd_loss(z, labels, teacher, 4.0f, 1.0f).value()[0], ops::cross_entropy(z, labels).value()[0]);
}

TEST(Distillation, IdenticalOutputsGiveZeroDivergence) {
    Tape tape;
    const Tensor logits({2, 3}, std::vector<float>{0.3f, -1.0f, 2.0f, 1.5f, 0.1f, -0.4f});
    Var z = tape.constant(logits);
    const int labels[] = {2, 0};
    EXPECT_NEAR(kd_loss(z, labels, logits, 1.0f, 0.0f).value()[0], 0.0, 1e-7);
}

TEST(Distillation, MatchesReferenceValue) {
    Tape tape;
    const Tensor logits({2, 3}, std::vector<float>{0.3f, -1.0f, 2.0f, 1.5f, 0.1f, -0.4f});
    const Tensor teacher({2, 3}, std::vector<float>{1.0f, 0.0f, 3.0f, -2.0f, 0.5f, 0.0f});
    const std::vector<int> labels{2, 0};
    const float got = kd_loss(tape.constant(logits), labels, teacher, 3.0f, 0.25f).value()[0];
    const double want = oracle::ref_kd(std::vector<double>(logits.values().begin(), logits.values().end()), labels,
                                       std::vector<double>(teacher.values().begin(), teacher.values().end()), 3, 3.0,
                                       0.25);
    EXPECT_NEAR(got, want, 1e-6);
}

TEST(Quantizer, WorkedExamples) {
    EXPECT_NEAR(quantize_k(0.4f, 2), 1.0 / 3.0, 1e-7);
    EXPECT_EQ(quantize_k(0.7f, 1), 1.0f);
    EXPECT_EQ(quantize_k(0.5f, 1), 1.0f);  // tie rounds away from zero
    for (int k : {1, 2, 5, 8, 16, 32}) {
        EXPECT_EQ(quantize_k(0.0f, k), 0.0f);
        EXPECT_EQ(quantize_k(1.0f, k), 1.0f);
    }
    EXPECT_EQ(quantize_k(-3.0f, 4), 0.0f);  // clipped first
    EXPECT_EQ(quantize_k(7.0f, 4), 1.0f);
    EXPECT_THROW(quantize_k(0.5f, 0), ValidationError);
    EXPECT_THROW(quantize_k(0.5f, 33), ValidationError);
}

TEST(Quantizer, PropertiesOverSampledInputs) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int k : {1, 2, 3, 4, 6, 8, 12, 16}) {
        const double n = std::ldexp(1.0, k) - 1.0;
        for (int i = 0; i < 10000; ++i) {
            const float x = u(rng), y = u(rng);
            const float q = quantize_k(x, k);
            const double units = static_cast<double>(q) * n;
            ASSERT_NEAR(units, std::round(units), 1e-3 * std::max(1.0, n / 1000.0)) << "k=" << k << " x=" << x;
            ASSERT_EQ(quantize_k(q, k), q) << "k=" << k;
            ASSERT_EQ(x <= y, x <= y && quantize_k(x, k) <= quantize_k(y, k)) << "k=" << k;
        }
    }
    for (int i = 0; i < 10000; ++i) {
        const float x = u(rng);
        ASSERT_LT(std::fabs(quantize_k(x, 32) - x), 1e-5f);
    }
}

TEST(Quantizer, BinaryWeightsUseMeanMagnitude) {
    const Tensor w({2}, std::vector<float>{0.5f, -0.3f});
    const Tensor q = quantize_weights(w, 1);
    EXPECT_FLOAT_EQ(q[0], 0.4f);
    EXPECT_FLOAT_EQ(q[1], -0.4f);
}

TEST(Quantizer, WeightsLandOnGrid) {
    std::mt19937_64 rng(5);
    std::normal_distribution<float> nd(0.0f, 0.7f);
    Tensor w({1000});
    for (float& v : w.values()) v = nd(rng);
    for (int b : {1, 2, 3, 4, 8}) {
        const Tensor q = quantize_weights(w, b);
        EXPECT_TRUE(on_weight_grid(q, b, weight_scale(w, b))) << b;
        Tape tape;
        const Tensor fq = fake_quant_weight(tape.leaf(w, true), b).value();
        for (size_t i = 0; i < w.size(); ++i) ASSERT_NEAR(fq[i], q[i], 1e-6f) << b;
    }
    EXPECT_FALSE(on_weight_grid(w, 4, weight_scale(w, 4)));
    EXPECT_TRUE(quantize_weights(w, 32).identical(w));
}

TEST(Quantizer, ActivationsClipToRange) {
    const Tensor x({4}, std::vector<float>{-1.0f, 0.26f, 0.74f, 3.0f});
    const Tensor q = quantize_activations(x, 2, 2.0f);
    EXPECT_FLOAT_EQ(q[0], 0.0f);
    EXPECT_NEAR(q[1], 2.0f / 3.0f * 0.0f, 1e-6);  // 0.13 of range -> level 0
    EXPECT_NEAR(q[2], 2.0f / 3.0f, 1e-6);          // 0.37 -> level 1
    EXPECT_FLOAT_EQ(q[3], 2.0f);
    EXPECT_THROW(quantize_activations(x, 4, 0.0f), ValidationError);
}

TEST(Quantizer, ThirtyTwoBitModelMatchesFloat) {
    const ModelGraph m = build_model("toy_cnn", 1.0, 4, 8);
    const Tensor x = oracle::random_images(8, m.input_shape, 1);
    const ModelGraph q = set_bit_widths(m, 32, 32, x);
    const Tensor a = infer_logits(m, x), b = infer_logits(q, x);
    for (size_t i = 0; i < a.size(); ++i) ASSERT_LT(std::fabs(a[i] - b[i]), 1e-5f);
}
