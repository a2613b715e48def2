#pragma once

#include "ocmp/autograd.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ocmp {

enum class LayerKind { Conv2d, Dense, Relu, Tanh, AvgPool, MaxPool, Flatten, ResidualAdd };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// Per-sample activation shape. Rank-2 activations carry h = w = 1.
struct ActShape {
    int64_t c = 0;
    int64_t h = 1;
    int64_t w = 1;
    int rank = 4;

    int64_t numel() const { return c * h * w; }
    bool operator==(const ActShape&) const = default;
};

std::string to_string(const ActShape& s);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    // conv2d: channels; dense: features.
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    // conv2d kernel, or pooling window (0 = global average).
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    // residual_add: index of the layer whose output is added.
    int skip_from = -1;
    int weight_bits = 32;
    int act_bits = 32;
    // Calibrated range of this layer's input activations, used when act_bits < 32.
    float act_range = 1.0f;

    ActShape in_shape;
    ActShape out_shape;
    Tensor weight;  // conv2d [out, in, k, k]; dense [out, in]
    Tensor bias;    // [out]

    bool has_params() const { return kind == LayerKind::Conv2d || kind == LayerKind::Dense; }
};

/// Global-average-pool followed by a dense classifier.
struct ExitHead {
    int attach_index = 0;
    std::vector<LayerSpec> layers;

    LayerSpec& classifier() { return layers.back(); }
    const LayerSpec& classifier() const { return layers.back(); }
};

struct ModelGraph {
    std::string arch;
    double width_multiplier = 1.0;
    int num_classes = 0;
    ActShape input_shape;
    uint64_t seed = 0;
    std::vector<LayerSpec> layers;
    // Layers whose output channels are tied by skip connections.
    std::vector<std::vector<int>> residual_groups;
    std::vector<ExitHead> exit_heads;
    // Free-form training metadata carried through checkpoints.
    std::map<std::string, std::string> meta;

    int final_classifier() const;
    std::vector<int> mac_layers() const;
    bool quantized() const;
};

const std::vector<std::string>& model_registry();

// Channel count for a base width, rounded and clamped to at least 1.
int64_t scaled_channels(int64_t base, double multiplier);

ModelGraph build_model(const std::string& arch, double width_multiplier, int num_classes, uint64_t seed,
                       ActShape input = ActShape{1, 16, 16, 4});

// Recomputes in/out shapes from the layer dims; throws ShapeError on any mismatch.
void infer_shapes(ModelGraph& m);
// Shape, bit-width, residual-group and exit-head invariants.
void validate_model(const ModelGraph& m);
// Groups derived from the skip topology (sorted member lists).
std::vector<std::vector<int>> derive_residual_groups(const ModelGraph& m);

// For each layer, the representative (lowest) parameterised layer whose output
// channels it carries, or -1 when they come straight from the input.
std::vector<int> channel_sources(const ModelGraph& m);

// Weight/act bit widths of the nearest parameterised layer at or before `index`.
std::pair<int, int> bits_at(const ModelGraph& m, int index);

ModelGraph attach_exit_heads(const ModelGraph& m, std::span<const int> positions, uint64_t seed);

// Kaiming-uniform init for one parameterised layer.
void init_layer(LayerSpec& layer, uint64_t seed);

bool identical(const ModelGraph& a, const ModelGraph& b);

// Parameter tensors in declaration order: body (weight, bias per layer) then heads.
std::vector<Tensor*> body_parameters(ModelGraph& m);
std::vector<Tensor*> head_parameters(ModelGraph& m);
size_t parameter_count(const ModelGraph& m, bool include_heads);

struct ActivationStats {
    std::vector<float> layer_max;  // max input value per layer
    std::vector<float> head_max;   // max classifier input per head
};

struct ForwardOptions {
    bool grad_body = false;
    bool grad_heads = false;
    bool heads = false;
    ActivationStats* stats = nullptr;
};

struct TapeForward {
    Var logits;
    std::vector<Var> head_logits;
    std::vector<Var> body_params;
    std::vector<Var> head_params;
};

TapeForward forward(Tape& tape, const ModelGraph& m, const Tensor& x, const ForwardOptions& opts);

// Final-classifier logits, evaluated in batches without gradients.
Tensor infer_logits(const ModelGraph& m, const Tensor& x);
// Logits of every exit head followed by the final classifier.
std::vector<Tensor> infer_all_logits(const ModelGraph& m, const Tensor& x);

// Sets act_range on every quantized layer and head from the max observed input.
void calibrate_activation_ranges(ModelGraph& m, const Tensor& x);

}  // namespace ocmp
