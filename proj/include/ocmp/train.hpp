#pragma once

#include "ocmp/model.hpp"

#include <functional>
#include <span>
#include <vector>

namespace ocmp {

struct Dataset {
    Tensor images;            // [N, C, H, W]
    std::vector<int> labels;  // N entries in [0, num_classes)
    int num_classes = 0;

    int64_t size() const { return static_cast<int64_t>(labels.size()); }
};

struct DataSplits {
    Dataset train;
    Dataset val;
    Dataset test;
};

struct TrainSettings {
    int epochs = 30;
    float learning_rate = 0.05f;
    float momentum = 0.9f;
    int batch_size = 32;
    uint64_t seed = 0;
    // Global L2 norm the minibatch gradient is rescaled to when exceeded; 0 disables.
    float grad_clip = 5.0f;

    void validate() const;
};

enum class TrainScope { Body, Heads, All };

// Loss for one minibatch given the recorded forward and the batch row indices.
using LossFn = std::function<Var(const TapeForward& fw, std::span<const int64_t> rows)>;

// Minibatch SGD with momentum over shuffled epochs. Only tensors in `scope` move.
void fit(ModelGraph& m, const Dataset& data, const TrainSettings& settings, TrainScope scope, const LossFn& loss);

// Cross-entropy on the final classifier, plus every exit head when they are
// part of the trained scope.
LossFn classification_loss(const Dataset& data, TrainScope scope);

// Top-1 accuracy of the final classifier in percent.
double accuracy(const ModelGraph& m, const Dataset& data);

// Rescales all gradients together so their joint L2 norm is at most max_norm.
void clip_global_norm(std::span<Tensor> grads, float max_norm);

std::vector<int> batch_labels(const Dataset& data, std::span<const int64_t> rows);

}  // namespace ocmp
