#pragma once

// Tape-based reverse-mode differentiation over Tensor values.
//
// Every primitive appends one node to the tape. Nodes are stored in execution
// order, so a reverse sweep over the tape is a valid backward schedule and
// visits each node exactly once. Nodes whose inputs do not require gradients
// record no backward closure (and keep no saved context).

#include "ocmp/tensor.hpp"

#include <functional>
#include <span>
#include <vector>

namespace ocmp {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Appends a computed node. `backward` is dropped when no input requires grad.
    Var record(Tensor value, std::span<const Var> inputs, Backward backward);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    size_t size() const { return nodes_.size(); }

    // Gradient accumulated for `v` by the last backward(); empty if none reached it.
    const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }

    // Adds `g` into the gradient slot of `v` (no-op when v does not require grad).
    void accumulate(Var v, const Tensor& g);
    // Direct access to a zero-initialised gradient buffer, for scatter-style kernels.
    Tensor* grad_buffer(Var v);

    // Visit count of the last backward sweep (each recorded closure at most once).
    size_t backward_visits() const { return visits_; }

private:
    friend void backward(Tape& tape, Var loss);

    struct Node {
        Tensor value;
        Tensor grad;
        Backward backward;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
    size_t visits_ = 0;
};

// Reverse sweep from a scalar loss. Throws ValidationError for a non-scalar loss.
void backward(Tape& tape, Var loss);

// Gradients for `params`; zero tensors for parameters the loss never reached.
std::vector<Tensor> gradients(const Tape& tape, std::span<const Var> params);

namespace ops {

// x: [N, F...] flattened to [N, in]; w: [out, in]; b: [out] -> [N, out]
Var dense(Var x, Var w, Var b);
// a: [M, K], b: [K, N] -> [M, N]
Var matmul(Var a, Var b);
// x: [N, C, H, W]; w: [O, C, k, k]; b: [O] -> [N, O, Ho, Wo]
Var conv2d(Var x, Var w, Var b, int stride, int pad);
Var relu(Var x);
Var tanh(Var x);
Var clip(Var x, float lo, float hi);
Var add(Var a, Var b);
// scale * x + shift
Var affine(Var x, float scale, float shift);
// Global average over H, W: [N, C, H, W] -> [N, C]. Rank-2 input passes through.
Var global_avgpool(Var x);
// Non-overlapping k x k windows.
Var avgpool(Var x, int k);
Var maxpool(Var x, int k);
Var flatten(Var x);
Var softmax(Var logits);
Var log_softmax(Var logits);
// Mean negative log-likelihood of integer labels under softmax(logits).
Var cross_entropy(Var logits, std::span<const int> labels);
// Mean over rows of KL(target || softmax(logits / T)); target rows are probabilities.
Var kl_divergence(Var logits, const Tensor& target_probs, float temperature);
// Forward value is `quantized`; gradient passes through where lo <= x <= hi, else zero.
Var straight_through(Var x, Tensor quantized, float lo, float hi);
// Weighted sum of scalar vars.
Var weighted_sum(std::span<const Var> terms, std::span<const float> weights);

}  // namespace ops

// Value-only helpers used outside of training.
Tensor softmax_rows(const Tensor& logits, float temperature = 1.0f);
std::vector<int> argmax_rows(const Tensor& logits);

struct SgdConfig {
    float learning_rate = 0.05f;
    float momentum = 0.9f;
    uint64_t seed = 0;

    void validate() const;
};

// v <- momentum * v - lr * g ; p <- p + v. Velocity slots are created on first use.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, const SgdConfig& cfg,
              std::vector<Tensor>& velocity);

}  // namespace ocmp
