#pragma once

// Fixed-point uniform fake quantization (DoReFa lineage).
//
// Weights: bits >= 32 is full precision. bits == 1 maps to sign(w) * mean|w|.
// Otherwise w is tanh-normalised into [0, 1], snapped to the k-bit grid, mapped
// back to [-1, 1] and scaled by the tensor's max |w|.
// Activations: a * quantize_k(clip(x / a, 0, 1)) for a per-layer range a.

#include "ocmp/autograd.hpp"

namespace ocmp {

constexpr int kFullPrecisionBits = 32;

// round(x * (2^k - 1)) / (2^k - 1) after clipping x to [0, 1]; ties away from zero.
float quantize_k(float x, int k);

void validate_bits(int bits, const char* what);

// Per-tensor scale applied after the grid mapping (max |w|, or mean |w| for 1 bit).
float weight_scale(const Tensor& w, int bits);

// Effective (fake-quantized) weight values, no tape.
Tensor quantize_weights(const Tensor& w, int bits);
Tensor quantize_activations(const Tensor& x, int bits, float range);

// Differentiable versions; gradients follow the straight-through rule.
Var fake_quant_weight(Var w, int bits);
Var fake_quant_act(Var x, int bits, float range);

// True when every value of `w_eff` lies on the k-bit grid of `scale`.
bool on_weight_grid(const Tensor& w_eff, int bits, float scale, float tol = 1e-5f);

}  // namespace ocmp
