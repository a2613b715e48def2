#pragma once

#include "ocmp/compress.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace ocmp {

// Per-sample multiply-accumulates of one layer; zero for anything without weights.
int64_t count_macs(const LayerSpec& layer);

// Sum of macs * weight_bits * act_bits over body MAC layers with index <= through_layer.
// Head layers count only when include_heads is set.
int64_t count_bitops(const ModelGraph& m, std::optional<int> through_layer = std::nullopt, bool include_heads = false);

int64_t head_bitops(const ModelGraph& m, size_t head);

// Cost of a sample leaving at exit i: the body up to the attach layer plus every
// head evaluated so far. The last entry is the final classifier (whole body plus all heads).
std::vector<int64_t> exit_costs(const ModelGraph& m);

// Parameter bits, counting every tensor of a layer (bias included) at its weight_bits.
int64_t storage_bits(const ModelGraph& m, bool include_heads = true);

struct ExpectedCost {
    double bitops = 0.0;
    std::vector<double> exit_distribution;  // per exit, final classifier last
};

ExpectedCost expected_bitops(const ModelGraph& m, const ExitDecisions& decisions);
ExpectedCost expected_bitops(const ModelGraph& m, const Tensor& x, double tau);

// Reference cost of the uncompressed model: no heads, every layer at 32w32a.
struct BaselineCost {
    int64_t bitops = 0;
    int64_t storage_bits = 0;
};

BaselineCost baseline_cost(const ModelGraph& original);

struct CostReport {
    std::vector<int64_t> macs_per_layer;
    int64_t bitops_static = 0;
    double expected_bitops = 0.0;
    int64_t storage_bits = 0;
    double bitops_cr = 1.0;
    double cr = 1.0;
    std::vector<double> exit_distribution;
};

// Ratios against `original`. Models with heads take the decisions' expected cost;
// head-free models use their static cost.
CostReport cost_report(const BaselineCost& original, const ModelGraph& compressed, const ExitDecisions& decisions);

struct Evaluation {
    double accuracy = 0.0;
    CostReport cost;
};

// Accuracy (with early exits at `tau` when heads exist) and cost on `data`.
Evaluation evaluate(const BaselineCost& original, const ModelGraph& m, const Dataset& data, double tau);

}  // namespace ocmp
