#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance binary. Nothing here calls into the tape or the cost model.

#include "ocmp/compress.hpp"
#include "ocmp/order.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

// ---- double-precision reference forward -------------------------------------

// Body parameters in declaration order (weight, bias per MAC layer), as doubles.
std::vector<std::vector<double>> body_params_double(const ocmp::ModelGraph& m);

// Straight-through surrogate: at the base point the quantizer offsets q(x) - x are
// recorded, and afterwards replayed as constants, so the surrogate is affine with
// the slope the straight-through rule assigns (zero outside the clip window).
struct QuantFreeze {
    bool recorded = false;
    // per MAC layer, in layer order
    std::vector<std::vector<double>> weight_offset;
    std::vector<double> weight_norm;   // tanh normaliser m
    std::vector<double> weight_scale;  // s
    std::vector<std::vector<double>> act_offset;
    std::vector<std::vector<char>> act_pass;
    std::vector<std::vector<double>> act_const;
};

// Logits [N * classes] of the body under `params`. With a freeze, quantized layers
// use the surrogate (recording it on first use).
std::vector<double> ref_logits(const ocmp::ModelGraph& m, const std::vector<std::vector<double>>& params,
                               const ocmp::Tensor& x, QuantFreeze* freeze);

double ref_cross_entropy(const std::vector<double>& logits, const std::vector<int>& labels, int classes);
// alpha * CE + (1 - alpha) * T^2 * mean KL(softmax(teacher / T) || softmax(student / T))
double ref_kd(const std::vector<double>& logits, const std::vector<int>& labels, const std::vector<double>& teacher,
              int classes, double temperature, double alpha);

// ---- gradient check ----------------------------------------------------------

enum class LossKind { CrossEntropy, Distillation };

struct GradCheck {
    size_t coords = 0;
    size_t passed = 0;
    double worst = 0.0;
    double pass_fraction() const { return coords ? static_cast<double>(passed) / static_cast<double>(coords) : 0.0; }
};

// Tape gradients against central differences of the double reference over
// `samples` randomly chosen parameter coordinates. A coordinate passes when
// |tape - fd| / max(|tape|, |fd|, 1e-6) < tol.
GradCheck check_gradients(const ocmp::ModelGraph& m, const ocmp::Tensor& x, const std::vector<int>& labels,
                          LossKind loss, size_t samples, uint64_t seed, double tol = 1e-4);

// ---- Pareto --------------------------------------------------------------------

// O(n^2) filter: keeps a point when nothing dominates it and no earlier point
// equals it in both objectives. Sorted accuracy desc, bitops_cr desc.
std::vector<ocmp::ParetoPoint> brute_force_front(const std::vector<ocmp::ParetoPoint>& pts);

std::vector<ocmp::ParetoPoint> random_points(size_t n, uint64_t seed, bool coarse);

bool same_front(const std::vector<ocmp::ParetoPoint>& a, const std::vector<ocmp::ParetoPoint>& b);

// ---- BitOps --------------------------------------------------------------------

struct ArchMacs {
    std::string arch;
    std::vector<int64_t> macs;  // per MAC layer, hand-computed for a 1x16x16 input and 4 classes
    int64_t total_macs;
    int64_t bitops_fp32;  // total_macs * 32 * 32
};

const std::vector<ArchMacs>& literal_bitops_table();

// Small models with random inputs, for checks that need a realistic graph.
ocmp::Tensor random_images(int64_t n, const ocmp::ActShape& s, uint64_t seed);
std::vector<int> random_labels(int64_t n, int classes, uint64_t seed);

}  // namespace oracle
