#pragma once

#include "ocmp/order.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ocmp {

// One arm of a repetition comparison: a stage list to run from the trained base model.
struct RepetitionArm {
    std::string name;  // "twice", "once" or "base+repeat"
    std::string level;  // the moderate strength, e.g. "p=0.3"
    std::vector<CompressionStage> stages;
};

// Arms for one kind. For each strength level:
//   twice        the stage at moderate strength, applied two times
//   once         the stage once at the strength the two applications compose to
//   base+repeat  `base` with the stage of that kind doubled in place
// Distill levels compose widths (w, w*w); Prune ratios compose retained fractions
// (p, 1-(1-p)^2); Quantize pairs run (b1 then b2) against b2 alone.
// Early exit cannot be repeated and is rejected.
std::vector<RepetitionArm> repetition_arms(const std::vector<CompressionStage>& base, StageKind kind);

struct RepetitionArmResult {
    RepetitionArm arm;
    std::vector<ParetoPoint> points;
};

struct RepetitionReport {
    StageKind kind = StageKind::Prune;
    std::vector<RepetitionArmResult> arms;
};

// Runs an arm and returns its outcome points (several per arm when the final model has exit heads).
using ArmRunner = std::function<std::vector<ParetoPoint>(const RepetitionArm&)>;

RepetitionReport evaluate_repetition(const std::vector<CompressionStage>& base, StageKind kind, const ArmRunner& run);

}  // namespace ocmp
