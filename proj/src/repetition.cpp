#include "ocmp/repetition.hpp"

#include <algorithm>
#include <cstdio>

namespace ocmp {

namespace {

std::string level_name(const char* key, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s=%g", key, v);
    return buf;
}

// The first stage of `kind` in `base`, used as the template for hyperparameters
// that the sweep does not vary (epochs, temperature, importance).
CompressionStage template_stage(const std::vector<CompressionStage>& base, StageKind kind) {
    for (const auto& s : base) {
        if (s.kind == kind) return s;
    }
    throw ValidationError(std::string("repetition: base pipeline has no ") + stage_letter(kind) + " stage to repeat");
}

std::vector<RepetitionArm> level_arms(const std::vector<CompressionStage>& base, const std::string& level,
                                      const CompressionStage& first, const CompressionStage& second,
                                      const CompressionStage& once) {
    std::vector<RepetitionArm> arms;
    arms.push_back({"twice", level, {first, second}});
    arms.push_back({"once", level, {once}});
    std::vector<CompressionStage> repeated;
    bool done = false;
    for (const auto& s : base) {
        if (!done && s.kind == first.kind) {
            repeated.push_back(first);
            repeated.push_back(second);
            done = true;
        } else {
            repeated.push_back(s);
        }
    }
    arms.push_back({"base+repeat", level, repeated});
    return arms;
}

}  // namespace

std::vector<RepetitionArm> repetition_arms(const std::vector<CompressionStage>& base, StageKind kind) {
    if (kind == StageKind::EarlyExit) {
        throw ValidationError(
            "repetition: early exit is a dynamic, runtime compression and cannot be applied more than once");
    }
    const CompressionStage tmpl = template_stage(base, kind);
    std::vector<RepetitionArm> out;
    auto append = [&](std::vector<RepetitionArm> arms) { out.insert(out.end(), arms.begin(), arms.end()); };
    switch (kind) {
        case StageKind::Distill:
            for (double w : {0.75, 0.5}) {
                CompressionStage s = tmpl, once = tmpl;
                std::get<KdConfig>(s.params).student_width = w;
                std::get<KdConfig>(once.params).student_width = w * w;
                append(level_arms(base, level_name("w", w), s, s, once));
            }
            break;
        case StageKind::Prune:
            for (double p : {0.2, 0.3, 0.4}) {
                CompressionStage s = tmpl, once = tmpl;
                std::get<PruneConfig>(s.params).ratio = p;
                std::get<PruneConfig>(once.params).ratio = 1.0 - (1.0 - p) * (1.0 - p);
                append(level_arms(base, level_name("p", p), s, s, once));
            }
            break;
        case StageKind::Quantize:
            for (auto [b1, b2] : {std::pair{8, 4}, std::pair{6, 3}, std::pair{4, 2}}) {
                CompressionStage first = tmpl, second = tmpl;
                auto& q1 = std::get<QuantConfig>(first.params);
                auto& q2 = std::get<QuantConfig>(second.params);
                q1.weight_bits = q1.act_bits = b1;
                q2.weight_bits = q2.act_bits = b2;
                append(level_arms(base, "b=" + std::to_string(b1) + ">" + std::to_string(b2), first, second, second));
            }
            break;
        case StageKind::EarlyExit: break;
    }
    return out;
}

RepetitionReport evaluate_repetition(const std::vector<CompressionStage>& base, StageKind kind, const ArmRunner& run) {
    RepetitionReport report;
    report.kind = kind;
    for (auto& arm : repetition_arms(base, kind)) {
        auto points = run(arm);
        report.arms.push_back({std::move(arm), std::move(points)});
    }
    return report;
}

}  // namespace ocmp
