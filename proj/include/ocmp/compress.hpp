#pragma once

#include "ocmp/train.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ocmp {

enum class StageKind { Distill, Prune, Quantize, EarlyExit };
enum class Timing { Static, Dynamic };
enum class Granularity { Architecture, Neuron, SubNeuron };

char stage_letter(StageKind kind);
StageKind stage_from_letter(char letter);
std::string to_string(StageKind kind);
std::string to_string(Timing timing);
std::string to_string(Granularity granularity);
Timing timing_of(StageKind kind);
Granularity granularity_of(StageKind kind);

struct KdConfig {
    float temperature = 4.0f;
    float alpha = 0.5f;  // weight of the hard-label term
    double student_width = 0.5;
    int epochs = 30;

    void validate() const;
};

enum class Importance { L1, L2 };

struct PruneConfig {
    double ratio = 0.3;
    Importance importance = Importance::L2;
    int epochs_finetune = 10;

    void validate() const;
};

struct QuantConfig {
    int weight_bits = 8;
    int act_bits = 8;
    int epochs_qat = 10;

    void validate() const;
};

// Thresholds above 1 are the never-exit sentinel.
constexpr double kNeverExit = 1.01;

struct ExitConfig {
    std::vector<int> positions;
    double threshold = 0.9;
    int epochs_heads = 30;

    void validate() const;
};

using StageParams = std::variant<KdConfig, PruneConfig, QuantConfig, ExitConfig>;

struct CompressionStage {
    StageKind kind = StageKind::Distill;
    StageParams params;

    static CompressionStage distill(KdConfig c) { return {StageKind::Distill, c}; }
    static CompressionStage prune(PruneConfig c) { return {StageKind::Prune, c}; }
    static CompressionStage quantize(QuantConfig c) { return {StageKind::Quantize, c}; }
    static CompressionStage early_exit(ExitConfig c) { return {StageKind::EarlyExit, c}; }

    Timing timing() const { return timing_of(kind); }
    Granularity granularity() const { return granularity_of(kind); }
    // Compact parameter string, e.g. "P:p=0.3;imp=l2;ft=10".
    std::string describe() const;
    void validate() const;
};

// Training hyperparameters shared by every stage. Distillation and head
// training use `base`; pruning and QAT fine-tuning use `finetune`.
struct StageContext {
    const DataSplits* data = nullptr;
    TrainSettings base;
    TrainSettings finetune;
    std::vector<std::string>* warnings = nullptr;
};

// alpha * CE(labels) + (1 - alpha) * T^2 * KL(softmax(teacher / T) || softmax(student / T))
Var kd_loss(Var student_logits, std::span<const int> labels, const Tensor& teacher_logits, float temperature,
            float alpha);

ModelGraph distill(const ModelGraph& teacher, const KdConfig& cfg, const StageContext& ctx);

// Per-channel importance of one channel group (sum of member filter norms),
// measured on effective (fake-quantized) weights.
std::vector<double> channel_importance(const ModelGraph& m, const std::vector<int>& members, Importance importance);

struct PruneGroup {
    std::vector<int> members;
    std::vector<int64_t> kept;  // ascending channel indices
    std::vector<int64_t> removed;
};

// Structural pruning without fine-tuning. Groups are channel-tied layer sets;
// the final classifier is never pruned.
ModelGraph prune_structure(const ModelGraph& m, double ratio, Importance importance,
                           std::vector<PruneGroup>* groups = nullptr);
ModelGraph prune_channels(const ModelGraph& m, const PruneConfig& cfg, const StageContext& ctx);

// Sets bit widths on every body layer and exit head, then calibrates activation ranges.
ModelGraph set_bit_widths(const ModelGraph& m, int weight_bits, int act_bits, const Tensor& calibration);
ModelGraph quantize(const ModelGraph& m, const QuantConfig& cfg, const StageContext& ctx);

// Trains exit heads on a frozen body, attaching them at cfg.positions first when absent.
ModelGraph train_exit_heads(const ModelGraph& m, const ExitConfig& cfg, const StageContext& ctx);

struct ExitDecisions {
    std::vector<int> classes;
    std::vector<int> exit_index;  // 0..H-1 for heads, H for the final classifier
    // Max softmax probability at the exit taken.
    std::vector<float> confidence;
};

// `all_logits` as returned by infer_all_logits (heads then final).
ExitDecisions decide_exits(const std::vector<Tensor>& all_logits, double tau);
ExitDecisions predict_with_exits(const ModelGraph& m, const Tensor& x, double tau);
double exit_accuracy(const ExitDecisions& d, const Dataset& data);

ModelGraph apply_stage(const ModelGraph& m, const CompressionStage& stage, const StageContext& ctx);

}  // namespace ocmp
