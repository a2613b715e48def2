#pragma once

#include "ocmp/compress.hpp"
#include "ocmp/harness/dataset.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ocmp::harness {

struct DatasetSpec {
    std::string name = "synthetic_shapes";  // or "idx_files"
    SyntheticShapesParams synthetic;
    std::string idx_images;
    std::string idx_labels;
};

// Hyperparameter values swept per stage kind. Every grid entry becomes one full
// stage record; epochs come from the experiment budgets.
struct StageGrids {
    std::vector<double> widths{0.25, 0.5, 0.75};
    std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
    std::vector<std::pair<int, int>> bits{{2, 2}, {3, 3}, {4, 4}, {6, 6}, {8, 8}};
    std::vector<std::vector<int>> positions{{2}, {5}, {2, 5}};
};

struct ExperimentConfig {
    DatasetSpec dataset;
    std::string arch = "toy_cnn";
    double width = 1.0;
    TrainSettings train;  // base model, distillation and exit-head training
    int finetune_epochs = 10;
    // Fine-tuning runs at train.learning_rate / 10 unless this is set.
    std::optional<float> finetune_lr_override;
    float kd_temperature = 4.0f;
    float kd_alpha = 0.5f;
    Importance importance = Importance::L2;

    std::vector<CompressionStage> stages;
    bool allow_repeats = false;
    StageGrids grids;
    std::vector<uint64_t> seeds{1};
    std::vector<double> tau_grid{0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, kNeverExit};
    // Threshold used for boundary snapshots of models that carry heads.
    double report_tau = 0.9;
    double edge_margin = 0.05;
    std::string out_dir = "results";

    // Subcommand inputs.
    std::string pair;               // sweep-pair, e.g. "DP"
    std::string insertion_outer;    // validate-insertion, e.g. "PE"
    std::string insertion_inner;    // e.g. "Q"
    std::string repeat_kind;        // repeat-study, e.g. "P"

    float finetune_lr() const { return finetune_lr_override.value_or(train.learning_rate / 10.0f); }
    TrainSettings finetune_settings() const;
    void validate() const;
};

// Stage record for `kind` using the config's budgets and KD/pruning defaults.
CompressionStage make_stage(const ExperimentConfig& cfg, StageKind kind);
// Every grid entry for one kind as a full stage record.
std::vector<CompressionStage> grid_stages(const ExperimentConfig& cfg, StageKind kind);

// Throws ValidationError when a kind repeats and repeats are not allowed.
void check_unique_kinds(const std::vector<CompressionStage>& stages, bool allow_repeats);

std::string pipeline_tag(const std::vector<CompressionStage>& stages);
std::string stage_params(const std::vector<CompressionStage>& stages);

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

DataSplits make_dataset(const DatasetSpec& spec, uint64_t seed);

}  // namespace ocmp::harness
