#pragma once

#include "ocmp/cost.hpp"
#include "ocmp/harness/config.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ocmp::harness {

struct BoundarySnapshot {
    int index = 0;          // 0 = trained base model, i = after stage i
    std::string stage;      // "base" or the stage description
    std::optional<double> tau;  // set when the model carries exit heads
    double accuracy = 0.0;
    CostReport cost;
};

struct ResultRecord {
    std::string config_id;
    std::string pipeline_tag;
    std::string stage_params;
    uint64_t seed = 0;
    std::optional<double> tau;  // only for models with exit heads
    double accuracy = 0.0;
    CostReport cost;
    BaselineCost baseline;
    double baseline_accuracy = 0.0;
    float finetune_lr = 0.0f;
    std::vector<BoundarySnapshot> boundaries;
};

struct PipelineResult {
    std::vector<ResultRecord> records;  // one per tau when the final model has heads
    std::shared_ptr<const ModelGraph> model;
    double wall_seconds = 0.0;
};

// Trains base models and applies stage sequences, caching every pipeline prefix
// so shared prefixes are computed once per seed. Stage training seeds derive from
// the run seed and the prefix, so results do not depend on execution order.
class Runner {
   public:
    explicit Runner(ExperimentConfig cfg);

    const ExperimentConfig& config() const { return cfg_; }
    const DataSplits& data(uint64_t seed);
    const ModelGraph& baseline(uint64_t seed);
    double baseline_accuracy(uint64_t seed);

    // Stages run in the given order; failures carry the stage index.
    PipelineResult run(const std::vector<CompressionStage>& stages, uint64_t seed, const std::string& config_id);

    const std::vector<std::string>& warnings() const { return warnings_; }
    size_t cached_models() const { return cache_.size(); }

   private:
    std::shared_ptr<const ModelGraph> prefix(const std::vector<CompressionStage>& stages, size_t n, uint64_t seed);
    BoundarySnapshot snapshot(const std::string& key, const ModelGraph& m, uint64_t seed, int index,
                              const std::string& stage);

    ExperimentConfig cfg_;
    std::map<uint64_t, DataSplits> data_;
    std::map<std::string, std::shared_ptr<const ModelGraph>> cache_;
    std::map<std::string, BoundarySnapshot> snapshots_;
    std::vector<std::string> warnings_;
};

// Stable 64-bit FNV-1a hash, used to derive per-stage RNG seeds.
uint64_t stable_hash(const std::string& s, uint64_t seed);

}  // namespace ocmp::harness
