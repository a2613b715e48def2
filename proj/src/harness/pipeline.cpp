#include "ocmp/harness/pipeline.hpp"

#include <chrono>

namespace ocmp::harness {

uint64_t stable_hash(const std::string& s, uint64_t seed) {
    uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string prefix_key(const std::vector<CompressionStage>& stages, size_t n, uint64_t seed) {
    std::string key = std::to_string(seed) + "|";
    for (size_t i = 0; i < n; ++i) key += stages[i].describe() + " ";
    return key;
}

}  // namespace

Runner::Runner(ExperimentConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

const DataSplits& Runner::data(uint64_t seed) {
    auto it = data_.find(seed);
    if (it == data_.end()) it = data_.emplace(seed, make_dataset(cfg_.dataset, seed)).first;
    return it->second;
}

const ModelGraph& Runner::baseline(uint64_t seed) {
    std::vector<CompressionStage> none;
    return *prefix(none, 0, seed);
}

double Runner::baseline_accuracy(uint64_t seed) {
    const std::vector<CompressionStage> none;
    const auto m = prefix(none, 0, seed);
    return snapshot(prefix_key(none, 0, seed), *m, seed, 0, "base").accuracy;
}

std::shared_ptr<const ModelGraph> Runner::prefix(const std::vector<CompressionStage>& stages, size_t n, uint64_t seed) {
    const std::string key = prefix_key(stages, n, seed);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;

    const DataSplits& splits = data(seed);
    std::shared_ptr<const ModelGraph> result;
    if (n == 0) {
        const Shape& s = splits.train.images.shape();
        const ActShape input{s.at(1), s.at(2), s.at(3), 4};
        ModelGraph m = build_model(cfg_.arch, cfg_.width, splits.train.num_classes, stable_hash("init", seed), input);
        TrainSettings t = cfg_.train;
        t.seed = stable_hash("train", seed);
        fit(m, splits.train, t, TrainScope::Body, classification_loss(splits.train, TrainScope::Body));
        result = std::make_shared<const ModelGraph>(std::move(m));
    } else {
        const auto parent = prefix(stages, n - 1, seed);
        StageContext ctx;
        ctx.data = &splits;
        ctx.base = cfg_.train;
        ctx.base.seed = stable_hash(key, seed);
        ctx.finetune = cfg_.finetune_settings();
        ctx.finetune.seed = ctx.base.seed;
        ctx.warnings = &warnings_;
        const CompressionStage& st = stages[n - 1];
        const std::string where = "stage " + std::to_string(n) + " (" + st.describe() + "): ";
        try {
            result = std::make_shared<const ModelGraph>(apply_stage(*parent, st, ctx));
        } catch (const ShapeError& e) {
            throw ShapeError(where + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(where + e.what());
        } catch (const Error& e) {
            throw Error(where + e.what());
        }
    }
    cache_.emplace(key, result);
    return result;
}

BoundarySnapshot Runner::snapshot(const std::string& key, const ModelGraph& m, uint64_t seed, int index,
                                  const std::string& stage) {
    if (auto it = snapshots_.find(key); it != snapshots_.end()) return it->second;
    const DataSplits& splits = data(seed);
    const BaselineCost base = baseline_cost(baseline(seed));
    BoundarySnapshot s;
    s.index = index;
    s.stage = stage;
    if (!m.exit_heads.empty()) s.tau = cfg_.report_tau;
    const Evaluation ev = evaluate(base, m, splits.test, cfg_.report_tau);
    s.accuracy = ev.accuracy;
    s.cost = ev.cost;
    snapshots_.emplace(key, s);
    return s;
}

PipelineResult Runner::run(const std::vector<CompressionStage>& stages, uint64_t seed, const std::string& config_id) {
    for (size_t i = 0; i < stages.size(); ++i) {
        try {
            stages[i].validate();
        } catch (const ValidationError& e) {
            throw ValidationError("stage " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    check_unique_kinds(stages, cfg_.allow_repeats);
    const auto start = std::chrono::steady_clock::now();

    std::vector<BoundarySnapshot> boundaries;
    for (size_t n = 0; n <= stages.size(); ++n) {
        const auto m = prefix(stages, n, seed);
        boundaries.push_back(snapshot(prefix_key(stages, n, seed), *m, seed, static_cast<int>(n),
                                      n == 0 ? "base" : stages[n - 1].describe()));
    }
    PipelineResult out;
    out.model = prefix(stages, stages.size(), seed);
    const DataSplits& splits = data(seed);
    const BaselineCost base = baseline_cost(baseline(seed));
    const double base_acc = boundaries.front().accuracy;

    ResultRecord proto;
    proto.config_id = config_id;
    proto.pipeline_tag = pipeline_tag(stages);
    proto.stage_params = stage_params(stages);
    proto.seed = seed;
    proto.baseline = base;
    proto.baseline_accuracy = base_acc;
    proto.finetune_lr = cfg_.finetune_lr();
    proto.boundaries = boundaries;

    if (out.model->exit_heads.empty()) {
        ResultRecord r = proto;
        r.accuracy = boundaries.back().accuracy;
        r.cost = boundaries.back().cost;
        out.records.push_back(std::move(r));
    } else {
        // One batched forward serves every threshold.
        const auto logits = infer_all_logits(*out.model, splits.test.images);
        for (double tau : cfg_.tau_grid) {
            const ExitDecisions d = decide_exits(logits, tau);
            ResultRecord r = proto;
            r.tau = tau;
            r.accuracy = exit_accuracy(d, splits.test);
            r.cost = cost_report(base, *out.model, d);
            out.records.push_back(std::move(r));
        }
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace ocmp::harness
