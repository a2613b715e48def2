#include "ocmp/harness/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace ocmp::harness {

using nlohmann::json;

TrainSettings ExperimentConfig::finetune_settings() const {
    TrainSettings s = train;
    s.epochs = finetune_epochs;
    s.learning_rate = finetune_lr();
    return s;
}

void ExperimentConfig::validate() const {
    train.validate();
    finetune_settings().validate();
    if (!(width > 0.0)) throw ValidationError("model width must be positive");
    if (seeds.empty()) throw ValidationError("at least one seed is required");
    if (tau_grid.empty()) throw ValidationError("tau grid must not be empty");
    for (double t : tau_grid) {
        if (!(t >= 0.0)) throw ValidationError("tau values must be non-negative");
    }
    if (!(edge_margin >= 0.0)) throw ValidationError("edge margin must be non-negative");
    for (const auto& s : stages) s.validate();
    check_unique_kinds(stages, allow_repeats);
}

CompressionStage make_stage(const ExperimentConfig& cfg, StageKind kind) {
    switch (kind) {
        case StageKind::Distill:
            return CompressionStage::distill({cfg.kd_temperature, cfg.kd_alpha, 0.5, cfg.train.epochs});
        case StageKind::Prune: return CompressionStage::prune({0.3, cfg.importance, cfg.finetune_epochs});
        case StageKind::Quantize: return CompressionStage::quantize({8, 8, cfg.finetune_epochs});
        case StageKind::EarlyExit: return CompressionStage::early_exit({{5}, 0.9, cfg.train.epochs});
    }
    throw ValidationError("unknown stage kind");
}

std::vector<CompressionStage> grid_stages(const ExperimentConfig& cfg, StageKind kind) {
    std::vector<CompressionStage> out;
    CompressionStage base = make_stage(cfg, kind);
    switch (kind) {
        case StageKind::Distill:
            for (double w : cfg.grids.widths) {
                std::get<KdConfig>(base.params).student_width = w;
                out.push_back(base);
            }
            break;
        case StageKind::Prune:
            for (double p : cfg.grids.ratios) {
                std::get<PruneConfig>(base.params).ratio = p;
                out.push_back(base);
            }
            break;
        case StageKind::Quantize:
            for (auto [wb, ab] : cfg.grids.bits) {
                auto& q = std::get<QuantConfig>(base.params);
                q.weight_bits = wb;
                q.act_bits = ab;
                out.push_back(base);
            }
            break;
        case StageKind::EarlyExit:
            for (const auto& pos : cfg.grids.positions) {
                std::get<ExitConfig>(base.params).positions = pos;
                out.push_back(base);
            }
            break;
    }
    if (out.empty()) throw ValidationError("empty hyperparameter grid for " + to_string(kind));
    for (const auto& s : out) s.validate();
    return out;
}

void check_unique_kinds(const std::vector<CompressionStage>& stages, bool allow_repeats) {
    if (allow_repeats) return;
    std::set<StageKind> seen;
    for (const auto& s : stages) {
        if (!seen.insert(s.kind).second) {
            throw ValidationError(std::string("stage kind ") + stage_letter(s.kind) +
                                  " appears twice; each compression is applied once unless repetition mode is enabled");
        }
    }
}

std::string pipeline_tag(const std::vector<CompressionStage>& stages) {
    std::string tag;
    for (const auto& s : stages) tag += stage_letter(s.kind);
    return tag.empty() ? "base" : tag;
}

std::string stage_params(const std::vector<CompressionStage>& stages) {
    std::string out;
    for (size_t i = 0; i < stages.size(); ++i) {
        if (i) out += ' ';
        out += stages[i].describe();
    }
    return out.empty() ? "-" : out;
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& dst) {
    if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

StageKind kind_from_json(const json& j) {
    const auto s = j.get<std::string>();
    if (s.size() != 1) throw ValidationError("stage kind must be one of D, P, Q, E (got '" + s + "')");
    return stage_from_letter(s[0]);
}

CompressionStage stage_from_json(const ExperimentConfig& cfg, const json& j) {
    CompressionStage st = make_stage(cfg, kind_from_json(j.at("kind")));
    switch (st.kind) {
        case StageKind::Distill: {
            auto& c = std::get<KdConfig>(st.params);
            read_opt(j, "width", c.student_width);
            read_opt(j, "temperature", c.temperature);
            read_opt(j, "alpha", c.alpha);
            read_opt(j, "epochs", c.epochs);
            break;
        }
        case StageKind::Prune: {
            auto& c = std::get<PruneConfig>(st.params);
            read_opt(j, "ratio", c.ratio);
            if (j.contains("importance")) {
                const auto imp = j.at("importance").get<std::string>();
                if (imp != "l1" && imp != "l2") throw ValidationError("importance must be l1 or l2");
                c.importance = imp == "l1" ? Importance::L1 : Importance::L2;
            }
            read_opt(j, "epochs", c.epochs_finetune);
            break;
        }
        case StageKind::Quantize: {
            auto& c = std::get<QuantConfig>(st.params);
            read_opt(j, "weight_bits", c.weight_bits);
            read_opt(j, "act_bits", c.act_bits);
            read_opt(j, "epochs", c.epochs_qat);
            break;
        }
        case StageKind::EarlyExit: {
            auto& c = std::get<ExitConfig>(st.params);
            read_opt(j, "positions", c.positions);
            read_opt(j, "threshold", c.threshold);
            read_opt(j, "epochs", c.epochs_heads);
            break;
        }
    }
    st.validate();
    return st;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    static const std::set<std::string> known = {"dataset", "model",    "train", "finetune",      "distill", "prune",
                                                "grids",   "allow_repeats", "seeds", "tau_grid", "report_tau",
                                                "edge_margin", "out", "pair", "insertion", "repeat", "stages"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ValidationError("config: unknown key '" + key + "'");
    }
    try {
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            read_opt(d, "name", cfg.dataset.name);
            read_opt(d, "classes", cfg.dataset.synthetic.classes);
            read_opt(d, "image_size", cfg.dataset.synthetic.image_size);
            read_opt(d, "samples", cfg.dataset.synthetic.samples);
            read_opt(d, "noise", cfg.dataset.synthetic.noise);
            read_opt(d, "images", cfg.dataset.idx_images);
            read_opt(d, "labels", cfg.dataset.idx_labels);
        }
        if (j.contains("model")) {
            read_opt(j.at("model"), "arch", cfg.arch);
            read_opt(j.at("model"), "width", cfg.width);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            read_opt(t, "epochs", cfg.train.epochs);
            read_opt(t, "learning_rate", cfg.train.learning_rate);
            read_opt(t, "momentum", cfg.train.momentum);
            read_opt(t, "batch_size", cfg.train.batch_size);
        }
        if (j.contains("finetune")) {
            const auto& f = j.at("finetune");
            read_opt(f, "epochs", cfg.finetune_epochs);
            if (f.contains("learning_rate") && !f.at("learning_rate").is_null()) {
                cfg.finetune_lr_override = f.at("learning_rate").get<float>();
            }
        }
        if (j.contains("distill")) {
            read_opt(j.at("distill"), "temperature", cfg.kd_temperature);
            read_opt(j.at("distill"), "alpha", cfg.kd_alpha);
        }
        if (j.contains("prune") && j.at("prune").contains("importance")) {
            cfg.importance = j.at("prune").at("importance").get<std::string>() == "l1" ? Importance::L1 : Importance::L2;
        }
        if (j.contains("grids")) {
            const auto& g = j.at("grids");
            read_opt(g, "D", cfg.grids.widths);
            read_opt(g, "P", cfg.grids.ratios);
            if (g.contains("Q")) {
                cfg.grids.bits.clear();
                for (const auto& b : g.at("Q")) {
                    if (b.is_array()) {
                        cfg.grids.bits.emplace_back(b.at(0).get<int>(), b.at(1).get<int>());
                    } else {
                        cfg.grids.bits.emplace_back(b.get<int>(), b.get<int>());
                    }
                }
            }
            read_opt(g, "E", cfg.grids.positions);
        }
        read_opt(j, "allow_repeats", cfg.allow_repeats);
        read_opt(j, "seeds", cfg.seeds);
        read_opt(j, "tau_grid", cfg.tau_grid);
        read_opt(j, "report_tau", cfg.report_tau);
        read_opt(j, "edge_margin", cfg.edge_margin);
        read_opt(j, "out", cfg.out_dir);
        read_opt(j, "pair", cfg.pair);
        if (j.contains("insertion")) {
            read_opt(j.at("insertion"), "outer", cfg.insertion_outer);
            read_opt(j.at("insertion"), "inserted", cfg.insertion_inner);
        }
        read_opt(j, "repeat", cfg.repeat_kind);
        // Stages last: their defaults depend on the budgets above.
        if (j.contains("stages")) {
            for (const auto& s : j.at("stages")) cfg.stages.push_back(stage_from_json(cfg, s));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

DataSplits make_dataset(const DatasetSpec& spec, uint64_t seed) {
    if (spec.name == "synthetic_shapes") return generate_synthetic_shapes(spec.synthetic, seed);
    if (spec.name == "idx_files") {
        if (spec.idx_images.empty() || spec.idx_labels.empty()) {
            throw ValidationError("idx_files dataset needs both 'images' and 'labels' paths");
        }
        return load_idx_dataset(spec.idx_images, spec.idx_labels, seed);
    }
    throw ValidationError("unknown dataset '" + spec.name + "' (expected synthetic_shapes or idx_files)");
}

}  // namespace ocmp::harness
