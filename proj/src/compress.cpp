#include "ocmp/compress.hpp"

#include "ocmp/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace ocmp {

namespace {

std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

TrainSettings with_epochs(TrainSettings s, int epochs) {
    s.epochs = epochs;
    return s;
}

const DataSplits& require_data(const StageContext& ctx) {
    if (ctx.data == nullptr) throw ValidationError("stage context has no dataset");
    return *ctx.data;
}

TrainScope joint_scope(const ModelGraph& m) { return m.exit_heads.empty() ? TrainScope::Body : TrainScope::All; }

Tensor calibration_batch(const Dataset& train) {
    const int64_t n = std::min<int64_t>(train.size(), 512);
    return slice_rows(train.images, 0, n);
}

// Keeps `kept` entries along `axis` of a row-major tensor; `group` consecutive
// entries per kept index (flattened channel-major features).
Tensor select_axis(const Tensor& t, size_t axis, const std::vector<int64_t>& kept, int64_t group = 1) {
    Shape shape = t.shape();
    const int64_t outer = shape_numel(Shape(shape.begin(), shape.begin() + static_cast<std::ptrdiff_t>(axis)));
    const int64_t inner = shape_numel(Shape(shape.begin() + static_cast<std::ptrdiff_t>(axis) + 1, shape.end()));
    const int64_t len = shape[axis];
    shape[axis] = static_cast<int64_t>(kept.size()) * group;
    Tensor out(shape);
    float* dst = out.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t c : kept) {
            for (int64_t g = 0; g < group; ++g) {
                const float* src = t.data() + (o * len + c * group + g) * inner;
                std::copy_n(src, inner, dst);
                dst += inner;
            }
        }
    }
    return out;
}

}  // namespace

char stage_letter(StageKind kind) {
    switch (kind) {
        case StageKind::Distill: return 'D';
        case StageKind::Prune: return 'P';
        case StageKind::Quantize: return 'Q';
        case StageKind::EarlyExit: return 'E';
    }
    return '?';
}

StageKind stage_from_letter(char letter) {
    switch (letter) {
        case 'D': return StageKind::Distill;
        case 'P': return StageKind::Prune;
        case 'Q': return StageKind::Quantize;
        case 'E': return StageKind::EarlyExit;
        default: throw ValidationError(std::string("unknown stage kind '") + letter + "' (expected D, P, Q or E)");
    }
}

std::string to_string(StageKind kind) {
    switch (kind) {
        case StageKind::Distill: return "Distill";
        case StageKind::Prune: return "Prune";
        case StageKind::Quantize: return "Quantize";
        case StageKind::EarlyExit: return "EarlyExit";
    }
    return "?";
}

std::string to_string(Timing timing) { return timing == Timing::Static ? "static" : "dynamic"; }

std::string to_string(Granularity g) {
    switch (g) {
        case Granularity::Architecture: return "architecture";
        case Granularity::Neuron: return "neuron";
        case Granularity::SubNeuron: return "sub_neuron";
    }
    return "?";
}

Timing timing_of(StageKind kind) { return kind == StageKind::EarlyExit ? Timing::Dynamic : Timing::Static; }

Granularity granularity_of(StageKind kind) {
    switch (kind) {
        case StageKind::Distill:
        case StageKind::EarlyExit: return Granularity::Architecture;
        case StageKind::Prune: return Granularity::Neuron;
        case StageKind::Quantize: return Granularity::SubNeuron;
    }
    return Granularity::Architecture;
}

void KdConfig::validate() const {
    if (!(temperature > 0.0f)) throw ValidationError("distill: temperature must be > 0");
    if (!(alpha >= 0.0f && alpha <= 1.0f)) throw ValidationError("distill: alpha must lie in [0, 1]");
    if (!(student_width > 0.0)) throw ValidationError("distill: student width multiplier must be > 0");
    if (epochs < 0) throw ValidationError("distill: epochs must be non-negative");
}

void PruneConfig::validate() const {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw ValidationError("prune: ratio must lie in [0, 1)");
    if (epochs_finetune < 0) throw ValidationError("prune: epochs must be non-negative");
}

void QuantConfig::validate() const {
    validate_bits(weight_bits, "quantize: weight_bits");
    validate_bits(act_bits, "quantize: act_bits");
    if (epochs_qat < 0) throw ValidationError("quantize: epochs must be non-negative");
}

void ExitConfig::validate() const {
    if (!(threshold >= 0.0 && (threshold <= 1.0 || threshold >= kNeverExit))) {
        throw ValidationError("early exit: threshold must lie in [0, 1] (or be the never-exit sentinel)");
    }
    if (epochs_heads < 0) throw ValidationError("early exit: epochs must be non-negative");
}

void CompressionStage::validate() const {
    std::visit([](const auto& c) { c.validate(); }, params);
    const bool ok = (kind == StageKind::Distill && std::holds_alternative<KdConfig>(params)) ||
                    (kind == StageKind::Prune && std::holds_alternative<PruneConfig>(params)) ||
                    (kind == StageKind::Quantize && std::holds_alternative<QuantConfig>(params)) ||
                    (kind == StageKind::EarlyExit && std::holds_alternative<ExitConfig>(params));
    if (!ok) throw ValidationError("stage kind does not match its hyperparameter record");
}

std::string CompressionStage::describe() const {
    std::string s(1, stage_letter(kind));
    s += ':';
    switch (kind) {
        case StageKind::Distill: {
            const auto& c = std::get<KdConfig>(params);
            s += "w=" + fmt_num(c.student_width) + ";T=" + fmt_num(c.temperature) + ";a=" + fmt_num(c.alpha) +
                 ";ep=" + std::to_string(c.epochs);
            break;
        }
        case StageKind::Prune: {
            const auto& c = std::get<PruneConfig>(params);
            s += "p=" + fmt_num(c.ratio) + ";imp=" + (c.importance == Importance::L1 ? "l1" : "l2") +
                 ";ft=" + std::to_string(c.epochs_finetune);
            break;
        }
        case StageKind::Quantize: {
            const auto& c = std::get<QuantConfig>(params);
            s += "w=" + std::to_string(c.weight_bits) + ";a=" + std::to_string(c.act_bits) +
                 ";ft=" + std::to_string(c.epochs_qat);
            break;
        }
        case StageKind::EarlyExit: {
            const auto& c = std::get<ExitConfig>(params);
            s += "pos=";
            for (size_t i = 0; i < c.positions.size(); ++i) s += (i ? "|" : "") + std::to_string(c.positions[i]);
            s += ";ep=" + std::to_string(c.epochs_heads);
            break;
        }
    }
    return s;
}

Var kd_loss(Var student_logits, std::span<const int> labels, const Tensor& teacher_logits, float temperature,
            float alpha) {
    std::vector<Var> terms;
    std::vector<float> weights;
    if (alpha > 0.0f) {
        terms.push_back(ops::cross_entropy(student_logits, labels));
        weights.push_back(alpha);
    }
    if (alpha < 1.0f) {
        terms.push_back(ops::kl_divergence(student_logits, softmax_rows(teacher_logits, temperature), temperature));
        weights.push_back((1.0f - alpha) * temperature * temperature);
    }
    if (terms.size() == 1 && weights[0] == 1.0f) return terms[0];
    return ops::weighted_sum(terms, weights);
}

ModelGraph distill(const ModelGraph& teacher, const KdConfig& cfg, const StageContext& ctx) {
    cfg.validate();
    const DataSplits& data = require_data(ctx);
    const double chance = 100.0 / static_cast<double>(teacher.num_classes);
    const double teacher_acc = accuracy(teacher, data.val);
    if (teacher_acc <= chance + 5.0 && ctx.warnings) {
        ctx.warnings->push_back("distill: teacher accuracy " + fmt_num(teacher_acc) +
                                "% is within 5 points of chance; teacher looks untrained");
    }

    const uint64_t student_seed = ctx.base.seed ^ 0xd15711ULL;
    ModelGraph student = build_model(teacher.arch, teacher.width_multiplier * cfg.student_width, teacher.num_classes,
                                     student_seed, teacher.input_shape);
    if (!teacher.exit_heads.empty()) {
        // Heads are matched by relative depth; a width-scaled student keeps the
        // teacher's layer indexing, so the attach indices carry over directly.
        std::vector<int> positions;
        for (const auto& h : teacher.exit_heads) positions.push_back(h.attach_index);
        student = attach_exit_heads(student, positions, student_seed);
    }

    // Teacher outputs are fixed for the whole run (heads first, final last).
    const std::vector<Tensor> teacher_out = infer_all_logits(teacher, data.train.images);
    const Dataset& train = data.train;
    const float temperature = cfg.temperature;
    const float alpha = cfg.alpha;
    LossFn loss = [&](const TapeForward& fw, std::span<const int64_t> rows) {
        const auto labels = batch_labels(train, rows);
        std::vector<Var> terms;
        for (size_t h = 0; h < fw.head_logits.size(); ++h) {
            terms.push_back(kd_loss(fw.head_logits[h], labels, gather_rows(teacher_out[h], rows), temperature, alpha));
        }
        terms.push_back(kd_loss(fw.logits, labels, gather_rows(teacher_out.back(), rows), temperature, alpha));
        if (terms.size() == 1) return terms.front();
        const std::vector<float> ones(terms.size(), 1.0f);
        return ops::weighted_sum(terms, ones);
    };
    fit(student, train, with_epochs(ctx.base, cfg.epochs), joint_scope(student), loss);
    student.meta["teacher_val_accuracy"] = fmt_num(teacher_acc);
    return student;
}

std::vector<double> channel_importance(const ModelGraph& m, const std::vector<int>& members, Importance importance) {
    if (members.empty()) throw ValidationError("channel_importance: empty group");
    const int64_t channels = m.layers.at(static_cast<size_t>(members.front())).out_channels;
    std::vector<double> score(static_cast<size_t>(channels), 0.0);
    for (int idx : members) {
        const LayerSpec& l = m.layers.at(static_cast<size_t>(idx));
        const Tensor w = quantize_weights(l.weight, l.weight_bits);
        const int64_t per = static_cast<int64_t>(w.size()) / l.out_channels;
        for (int64_t c = 0; c < channels; ++c) {
            double acc = 0.0;
            for (int64_t j = 0; j < per; ++j) {
                const double v = w[static_cast<size_t>(c * per + j)];
                acc += importance == Importance::L1 ? std::fabs(v) : v * v;
            }
            score[static_cast<size_t>(c)] += importance == Importance::L1 ? acc : std::sqrt(acc);
        }
    }
    return score;
}

ModelGraph prune_structure(const ModelGraph& m, double ratio, Importance importance, std::vector<PruneGroup>* groups) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw ValidationError("prune: ratio must lie in [0, 1)");
    const int final_idx = m.final_classifier();
    const auto source = channel_sources(m);
    std::map<int, std::vector<int>> by_root;
    for (int i : m.mac_layers()) by_root[source[static_cast<size_t>(i)]].push_back(i);
    bool any = false;

    ModelGraph out = m;
    for (const auto& [root, members] : by_root) {
        if (std::find(members.begin(), members.end(), final_idx) != members.end()) continue;
        any = true;
        const int64_t channels = m.layers[static_cast<size_t>(members.front())].out_channels;
        const auto remove = static_cast<int64_t>(std::floor(ratio * static_cast<double>(channels)));
        if (channels - remove < 1) {
            throw ValidationError("prune: ratio " + fmt_num(ratio) + " would empty layer " + std::to_string(members.front()));
        }
        const auto score = channel_importance(m, members, importance);
        std::vector<int64_t> order(static_cast<size_t>(channels));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
            return score[static_cast<size_t>(a)] < score[static_cast<size_t>(b)];
        });
        PruneGroup g;
        g.members = members;
        g.removed.assign(order.begin(), order.begin() + remove);
        g.kept.assign(order.begin() + remove, order.end());
        std::sort(g.removed.begin(), g.removed.end());
        std::sort(g.kept.begin(), g.kept.end());

        if (remove > 0) {
            for (int idx : members) {
                LayerSpec& l = out.layers[static_cast<size_t>(idx)];
                l.weight = select_axis(l.weight, 0, g.kept);
                l.bias = select_axis(l.bias, 0, g.kept);
                l.out_channels = static_cast<int64_t>(g.kept.size());
            }
            // Consumers: parameterised layers fed by this group's channels.
            for (int j : m.mac_layers()) {
                const int in_src = j == 0 ? -1 : source[static_cast<size_t>(j - 1)];
                if (in_src != root) continue;
                LayerSpec& l = out.layers[static_cast<size_t>(j)];
                const int64_t per_channel = l.in_channels / channels;
                if (l.kind == LayerKind::Conv2d) {
                    l.weight = select_axis(l.weight, 1, g.kept);
                    l.in_channels = static_cast<int64_t>(g.kept.size());
                } else {
                    l.weight = select_axis(l.weight, 1, g.kept, per_channel);
                    l.in_channels = static_cast<int64_t>(g.kept.size()) * per_channel;
                }
            }
            for (auto& head : out.exit_heads) {
                if (source[static_cast<size_t>(head.attach_index)] != root) continue;
                LayerSpec& l = head.classifier();
                const int64_t per_channel = l.in_channels / channels;
                l.weight = select_axis(l.weight, 1, g.kept, per_channel);
                l.in_channels = static_cast<int64_t>(g.kept.size()) * per_channel;
            }
        }
        if (groups) groups->push_back(std::move(g));
    }
    if (!any) throw ValidationError("prune: model has no prunable layer");
    infer_shapes(out);
    out.residual_groups = derive_residual_groups(out);
    validate_model(out);
    return out;
}

ModelGraph prune_channels(const ModelGraph& m, const PruneConfig& cfg, const StageContext& ctx) {
    cfg.validate();
    const DataSplits& data = require_data(ctx);
    ModelGraph out = prune_structure(m, cfg.ratio, cfg.importance);
    const TrainScope scope = joint_scope(out);
    fit(out, data.train, with_epochs(ctx.finetune, cfg.epochs_finetune), scope, classification_loss(data.train, scope));
    return out;
}

ModelGraph set_bit_widths(const ModelGraph& m, int weight_bits, int act_bits, const Tensor& calibration) {
    validate_bits(weight_bits, "weight_bits");
    validate_bits(act_bits, "act_bits");
    ModelGraph out = m;
    for (auto& l : out.layers) {
        if (!l.has_params()) continue;
        l.weight_bits = weight_bits;
        l.act_bits = act_bits;
    }
    for (auto& h : out.exit_heads) {
        h.classifier().weight_bits = weight_bits;
        h.classifier().act_bits = act_bits;
    }
    calibrate_activation_ranges(out, calibration);
    return out;
}

ModelGraph quantize(const ModelGraph& m, const QuantConfig& cfg, const StageContext& ctx) {
    cfg.validate();
    const DataSplits& data = require_data(ctx);
    ModelGraph out = set_bit_widths(m, cfg.weight_bits, cfg.act_bits, calibration_batch(data.train));
    // Heads already attached are fine-tuned under quantization together with the body.
    const TrainScope scope = joint_scope(out);
    fit(out, data.train, with_epochs(ctx.finetune, cfg.epochs_qat), scope, classification_loss(data.train, scope));
    return out;
}

ModelGraph train_exit_heads(const ModelGraph& m, const ExitConfig& cfg, const StageContext& ctx) {
    cfg.validate();
    const DataSplits& data = require_data(ctx);
    ModelGraph out = m;
    if (out.exit_heads.empty()) {
        if (cfg.positions.empty()) throw ValidationError("train_exit_heads: no positions given and no heads attached");
        out = attach_exit_heads(out, cfg.positions, ctx.base.seed);
    }
    // Heads on a quantized body are quantized from their first step.
    for (auto& h : out.exit_heads) {
        const auto [wb, ab] = bits_at(out, h.attach_index);
        h.classifier().weight_bits = wb;
        h.classifier().act_bits = ab;
    }
    const Tensor calib = calibration_batch(data.train);
    ModelGraph probe = out;
    calibrate_activation_ranges(probe, calib);
    for (size_t h = 0; h < out.exit_heads.size(); ++h) {
        out.exit_heads[h].classifier().act_range = probe.exit_heads[h].classifier().act_range;
    }
    fit(out, data.train, with_epochs(ctx.base, cfg.epochs_heads), TrainScope::Heads,
        classification_loss(data.train, TrainScope::Heads));
    return out;
}

ExitDecisions decide_exits(const std::vector<Tensor>& all_logits, double tau) {
    if (all_logits.empty()) throw ValidationError("decide_exits: no outputs");
    const int64_t n = all_logits.front().dim(0);
    const size_t heads = all_logits.size() - 1;
    std::vector<Tensor> probs;
    probs.reserve(all_logits.size());
    for (const auto& l : all_logits) probs.push_back(softmax_rows(l));
    ExitDecisions d;
    d.classes.resize(static_cast<size_t>(n));
    d.exit_index.resize(static_cast<size_t>(n));
    d.confidence.resize(static_cast<size_t>(n));
    const int64_t k = all_logits.front().dim(1);
    for (int64_t i = 0; i < n; ++i) {
        for (size_t h = 0; h <= heads; ++h) {
            const float* row = probs[h].data() + i * k;
            const float* best = std::max_element(row, row + k);
            if (h == heads || static_cast<double>(*best) >= tau) {
                d.classes[static_cast<size_t>(i)] = static_cast<int>(best - row);
                d.exit_index[static_cast<size_t>(i)] = static_cast<int>(h);
                d.confidence[static_cast<size_t>(i)] = *best;
                break;
            }
        }
    }
    return d;
}

ExitDecisions predict_with_exits(const ModelGraph& m, const Tensor& x, double tau) {
    return decide_exits(infer_all_logits(m, x), tau);
}

double exit_accuracy(const ExitDecisions& d, const Dataset& data) {
    if (d.classes.size() != data.labels.size() || d.classes.empty()) throw ValidationError("exit_accuracy: size mismatch");
    int64_t correct = 0;
    for (size_t i = 0; i < d.classes.size(); ++i) correct += d.classes[i] == data.labels[i];
    return 100.0 * static_cast<double>(correct) / static_cast<double>(d.classes.size());
}

ModelGraph apply_stage(const ModelGraph& m, const CompressionStage& stage, const StageContext& ctx) {
    stage.validate();
    switch (stage.kind) {
        case StageKind::Distill: return distill(m, std::get<KdConfig>(stage.params), ctx);
        case StageKind::Prune: return prune_channels(m, std::get<PruneConfig>(stage.params), ctx);
        case StageKind::Quantize: return quantize(m, std::get<QuantConfig>(stage.params), ctx);
        case StageKind::EarlyExit: return train_exit_heads(m, std::get<ExitConfig>(stage.params), ctx);
    }
    throw ValidationError("apply_stage: unknown stage kind");
}

}  // namespace ocmp
