#include "ocmp/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ocmp {

void TrainSettings::validate() const {
    if (epochs < 0) throw ValidationError("epochs must be non-negative");
    if (batch_size < 1) throw ValidationError("batch_size must be positive");
    if (!(grad_clip >= 0.0f)) throw ValidationError("grad_clip must be non-negative");
    SgdConfig{learning_rate, momentum, seed}.validate();
}

std::vector<int> batch_labels(const Dataset& data, std::span<const int64_t> rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (int64_t r : rows) out.push_back(data.labels.at(static_cast<size_t>(r)));
    return out;
}

void clip_global_norm(std::span<Tensor> grads, float max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads) {
        for (float v : g.values()) sq += static_cast<double>(v) * v;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const auto scale = static_cast<float>(max_norm / norm);
    for (Tensor& g : grads) {
        for (size_t i = 0; i < g.size(); ++i) g[i] *= scale;
    }
}

LossFn classification_loss(const Dataset& data, TrainScope scope) {
    return [&data, scope](const TapeForward& fw, std::span<const int64_t> rows) {
        const auto labels = batch_labels(data, rows);
        std::vector<Var> terms;
        if (scope != TrainScope::Heads) terms.push_back(ops::cross_entropy(fw.logits, labels));
        if (scope != TrainScope::Body) {
            for (const Var& h : fw.head_logits) terms.push_back(ops::cross_entropy(h, labels));
        }
        if (terms.size() == 1) return terms.front();
        const std::vector<float> ones(terms.size(), 1.0f);
        return ops::weighted_sum(terms, ones);
    };
}

void fit(ModelGraph& m, const Dataset& data, const TrainSettings& settings, TrainScope scope, const LossFn& loss) {
    settings.validate();
    if (data.size() == 0) throw ValidationError("fit: empty training set");
    if (scope != TrainScope::Body && m.exit_heads.empty()) throw ValidationError("fit: no exit heads to train");

    std::vector<Tensor*> params;
    if (scope != TrainScope::Heads) params = body_parameters(m);
    if (scope != TrainScope::Body) {
        auto hp = head_parameters(m);
        params.insert(params.end(), hp.begin(), hp.end());
    }
    const SgdConfig sgd{settings.learning_rate, settings.momentum, settings.seed};
    std::vector<Tensor> velocity;
    std::mt19937_64 rng(settings.seed);
    std::vector<int64_t> order(static_cast<size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0);

    ForwardOptions opts;
    opts.grad_body = scope != TrainScope::Heads;
    opts.grad_heads = scope != TrainScope::Body;
    opts.heads = scope != TrainScope::Body;

    for (int epoch = 0; epoch < settings.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(settings.batch_size)) {
            const size_t end = std::min(order.size(), begin + static_cast<size_t>(settings.batch_size));
            const std::span<const int64_t> rows(order.data() + begin, end - begin);
            Tape tape;
            const TapeForward fw = forward(tape, m, gather_rows(data.images, rows), opts);
            const Var l = loss(fw, rows);
            backward(tape, l);
            std::vector<Var> leaves;
            if (scope != TrainScope::Heads) leaves = fw.body_params;
            if (scope != TrainScope::Body) leaves.insert(leaves.end(), fw.head_params.begin(), fw.head_params.end());
            auto grads = gradients(tape, leaves);
            if (settings.grad_clip > 0.0f) clip_global_norm(grads, settings.grad_clip);
            sgd_step(params, grads, sgd, velocity);
        }
    }
}

double accuracy(const ModelGraph& m, const Dataset& data) {
    if (data.size() == 0) throw ValidationError("accuracy: empty dataset");
    const auto pred = argmax_rows(infer_logits(m, data.images));
    int64_t correct = 0;
    for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
    return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace ocmp
