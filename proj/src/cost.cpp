#include "ocmp/cost.hpp"

#include "ocmp/quant.hpp"

namespace ocmp {

int64_t count_macs(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::Conv2d:
            return l.out_channels * l.in_channels * l.kernel * l.kernel * l.out_shape.h * l.out_shape.w;
        case LayerKind::Dense: return l.in_channels * l.out_channels;
        default: return 0;
    }
}

namespace {

int64_t layer_bitops(const LayerSpec& l) {
    return count_macs(l) * static_cast<int64_t>(l.weight_bits) * static_cast<int64_t>(l.act_bits);
}

int64_t tensor_bits(const LayerSpec& l) {
    return static_cast<int64_t>(l.weight.size() + l.bias.size()) * l.weight_bits;
}

}  // namespace

int64_t count_bitops(const ModelGraph& m, std::optional<int> through_layer, bool include_heads) {
    const int last = through_layer.value_or(static_cast<int>(m.layers.size()) - 1);
    if (last < 0 || last >= static_cast<int>(m.layers.size())) {
        throw ValidationError("count_bitops: layer index " + std::to_string(last) + " out of range");
    }
    int64_t total = 0;
    for (int i = 0; i <= last; ++i) total += layer_bitops(m.layers[static_cast<size_t>(i)]);
    if (include_heads) {
        for (size_t h = 0; h < m.exit_heads.size(); ++h) {
            if (m.exit_heads[h].attach_index <= last) total += head_bitops(m, h);
        }
    }
    return total;
}

int64_t head_bitops(const ModelGraph& m, size_t head) {
    int64_t total = 0;
    for (const auto& l : m.exit_heads.at(head).layers) total += layer_bitops(l);
    return total;
}

std::vector<int64_t> exit_costs(const ModelGraph& m) {
    std::vector<int64_t> out;
    int64_t heads_so_far = 0;
    for (size_t h = 0; h < m.exit_heads.size(); ++h) {
        heads_so_far += head_bitops(m, h);
        out.push_back(count_bitops(m, m.exit_heads[h].attach_index) + heads_so_far);
    }
    out.push_back(count_bitops(m) + heads_so_far);
    return out;
}

int64_t storage_bits(const ModelGraph& m, bool include_heads) {
    int64_t total = 0;
    for (const auto& l : m.layers) total += tensor_bits(l);
    if (include_heads) {
        for (const auto& h : m.exit_heads) {
            for (const auto& l : h.layers) total += tensor_bits(l);
        }
    }
    return total;
}

ExpectedCost expected_bitops(const ModelGraph& m, const ExitDecisions& d) {
    if (d.exit_index.empty()) throw ValidationError("expected_bitops: empty dataset");
    const auto costs = exit_costs(m);
    std::vector<int64_t> counts(costs.size(), 0);
    for (int e : d.exit_index) {
        if (e < 0 || static_cast<size_t>(e) >= costs.size()) throw ValidationError("expected_bitops: exit index out of range");
        ++counts[static_cast<size_t>(e)];
    }
    const auto n = static_cast<double>(d.exit_index.size());
    ExpectedCost out;
    // Integer-exact numerator keeps the result independent of sample order.
    __int128 sum = 0;
    for (size_t i = 0; i < costs.size(); ++i) {
        sum += static_cast<__int128>(costs[i]) * counts[i];
        out.exit_distribution.push_back(static_cast<double>(counts[i]) / n);
    }
    out.bitops = static_cast<double>(sum) / n;
    return out;
}

ExpectedCost expected_bitops(const ModelGraph& m, const Tensor& x, double tau) {
    if (x.rank() == 0 || x.dim(0) == 0) throw ValidationError("expected_bitops: empty dataset");
    return expected_bitops(m, predict_with_exits(m, x, tau));
}

BaselineCost baseline_cost(const ModelGraph& original) {
    ModelGraph ref = original;
    ref.exit_heads.clear();
    for (auto& l : ref.layers) {
        l.weight_bits = kFullPrecisionBits;
        l.act_bits = kFullPrecisionBits;
    }
    return {count_bitops(ref), storage_bits(ref)};
}

CostReport cost_report(const BaselineCost& original, const ModelGraph& m, const ExitDecisions& decisions) {
    CostReport r;
    for (const auto& l : m.layers) r.macs_per_layer.push_back(count_macs(l));
    r.bitops_static = count_bitops(m);
    r.storage_bits = storage_bits(m);
    if (m.exit_heads.empty()) {
        r.expected_bitops = static_cast<double>(r.bitops_static);
        r.exit_distribution = {1.0};
    } else {
        const ExpectedCost e = expected_bitops(m, decisions);
        r.expected_bitops = e.bitops;
        r.exit_distribution = e.exit_distribution;
    }
    if (!(r.expected_bitops > 0.0) || r.storage_bits <= 0) throw ValidationError("cost_report: compressed cost is zero");
    r.bitops_cr = static_cast<double>(original.bitops) / r.expected_bitops;
    r.cr = static_cast<double>(original.storage_bits) / static_cast<double>(r.storage_bits);
    return r;
}

Evaluation evaluate(const BaselineCost& original, const ModelGraph& m, const Dataset& data, double tau) {
    const ExitDecisions d = predict_with_exits(m, data.images, tau);
    return {exit_accuracy(d, data), cost_report(original, m, d)};
}

}  // namespace ocmp
