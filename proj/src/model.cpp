#include "ocmp/model.hpp"

#include "ocmp/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

namespace ocmp {

namespace {

LayerSpec conv(int64_t in, int64_t out, int k, int stride, int pad) {
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel = k;
    l.stride = stride;
    l.pad = pad;
    return l;
}

LayerSpec dense(int64_t in, int64_t out) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in_channels = in;
    l.out_channels = out;
    return l;
}

LayerSpec simple(LayerKind kind, int window = 0) {
    LayerSpec l;
    l.kind = kind;
    l.kernel = window;
    return l;
}

LayerSpec residual(int skip_from) {
    LayerSpec l;
    l.kind = LayerKind::ResidualAdd;
    l.skip_from = skip_from;
    return l;
}

int64_t conv_out(int64_t in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

ActShape infer_layer(LayerSpec& l, const ActShape& in, const std::vector<LayerSpec>& prior, size_t index) {
    const std::string where = to_string(l.kind) + " layer " + std::to_string(index);
    l.in_shape = in;
    switch (l.kind) {
        case LayerKind::Conv2d: {
            if (in.rank != 4 || in.c != l.in_channels) {
                throw ShapeError(where + ": expects " + std::to_string(l.in_channels) + " input channels, got " +
                                 to_string(in));
            }
            const int64_t h = conv_out(in.h, l.kernel, l.stride, l.pad);
            const int64_t w = conv_out(in.w, l.kernel, l.stride, l.pad);
            if (h <= 0 || w <= 0) throw ShapeError(where + ": kernel larger than padded input " + to_string(in));
            return l.out_shape = ActShape{l.out_channels, h, w, 4};
        }
        case LayerKind::Dense:
            if (in.numel() != l.in_channels) {
                throw ShapeError(where + ": expects " + std::to_string(l.in_channels) + " input features, got " +
                                 to_string(in));
            }
            return l.out_shape = ActShape{l.out_channels, 1, 1, 2};
        case LayerKind::Relu:
        case LayerKind::Tanh:
            return l.out_shape = in;
        case LayerKind::AvgPool:
        case LayerKind::MaxPool:
            if (l.kernel == 0) {
                if (l.kind == LayerKind::MaxPool) throw ShapeError(where + ": global max pooling is not supported");
                return l.out_shape = ActShape{in.c, 1, 1, 2};
            }
            if (in.rank != 4 || in.h < l.kernel || in.w < l.kernel) {
                throw ShapeError(where + ": window " + std::to_string(l.kernel) + " on " + to_string(in));
            }
            return l.out_shape = ActShape{in.c, in.h / l.kernel, in.w / l.kernel, 4};
        case LayerKind::Flatten:
            return l.out_shape = ActShape{in.numel(), 1, 1, 2};
        case LayerKind::ResidualAdd: {
            if (l.skip_from < 0 || static_cast<size_t>(l.skip_from) >= index) {
                throw ShapeError(where + ": skip source " + std::to_string(l.skip_from) + " out of range");
            }
            const ActShape& skip = prior[static_cast<size_t>(l.skip_from)].out_shape;
            if (!(skip == in)) throw ShapeError(where + ": adds " + to_string(in) + " and " + to_string(skip));
            return l.out_shape = in;
        }
    }
    throw ShapeError(where + ": unknown kind");
}

void infer_head(ExitHead& head, const ActShape& attach) {
    ActShape cur = attach;
    for (size_t i = 0; i < head.layers.size(); ++i) cur = infer_layer(head.layers[i], cur, head.layers, i);
}

int find_root(std::vector<int>& parent, int x) {
    while (parent[static_cast<size_t>(x)] != x) {
        parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
        x = parent[static_cast<size_t>(x)];
    }
    return x;
}

bool same_bits(const Tensor& a, const Tensor& b) { return a.identical(b); }

bool same_layer(const LayerSpec& a, const LayerSpec& b) {
    return a.kind == b.kind && a.in_channels == b.in_channels && a.out_channels == b.out_channels &&
           a.kernel == b.kernel && a.stride == b.stride && a.pad == b.pad && a.skip_from == b.skip_from &&
           a.weight_bits == b.weight_bits && a.act_bits == b.act_bits &&
           std::memcmp(&a.act_range, &b.act_range, sizeof(float)) == 0 && a.in_shape == b.in_shape &&
           a.out_shape == b.out_shape && same_bits(a.weight, b.weight) && same_bits(a.bias, b.bias);
}

Var layer_forward(Tape& tape, const LayerSpec& l, Var x, const std::vector<Var>& outs, bool grad,
                  std::vector<Var>& params) {
    switch (l.kind) {
        case LayerKind::Conv2d:
        case LayerKind::Dense: {
            Var w = tape.leaf(l.weight, grad);
            Var b = tape.leaf(l.bias, grad);
            params.push_back(w);
            params.push_back(b);
            Var xin = fake_quant_act(x, l.act_bits, l.act_range);
            Var weff = fake_quant_weight(w, l.weight_bits);
            return l.kind == LayerKind::Conv2d ? ops::conv2d(xin, weff, b, l.stride, l.pad) : ops::dense(xin, weff, b);
        }
        case LayerKind::Relu:
            return ops::relu(x);
        case LayerKind::Tanh:
            return ops::tanh(x);
        case LayerKind::AvgPool:
            return l.kernel == 0 ? ops::global_avgpool(x) : ops::avgpool(x, l.kernel);
        case LayerKind::MaxPool:
            return ops::maxpool(x, l.kernel);
        case LayerKind::Flatten:
            return ops::flatten(x);
        case LayerKind::ResidualAdd:
            return ops::add(x, outs.at(static_cast<size_t>(l.skip_from)));
    }
    throw ShapeError("forward: unknown layer kind");
}

float max_value(const Tensor& t) {
    float m = 0.0f;
    for (float v : t.values()) m = std::max(m, v);
    return m;
}

}  // namespace

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Dense: return "dense";
        case LayerKind::Relu: return "relu";
        case LayerKind::Tanh: return "tanh";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::ResidualAdd: return "residual_add";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
    static const LayerKind all[] = {LayerKind::Conv2d,  LayerKind::Dense,   LayerKind::Relu,    LayerKind::Tanh,
                                    LayerKind::AvgPool, LayerKind::MaxPool, LayerKind::Flatten, LayerKind::ResidualAdd};
    for (LayerKind k : all) {
        if (to_string(k) == name) return k;
    }
    throw ValidationError("unknown layer kind '" + name + "'");
}

std::string to_string(const ActShape& s) {
    std::ostringstream os;
    if (s.rank == 2) {
        os << '[' << s.c << ']';
    } else {
        os << '[' << s.c << 'x' << s.h << 'x' << s.w << ']';
    }
    return os.str();
}

int ModelGraph::final_classifier() const {
    for (size_t i = layers.size(); i-- > 0;) {
        if (layers[i].has_params()) return static_cast<int>(i);
    }
    return -1;
}

std::vector<int> ModelGraph::mac_layers() const {
    std::vector<int> out;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].has_params()) out.push_back(static_cast<int>(i));
    }
    return out;
}

bool ModelGraph::quantized() const {
    for (const auto& l : layers) {
        if (l.has_params() && (l.weight_bits < kFullPrecisionBits || l.act_bits < kFullPrecisionBits)) return true;
    }
    return false;
}

const std::vector<std::string>& model_registry() {
    static const std::vector<std::string> names = {"toy_cnn", "toy_mlp", "toy_resnet"};
    return names;
}

int64_t scaled_channels(int64_t base, double multiplier) {
    if (!(multiplier > 0.0) || !std::isfinite(multiplier)) {
        throw ValidationError("width multiplier must be positive, got " + std::to_string(multiplier));
    }
    return std::max<int64_t>(1, std::llround(static_cast<double>(base) * multiplier));
}

ModelGraph build_model(const std::string& arch, double width_multiplier, int num_classes, uint64_t seed,
                       ActShape input) {
    if (num_classes < 2) throw ValidationError("num_classes must be at least 2");
    if (input.c <= 0 || input.h <= 0 || input.w <= 0) throw ValidationError("input shape must be positive");
    ModelGraph m;
    m.arch = arch;
    m.width_multiplier = width_multiplier;
    m.num_classes = num_classes;
    m.input_shape = input;
    m.seed = seed;
    auto ch = [&](int64_t base) { return scaled_channels(base, width_multiplier); };
    auto& L = m.layers;

    if (arch == "toy_cnn") {
        const int64_t c1 = ch(16), c2 = ch(32), c3 = ch(64);
        L = {conv(input.c, c1, 3, 1, 1), simple(LayerKind::Relu),    simple(LayerKind::MaxPool, 2),
             conv(c1, c2, 3, 1, 1),      simple(LayerKind::Relu),    simple(LayerKind::MaxPool, 2),
             conv(c2, c3, 3, 1, 1),      simple(LayerKind::Relu),    simple(LayerKind::AvgPool, 0),
             simple(LayerKind::Flatten), dense(c3, num_classes)};
    } else if (arch == "toy_mlp") {
        const int64_t h1 = ch(128), h2 = ch(64);
        L = {dense(input.numel(), h1), simple(LayerKind::Relu), dense(h1, h2), simple(LayerKind::Relu),
             dense(h2, num_classes)};
    } else if (arch == "toy_resnet") {
        const int64_t c1 = ch(16), c2 = ch(32);
        L = {conv(input.c, c1, 3, 1, 1),  // 0 stem
             simple(LayerKind::Relu),     // 1
             conv(c1, c1, 3, 1, 1),       // 2
             simple(LayerKind::Relu),     // 3
             conv(c1, c1, 3, 1, 1),       // 4
             residual(1),                 // 5
             simple(LayerKind::Relu),     // 6
             conv(c1, c2, 3, 2, 1),       // 7 transition
             simple(LayerKind::Relu),     // 8
             conv(c2, c2, 3, 1, 1),       // 9
             simple(LayerKind::Relu),     // 10
             conv(c2, c2, 3, 1, 1),       // 11
             residual(8),                 // 12
             simple(LayerKind::Relu),     // 13
             simple(LayerKind::AvgPool, 0),
             simple(LayerKind::Flatten),
             dense(c2, num_classes)};
    } else {
        std::string names;
        for (const auto& n : model_registry()) names += (names.empty() ? "" : ", ") + n;
        throw ValidationError("unknown architecture '" + arch + "' (registry: " + names + ")");
    }

    infer_shapes(m);
    std::mt19937_64 rng(seed);
    for (auto& l : L) {
        if (l.has_params()) init_layer(l, rng());
    }
    m.residual_groups = derive_residual_groups(m);
    validate_model(m);
    return m;
}

void init_layer(LayerSpec& l, uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int64_t k2 = l.kind == LayerKind::Conv2d ? int64_t{l.kernel} * l.kernel : 1;
    const int64_t fan_in = l.in_channels * k2;
    const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
    std::uniform_real_distribution<float> dist(-bound, bound);
    l.weight = l.kind == LayerKind::Conv2d ? Tensor({l.out_channels, l.in_channels, l.kernel, l.kernel})
                                           : Tensor({l.out_channels, l.in_channels});
    for (float& v : l.weight.values()) v = dist(rng);
    l.bias = Tensor({l.out_channels});
}

void infer_shapes(ModelGraph& m) {
    ActShape cur = m.input_shape;
    for (size_t i = 0; i < m.layers.size(); ++i) cur = infer_layer(m.layers[i], cur, m.layers, i);
    for (auto& head : m.exit_heads) {
        if (head.attach_index < 0 || static_cast<size_t>(head.attach_index) >= m.layers.size()) {
            throw ShapeError("exit head attach index " + std::to_string(head.attach_index) + " out of range");
        }
        infer_head(head, m.layers[static_cast<size_t>(head.attach_index)].out_shape);
    }
}

std::vector<int> channel_sources(const ModelGraph& m) {
    const size_t n = m.layers.size();
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::vector<int> source(n, -1);
    for (size_t i = 0; i < n; ++i) {
        const auto& l = m.layers[i];
        const int prev = i == 0 ? -1 : source[i - 1];
        if (l.has_params()) {
            source[i] = static_cast<int>(i);
        } else if (l.kind == LayerKind::ResidualAdd) {
            const int skip = source[static_cast<size_t>(l.skip_from)];
            if (prev >= 0 && skip >= 0) {
                const int a = find_root(parent, prev), b = find_root(parent, skip);
                parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
            }
            source[i] = prev >= 0 ? prev : skip;
        } else {
            source[i] = prev;
        }
    }
    for (auto& s : source) {
        if (s >= 0) s = find_root(parent, s);
    }
    return source;
}

std::vector<std::vector<int>> derive_residual_groups(const ModelGraph& m) {
    const auto source = channel_sources(m);
    std::map<int, std::vector<int>> groups;
    for (int i : m.mac_layers()) groups[source[static_cast<size_t>(i)]].push_back(i);
    std::vector<std::vector<int>> out;
    for (auto& [root, members] : groups) {
        if (members.size() > 1) out.push_back(members);
    }
    return out;
}

void validate_model(const ModelGraph& m) {
    if (m.layers.empty()) throw ValidationError("model has no layers");
    ModelGraph copy_shapes;
    copy_shapes.input_shape = m.input_shape;
    copy_shapes.layers = m.layers;
    copy_shapes.exit_heads = m.exit_heads;
    infer_shapes(copy_shapes);
    for (size_t i = 0; i < m.layers.size(); ++i) {
        if (!(copy_shapes.layers[i].out_shape == m.layers[i].out_shape)) {
            throw ShapeError("layer " + std::to_string(i) + ": stored shape disagrees with inferred shape");
        }
    }
    auto check_params = [](const LayerSpec& l, const std::string& where) {
        validate_bits(l.weight_bits, (where + " weight_bits").c_str());
        validate_bits(l.act_bits, (where + " act_bits").c_str());
        if (!l.has_params()) return;
        const Shape expect = l.kind == LayerKind::Conv2d ? Shape{l.out_channels, l.in_channels, l.kernel, l.kernel}
                                                         : Shape{l.out_channels, l.in_channels};
        if (l.weight.shape() != expect) {
            throw ShapeError(where + ": weight " + shape_str(l.weight.shape()) + ", expected " + shape_str(expect));
        }
        if (l.bias.shape() != Shape{l.out_channels}) throw ShapeError(where + ": bias " + shape_str(l.bias.shape()));
        if (!(l.act_range > 0.0f)) throw ValidationError(where + ": act_range must be positive");
    };
    for (size_t i = 0; i < m.layers.size(); ++i) check_params(m.layers[i], "layer " + std::to_string(i));
    const int final_idx = m.final_classifier();
    if (final_idx < 0 || m.layers[static_cast<size_t>(final_idx)].out_channels != m.num_classes) {
        throw ValidationError("final classifier must produce num_classes outputs");
    }
    for (const auto& group : m.residual_groups) {
        for (int idx : group) {
            if (m.layers.at(static_cast<size_t>(idx)).out_channels !=
                m.layers.at(static_cast<size_t>(group.front())).out_channels) {
                throw ValidationError("residual group members have unequal output channels");
            }
        }
    }
    int last = -1;
    for (size_t h = 0; h < m.exit_heads.size(); ++h) {
        const auto& head = m.exit_heads[h];
        if (head.attach_index <= last) throw ValidationError("exit heads must attach at strictly increasing indices");
        if (head.attach_index >= final_idx) throw ValidationError("exit head must attach before the final classifier");
        last = head.attach_index;
        if (head.layers.empty() || !head.classifier().has_params() || head.classifier().out_channels != m.num_classes) {
            throw ValidationError("exit head must end in a num_classes classifier");
        }
        for (const auto& l : head.layers) check_params(l, "exit head " + std::to_string(h));
    }
}

std::pair<int, int> bits_at(const ModelGraph& m, int index) {
    for (int i = std::min<int>(index, static_cast<int>(m.layers.size()) - 1); i >= 0; --i) {
        const auto& l = m.layers[static_cast<size_t>(i)];
        if (l.has_params()) return {l.weight_bits, l.act_bits};
    }
    return {kFullPrecisionBits, kFullPrecisionBits};
}

ModelGraph attach_exit_heads(const ModelGraph& m, std::span<const int> positions, uint64_t seed) {
    if (positions.empty()) throw ValidationError("attach_exit_heads: no positions given");
    const int final_idx = m.final_classifier();
    std::vector<int> all;
    for (const auto& h : m.exit_heads) all.push_back(h.attach_index);
    for (size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] < 0 || positions[i] >= final_idx) {
            throw ValidationError("exit position " + std::to_string(positions[i]) +
                                  " out of range (must precede final classifier at " + std::to_string(final_idx) + ")");
        }
        if (i > 0 && positions[i] <= positions[i - 1]) throw ValidationError("exit positions must be strictly increasing");
        all.push_back(positions[i]);
    }
    ModelGraph out = m;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (int pos : positions) {
        ExitHead head;
        head.attach_index = pos;
        const ActShape& at = m.layers[static_cast<size_t>(pos)].out_shape;
        head.layers.push_back(simple(LayerKind::AvgPool, 0));
        head.layers.push_back(dense(at.c, m.num_classes));
        const auto [wb, ab] = bits_at(m, pos);
        head.classifier().weight_bits = wb;
        head.classifier().act_bits = ab;
        init_layer(head.classifier(), rng());
        out.exit_heads.push_back(std::move(head));
    }
    std::sort(out.exit_heads.begin(), out.exit_heads.end(),
              [](const ExitHead& a, const ExitHead& b) { return a.attach_index < b.attach_index; });
    infer_shapes(out);
    validate_model(out);
    return out;
}

bool identical(const ModelGraph& a, const ModelGraph& b) {
    if (a.arch != b.arch || std::memcmp(&a.width_multiplier, &b.width_multiplier, sizeof(double)) != 0 ||
        a.num_classes != b.num_classes || !(a.input_shape == b.input_shape) || a.seed != b.seed ||
        a.layers.size() != b.layers.size() || a.residual_groups != b.residual_groups ||
        a.exit_heads.size() != b.exit_heads.size() || a.meta != b.meta) {
        return false;
    }
    for (size_t i = 0; i < a.layers.size(); ++i) {
        if (!same_layer(a.layers[i], b.layers[i])) return false;
    }
    for (size_t h = 0; h < a.exit_heads.size(); ++h) {
        const auto& x = a.exit_heads[h];
        const auto& y = b.exit_heads[h];
        if (x.attach_index != y.attach_index || x.layers.size() != y.layers.size()) return false;
        for (size_t i = 0; i < x.layers.size(); ++i) {
            if (!same_layer(x.layers[i], y.layers[i])) return false;
        }
    }
    return true;
}

std::vector<Tensor*> body_parameters(ModelGraph& m) {
    std::vector<Tensor*> out;
    for (auto& l : m.layers) {
        if (l.has_params()) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
        }
    }
    return out;
}

std::vector<Tensor*> head_parameters(ModelGraph& m) {
    std::vector<Tensor*> out;
    for (auto& h : m.exit_heads) {
        for (auto& l : h.layers) {
            if (l.has_params()) {
                out.push_back(&l.weight);
                out.push_back(&l.bias);
            }
        }
    }
    return out;
}

size_t parameter_count(const ModelGraph& m, bool include_heads) {
    size_t n = 0;
    for (const auto& l : m.layers) {
        if (l.has_params()) n += l.weight.size() + l.bias.size();
    }
    if (include_heads) {
        for (const auto& h : m.exit_heads) {
            for (const auto& l : h.layers) {
                if (l.has_params()) n += l.weight.size() + l.bias.size();
            }
        }
    }
    return n;
}

TapeForward forward(Tape& tape, const ModelGraph& m, const Tensor& x, const ForwardOptions& opts) {
    if (x.rank() != 4 || x.dim(1) != m.input_shape.c || x.dim(2) != m.input_shape.h || x.dim(3) != m.input_shape.w) {
        throw ShapeError("forward: input " + shape_str(x.shape()) + " does not match model input " +
                         to_string(m.input_shape));
    }
    TapeForward out;
    std::vector<Var> outs;
    outs.reserve(m.layers.size());
    if (opts.stats) {
        opts.stats->layer_max.resize(m.layers.size(), 0.0f);
        opts.stats->head_max.resize(m.exit_heads.size(), 0.0f);
    }
    size_t next_head = 0;
    Var cur = tape.constant(x);
    for (size_t i = 0; i < m.layers.size(); ++i) {
        const auto& l = m.layers[i];
        if (opts.stats && l.has_params()) {
            opts.stats->layer_max[i] = std::max(opts.stats->layer_max[i], max_value(cur.value()));
        }
        cur = layer_forward(tape, l, cur, outs, opts.grad_body, out.body_params);
        outs.push_back(cur);
        while (opts.heads && next_head < m.exit_heads.size() &&
               m.exit_heads[next_head].attach_index == static_cast<int>(i)) {
            const auto& head = m.exit_heads[next_head];
            Var h = cur;
            for (const auto& hl : head.layers) {
                if (opts.stats && hl.has_params()) {
                    opts.stats->head_max[next_head] = std::max(opts.stats->head_max[next_head], max_value(h.value()));
                }
                h = layer_forward(tape, hl, h, outs, opts.grad_heads, out.head_params);
            }
            out.head_logits.push_back(h);
            ++next_head;
        }
    }
    out.logits = cur;
    return out;
}

namespace {
constexpr int64_t kInferBatch = 256;
}

std::vector<Tensor> infer_all_logits(const ModelGraph& m, const Tensor& x) {
    const int64_t n = x.dim(0);
    const size_t outputs = m.exit_heads.size() + 1;
    std::vector<std::vector<float>> acc(outputs);
    for (int64_t begin = 0; begin < n; begin += kInferBatch) {
        const int64_t end = std::min(n, begin + kInferBatch);
        Tape tape;
        ForwardOptions opts;
        opts.heads = !m.exit_heads.empty();
        auto fw = forward(tape, m, slice_rows(x, begin, end), opts);
        for (size_t h = 0; h < fw.head_logits.size(); ++h) {
            const auto& v = fw.head_logits[h].value().vec();
            acc[h].insert(acc[h].end(), v.begin(), v.end());
        }
        const auto& v = fw.logits.value().vec();
        acc.back().insert(acc.back().end(), v.begin(), v.end());
    }
    std::vector<Tensor> out;
    for (auto& a : acc) out.emplace_back(Shape{n, static_cast<int64_t>(m.num_classes)}, std::move(a));
    return out;
}

Tensor infer_logits(const ModelGraph& m, const Tensor& x) {
    const int64_t n = x.dim(0);
    std::vector<float> acc;
    acc.reserve(static_cast<size_t>(n * m.num_classes));
    for (int64_t begin = 0; begin < n; begin += kInferBatch) {
        const int64_t end = std::min(n, begin + kInferBatch);
        Tape tape;
        auto fw = forward(tape, m, slice_rows(x, begin, end), ForwardOptions{});
        const auto& v = fw.logits.value().vec();
        acc.insert(acc.end(), v.begin(), v.end());
    }
    return Tensor({n, static_cast<int64_t>(m.num_classes)}, std::move(acc));
}

void calibrate_activation_ranges(ModelGraph& m, const Tensor& x) {
    // Observe unclipped activations: run a copy with activation quantization off.
    ModelGraph probe = m;
    for (auto& l : probe.layers) l.act_bits = kFullPrecisionBits;
    for (auto& h : probe.exit_heads) {
        for (auto& l : h.layers) l.act_bits = kFullPrecisionBits;
    }
    ActivationStats stats;
    const int64_t n = x.dim(0);
    for (int64_t begin = 0; begin < n; begin += kInferBatch) {
        const int64_t end = std::min(n, begin + kInferBatch);
        Tape tape;
        ForwardOptions opts;
        opts.heads = !m.exit_heads.empty();
        opts.stats = &stats;
        forward(tape, probe, slice_rows(x, begin, end), opts);
    }
    for (size_t i = 0; i < m.layers.size(); ++i) {
        if (m.layers[i].has_params()) m.layers[i].act_range = stats.layer_max[i] > 0.0f ? stats.layer_max[i] : 1.0f;
    }
    for (size_t h = 0; h < m.exit_heads.size(); ++h) {
        m.exit_heads[h].classifier().act_range = stats.head_max[h] > 0.0f ? stats.head_max[h] : 1.0f;
    }
}

}  // namespace ocmp
