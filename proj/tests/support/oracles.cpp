#include "oracles.hpp"

#include "ocmp/quant.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace oracle {

using ocmp::LayerKind;
using ocmp::LayerSpec;
using ocmp::ModelGraph;
using ocmp::Tensor;

std::vector<std::vector<double>> body_params_double(const ModelGraph& m) {
    std::vector<std::vector<double>> out;
    for (const auto& l : m.layers) {
        if (!l.has_params()) continue;
        out.emplace_back(l.weight.values().begin(), l.weight.values().end());
        out.emplace_back(l.bias.values().begin(), l.bias.values().end());
    }
    return out;
}

namespace {

struct Act {
    int64_t c = 0, h = 1, w = 1;
    std::vector<double> v;  // N * c * h * w
    int64_t per() const { return c * h * w; }
};

Act conv(const Act& x, int64_t n, const std::vector<double>& wt, const std::vector<double>& b, int64_t out,
         int k, int stride, int pad) {
    Act y;
    y.c = out;
    y.h = (x.h + 2 * pad - k) / stride + 1;
    y.w = (x.w + 2 * pad - k) / stride + 1;
    y.v.assign(static_cast<size_t>(n * y.per()), 0.0);
    for (int64_t s = 0; s < n; ++s)
        for (int64_t o = 0; o < out; ++o)
            for (int64_t i = 0; i < y.h; ++i)
                for (int64_t j = 0; j < y.w; ++j) {
                    double acc = b[static_cast<size_t>(o)];
                    for (int64_t c = 0; c < x.c; ++c)
                        for (int di = 0; di < k; ++di)
                            for (int dj = 0; dj < k; ++dj) {
                                const int64_t r = i * stride - pad + di, q = j * stride - pad + dj;
                                if (r < 0 || q < 0 || r >= x.h || q >= x.w) continue;
                                acc += wt[static_cast<size_t>(((o * x.c + c) * k + di) * k + dj)] *
                                       x.v[static_cast<size_t>(((s * x.c + c) * x.h + r) * x.w + q)];
                            }
                    y.v[static_cast<size_t>(((s * out + o) * y.h + i) * y.w + j)] = acc;
                }
    return y;
}

Act dense(const Act& x, int64_t n, const std::vector<double>& wt, const std::vector<double>& b, int64_t out) {
    Act y;
    y.c = out;
    const int64_t in = x.per();
    y.v.assign(static_cast<size_t>(n * out), 0.0);
    for (int64_t s = 0; s < n; ++s)
        for (int64_t o = 0; o < out; ++o) {
            double acc = b[static_cast<size_t>(o)];
            for (int64_t i = 0; i < in; ++i) acc += wt[static_cast<size_t>(o * in + i)] * x.v[static_cast<size_t>(s * in + i)];
            y.v[static_cast<size_t>(s * out + o)] = acc;
        }
    return y;
}

Act pool(const Act& x, int64_t n, int k, bool max) {
    Act y;
    y.c = x.c;
    if (k == 0) {  // global average
        y.v.assign(static_cast<size_t>(n * x.c), 0.0);
        const int64_t hw = x.h * x.w;
        for (int64_t s = 0; s < n * x.c; ++s) {
            double acc = 0.0;
            for (int64_t i = 0; i < hw; ++i) acc += x.v[static_cast<size_t>(s * hw + i)];
            y.v[static_cast<size_t>(s)] = acc / static_cast<double>(hw);
        }
        return y;
    }
    y.h = x.h / k;
    y.w = x.w / k;
    y.v.assign(static_cast<size_t>(n * y.per()), 0.0);
    for (int64_t s = 0; s < n * x.c; ++s)
        for (int64_t i = 0; i < y.h; ++i)
            for (int64_t j = 0; j < y.w; ++j) {
                double acc = max ? -INFINITY : 0.0;
                for (int di = 0; di < k; ++di)
                    for (int dj = 0; dj < k; ++dj) {
                        const double v = x.v[static_cast<size_t>((s * x.h + i * k + di) * x.w + j * k + dj)];
                        acc = max ? std::max(acc, v) : acc + v;
                    }
                y.v[static_cast<size_t>((s * y.h + i) * y.w + j)] = max ? acc : acc / (k * k);
            }
    return y;
}

double tanh_norm_f(const Tensor& w) {
    float m = 0.0f;
    for (float v : w.values()) m = std::max(m, std::fabs(std::tanh(v)));
    return m > 0.0f ? m : 1.0f;
}

double max_abs_f(const Tensor& w) {
    float m = 0.0f;
    for (float v : w.values()) m = std::max(m, std::fabs(v));
    return m;
}

// Effective weights of layer `li` (its slot `slot` in the freeze tables).
std::vector<double> effective_weights(const LayerSpec& l, const std::vector<double>& w, QuantFreeze* fz, size_t slot) {
    if (l.weight_bits >= ocmp::kFullPrecisionBits || fz == nullptr) return w;
    if (!fz->recorded) {
        std::vector<double> off(w.size());
        const Tensor q = ocmp::quantize_weights(l.weight, l.weight_bits);
        double m = 1.0, s = 1.0;
        if (l.weight_bits == 1) {
            for (size_t i = 0; i < w.size(); ++i) off[i] = q[i] - w[i];
        } else {
            m = tanh_norm_f(l.weight);
            s = max_abs_f(l.weight);
            for (size_t i = 0; i < w.size(); ++i) {
                const double n = std::tanh(w[i]) * (0.5 / m) + 0.5;
                const double qn = (q[i] / s + 1.0) / 2.0;  // grid value in [0, 1]
                off[i] = qn - n;
            }
        }
        fz->weight_offset.resize(slot + 1);
        fz->weight_norm.resize(slot + 1);
        fz->weight_scale.resize(slot + 1);
        fz->weight_offset[slot] = std::move(off);
        fz->weight_norm[slot] = m;
        fz->weight_scale[slot] = s;
    }
    const auto& off = fz->weight_offset[slot];
    std::vector<double> out(w.size());
    if (l.weight_bits == 1) {
        for (size_t i = 0; i < w.size(); ++i) out[i] = w[i] + off[i];
        return out;
    }
    const double m = fz->weight_norm[slot], s = fz->weight_scale[slot];
    for (size_t i = 0; i < w.size(); ++i) {
        const double n = std::tanh(w[i]) * (0.5 / m) + 0.5;
        out[i] = (2.0 * (n + off[i]) - 1.0) * s;
    }
    return out;
}

void effective_acts(const LayerSpec& l, Act& x, QuantFreeze* fz, size_t slot) {
    if (l.act_bits >= ocmp::kFullPrecisionBits || fz == nullptr) return;
    const double range = l.act_range;
    if (!fz->recorded) {
        std::vector<double> off(x.v.size()), cst(x.v.size());
        std::vector<char> pass(x.v.size());
        for (size_t i = 0; i < x.v.size(); ++i) {
            const float xf = static_cast<float>(x.v[i]);
            const double q = l.act_range * ocmp::quantize_k(xf / l.act_range, l.act_bits);
            pass[i] = x.v[i] >= 0.0 && x.v[i] <= range;
            off[i] = q - x.v[i];
            cst[i] = q;
        }
        fz->act_offset.resize(slot + 1);
        fz->act_pass.resize(slot + 1);
        fz->act_const.resize(slot + 1);
        fz->act_offset[slot] = std::move(off);
        fz->act_pass[slot] = std::move(pass);
        fz->act_const[slot] = std::move(cst);
    }
    for (size_t i = 0; i < x.v.size(); ++i) {
        x.v[i] = fz->act_pass[slot][i] ? x.v[i] + fz->act_offset[slot][i] : fz->act_const[slot][i];
    }
}

}  // namespace

std::vector<double> ref_logits(const ModelGraph& m, const std::vector<std::vector<double>>& params, const Tensor& x,
                               QuantFreeze* freeze) {
    const int64_t n = x.dim(0);
    Act cur;
    cur.c = x.dim(1);
    cur.h = x.dim(2);
    cur.w = x.dim(3);
    cur.v.assign(x.values().begin(), x.values().end());
    std::vector<Act> outs;
    size_t p = 0, slot = 0;
    for (const auto& l : m.layers) {
        switch (l.kind) {
            case LayerKind::Conv2d:
            case LayerKind::Dense: {
                Act in = cur;
                effective_acts(l, in, freeze, slot);
                const auto w = effective_weights(l, params[p], freeze, slot);
                cur = l.kind == LayerKind::Conv2d
                          ? conv(in, n, w, params[p + 1], l.out_channels, l.kernel, l.stride, l.pad)
                          : dense(in, n, w, params[p + 1], l.out_channels);
                p += 2;
                ++slot;
                break;
            }
            case LayerKind::Relu:
                for (double& v : cur.v) v = std::max(v, 0.0);
                break;
            case LayerKind::Tanh:
                for (double& v : cur.v) v = std::tanh(v);
                break;
            case LayerKind::AvgPool: cur = pool(cur, n, l.kernel, false); break;
            case LayerKind::MaxPool: cur = pool(cur, n, l.kernel, true); break;
            case LayerKind::Flatten:
                cur.c = cur.per();
                cur.h = cur.w = 1;
                break;
            case LayerKind::ResidualAdd: {
                const Act& s = outs.at(static_cast<size_t>(l.skip_from));
                for (size_t i = 0; i < cur.v.size(); ++i) cur.v[i] += s.v[i];
                break;
            }
        }
        outs.push_back(cur);
    }
    if (freeze) freeze->recorded = true;
    return cur.v;
}

namespace {

std::vector<double> log_softmax_row(const double* z, int k, double t) {
    double mx = -INFINITY;
    for (int j = 0; j < k; ++j) mx = std::max(mx, z[j] / t);
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += std::exp(z[j] / t - mx);
    std::vector<double> out(static_cast<size_t>(k));
    for (int j = 0; j < k; ++j) out[static_cast<size_t>(j)] = z[j] / t - mx - std::log(s);
    return out;
}

}  // namespace

double ref_cross_entropy(const std::vector<double>& logits, const std::vector<int>& labels, int classes) {
    double loss = 0.0;
    for (size_t i = 0; i < labels.size(); ++i) {
        loss -= log_softmax_row(&logits[i * static_cast<size_t>(classes)], classes, 1.0)[static_cast<size_t>(labels[i])];
    }
    return loss / static_cast<double>(labels.size());
}

double ref_kd(const std::vector<double>& logits, const std::vector<int>& labels, const std::vector<double>& teacher,
              int classes, double temperature, double alpha) {
    double kl = 0.0;
    for (size_t i = 0; i < labels.size(); ++i) {
        const auto ls = log_softmax_row(&logits[i * static_cast<size_t>(classes)], classes, temperature);
        const auto lt = log_softmax_row(&teacher[i * static_cast<size_t>(classes)], classes, temperature);
        for (size_t j = 0; j < ls.size(); ++j) kl += std::exp(lt[j]) * (lt[j] - ls[j]);
    }
    kl /= static_cast<double>(labels.size());
    return alpha * ref_cross_entropy(logits, labels, classes) + (1.0 - alpha) * temperature * temperature * kl;
}

GradCheck check_gradients(const ModelGraph& m, const Tensor& x, const std::vector<int>& labels, LossKind loss,
                          size_t samples, uint64_t seed, double tol) {
    constexpr float kT = 4.0f;
    constexpr float kAlpha = 0.3f;
    const int classes = m.num_classes;
    std::mt19937_64 rng(seed);
    Tensor teacher({x.dim(0), classes});
    std::normal_distribution<float> nd(0.0f, 2.0f);
    for (float& v : teacher.values()) v = nd(rng);
    const std::vector<double> teacher_d(teacher.values().begin(), teacher.values().end());

    ocmp::Tape tape;
    ocmp::ForwardOptions opts;
    opts.grad_body = true;
    auto fw = ocmp::forward(tape, m, x, opts);
    ocmp::Var l = loss == LossKind::CrossEntropy ? ocmp::ops::cross_entropy(fw.logits, labels)
                                                 : ocmp::kd_loss(fw.logits, labels, teacher, kT, kAlpha);
    ocmp::backward(tape, l);
    const auto grads = ocmp::gradients(tape, fw.body_params);

    auto params = body_params_double(m);
    QuantFreeze freeze;
    auto eval = [&](const std::vector<std::vector<double>>& ps) {
        const auto z = ref_logits(m, ps, x, &freeze);
        return loss == LossKind::CrossEntropy ? ref_cross_entropy(z, labels, classes)
                                              : ref_kd(z, labels, teacher_d, classes, kT, kAlpha);
    };
    eval(params);  // records the straight-through offsets at the base point

    size_t total = 0;
    for (const auto& p : params) total += p.size();
    GradCheck out;
    std::uniform_int_distribution<size_t> pick(0, total - 1);
    for (size_t s = 0; s < samples; ++s) {
        size_t flat = pick(rng), t = 0;
        while (flat >= params[t].size()) flat -= params[t++].size();
        double& w = params[t][flat];
        const double w0 = w;
        const double h = 1e-5 * std::max(1.0, std::fabs(w0));
        w = w0 + h;
        const double up = eval(params);
        w = w0 - h;
        const double down = eval(params);
        w = w0;
        const double fd = (up - down) / (2.0 * h);
        const double an = grads[t][flat];
        const double err = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-6});
        out.worst = std::max(out.worst, err);
        ++out.coords;
        if (err < tol) ++out.passed;
    }
    return out;
}

std::vector<ocmp::ParetoPoint> brute_force_front(const std::vector<ocmp::ParetoPoint>& pts) {
    std::vector<ocmp::ParetoPoint> out;
    for (size_t i = 0; i < pts.size(); ++i) {
        bool keep = true;
        for (size_t j = 0; j < pts.size() && keep; ++j) {
            if (j == i) continue;
            const bool ge = pts[j].accuracy >= pts[i].accuracy && pts[j].bitops_cr >= pts[i].bitops_cr;
            const bool gt = pts[j].accuracy > pts[i].accuracy || pts[j].bitops_cr > pts[i].bitops_cr;
            if (ge && gt) keep = false;
            if (j < i && pts[j].accuracy == pts[i].accuracy && pts[j].bitops_cr == pts[i].bitops_cr) keep = false;
        }
        if (keep) out.push_back(pts[i]);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
        return a.bitops_cr > b.bitops_cr;
    });
    return out;
}

std::vector<ocmp::ParetoPoint> random_points(size_t n, uint64_t seed, bool coarse) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> acc(25.0, 100.0), lcr(0.0, 10.0);
    std::uniform_int_distribution<int> grid(0, 20);
    std::vector<ocmp::ParetoPoint> out(n);
    for (size_t i = 0; i < n; ++i) {
        // Coarse grids produce many exact ties in one or both objectives.
        out[i].accuracy = coarse ? 25.0 + 3.75 * grid(rng) : acc(rng);
        out[i].bitops_cr = coarse ? std::exp2(0.5 * grid(rng)) : std::exp2(lcr(rng));
        out[i].config_id = "p" + std::to_string(i);
    }
    return out;
}

bool same_front(const std::vector<ocmp::ParetoPoint>& a, const std::vector<ocmp::ParetoPoint>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].accuracy != b[i].accuracy || a[i].bitops_cr != b[i].bitops_cr || a[i].config_id != b[i].config_id) {
            return false;
        }
    }
    return true;
}

const std::vector<ArchMacs>& literal_bitops_table() {
    // 1x16x16 input, 4 classes, width 1. conv MACs = out * in * k*k * Ho * Wo.
    static const std::vector<ArchMacs> table = {
        // 16*1*9*256, 32*16*9*64, 64*32*9*16, 64*4
        {"toy_cnn", {36864, 294912, 294912, 256}, 626944, 641990656},
        // 256*128, 128*64, 64*4
        {"toy_mlp", {32768, 8192, 256}, 41216, 42205184},
        // stem 16*1*9*256; two 16->16 convs at 16x16; stride-2 16->32 to 8x8;
        // two 32->32 convs at 8x8; dense 32*4
        {"toy_resnet", {36864, 589824, 589824, 294912, 589824, 589824, 128}, 2691200, 2755788800},
    };
    return table;
}

Tensor random_images(int64_t n, const ocmp::ActShape& s, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor t({n, s.c, s.h, s.w});
    for (float& v : t.values()) v = u(rng);
    return t;
}

std::vector<int> random_labels(int64_t n, int classes, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(0, classes - 1);
    std::vector<int> out(static_cast<size_t>(n));
    for (int& v : out) v = d(rng);
    return out;
}

}  // namespace oracle
