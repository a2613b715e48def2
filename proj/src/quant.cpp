#include "ocmp/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ocmp {

namespace {

double levels(int k) { return std::ldexp(1.0, k) - 1.0; }

float max_abs(const Tensor& t) {
    float m = 0.0f;
    for (float v : t.values()) m = std::max(m, std::fabs(v));
    return m;
}

// tanh normalisation constant; all-zero tensors use 1.
float tanh_norm(const Tensor& w) {
    float m = 0.0f;
    for (float v : w.values()) m = std::max(m, std::fabs(std::tanh(v)));
    return m > 0.0f ? m : 1.0f;
}

}  // namespace

void validate_bits(int bits, const char* what) {
    if (bits < 1 || bits > kFullPrecisionBits) {
        throw ValidationError(std::string(what) + " must lie in [1, 32], got " + std::to_string(bits));
    }
}

float quantize_k(float x, int k) {
    validate_bits(k, "quantize_k bits");
    const double v = std::clamp(static_cast<double>(x), 0.0, 1.0);
    const double n = levels(k);
    return static_cast<float>(std::round(v * n) / n);
}

float weight_scale(const Tensor& w, int bits) {
    if (bits >= kFullPrecisionBits) return 1.0f;
    if (bits == 1) {
        double s = 0.0;
        for (float v : w.values()) s += std::fabs(v);
        return w.empty() ? 0.0f : static_cast<float>(s / static_cast<double>(w.size()));
    }
    return max_abs(w);
}

Tensor quantize_weights(const Tensor& w, int bits) {
    validate_bits(bits, "weight bits");
    if (bits >= kFullPrecisionBits) return w;
    Tensor out(w.shape());
    const float s = weight_scale(w, bits);
    if (bits == 1) {
        for (size_t i = 0; i < w.size(); ++i) out[i] = w[i] >= 0.0f ? s : -s;
        return out;
    }
    const float m = tanh_norm(w);
    for (size_t i = 0; i < w.size(); ++i) {
        const float n = std::tanh(w[i]) * (0.5f / m) + 0.5f;
        out[i] = (2.0f * quantize_k(n, bits) - 1.0f) * s;
    }
    return out;
}

Tensor quantize_activations(const Tensor& x, int bits, float range) {
    validate_bits(bits, "activation bits");
    if (bits >= kFullPrecisionBits) return x;
    if (!(range > 0.0f)) throw ValidationError("activation range must be positive");
    Tensor out(x.shape());
    for (size_t i = 0; i < x.size(); ++i) out[i] = range * quantize_k(x[i] / range, bits);
    return out;
}

Var fake_quant_weight(Var w, int bits) {
    validate_bits(bits, "weight bits");
    if (bits >= kFullPrecisionBits) return w;
    const Tensor& wv = w.value();
    if (bits == 1) {
        const float inf = std::numeric_limits<float>::infinity();
        return ops::straight_through(w, quantize_weights(wv, 1), -inf, inf);
    }
    const float m = tanh_norm(wv);
    const float s = max_abs(wv);
    Var t = ops::tanh(w);
    Var n = ops::affine(t, 0.5f / m, 0.5f);
    Tensor q(n.shape());
    for (size_t i = 0; i < q.size(); ++i) q[i] = quantize_k(n.value()[i], bits);
    Var qv = ops::straight_through(n, std::move(q), 0.0f, 1.0f);
    return ops::affine(qv, 2.0f * s, -s);
}

Var fake_quant_act(Var x, int bits, float range) {
    validate_bits(bits, "activation bits");
    if (bits >= kFullPrecisionBits) return x;
    return ops::straight_through(x, quantize_activations(x.value(), bits, range), 0.0f, range);
}

bool on_weight_grid(const Tensor& w_eff, int bits, float scale, float tol) {
    if (bits >= kFullPrecisionBits) return true;
    if (scale == 0.0f) return std::all_of(w_eff.values().begin(), w_eff.values().end(), [](float v) { return v == 0.0f; });
    const double n = levels(bits);
    for (float v : w_eff.values()) {
        const double unit = (static_cast<double>(v) / scale + 1.0) / 2.0;  // back to [0, 1]
        if (bits == 1) {
            if (std::fabs(std::fabs(static_cast<double>(v)) - scale) > tol * std::max(1.0f, scale)) return false;
            continue;
        }
        if (unit < -tol || unit > 1.0 + tol) return false;
        if (std::fabs(unit - std::round(unit * n) / n) > tol) return false;
    }
    return true;
}

}  // namespace ocmp
