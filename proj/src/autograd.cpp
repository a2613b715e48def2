#include "ocmp/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace ocmp {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

MatMap as_mat(Tensor& t, int64_t rows, int64_t cols) { return MatMap(t.data(), rows, cols); }
ConstMatMap as_mat(const Tensor& t, int64_t rows, int64_t cols) { return ConstMatMap(t.data(), rows, cols); }

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

int64_t conv_out(int64_t in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// Columns laid out as [C*k*k, N*Ho*Wo].
void im2col(const Tensor& x, int k, int stride, int pad, int64_t ho, int64_t wo, Tensor& cols) {
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t spatial = ho * wo;
    const int64_t width = n * spatial;
    float* out = cols.data();
    for (int64_t ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                float* row = out + ((ci * k + ky) * k + kx) * width;
                for (int64_t ni = 0; ni < n; ++ni) {
                    const float* plane = x.data() + (ni * c + ci) * h * w;
                    float* dst = row + ni * spatial;
                    for (int64_t oy = 0; oy < ho; ++oy) {
                        const int64_t iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) {
                            std::fill_n(dst + oy * wo, wo, 0.0f);
                            continue;
                        }
                        for (int64_t ox = 0; ox < wo; ++ox) {
                            const int64_t ix = ox * stride - pad + kx;
                            dst[oy * wo + ox] = (ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0f;
                        }
                    }
                }
            }
        }
    }
}

void col2im(const Tensor& cols, int k, int stride, int pad, int64_t ho, int64_t wo, Tensor& dx) {
    const int64_t n = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
    const int64_t spatial = ho * wo;
    const int64_t width = n * spatial;
    for (int64_t ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* row = cols.data() + ((ci * k + ky) * k + kx) * width;
                for (int64_t ni = 0; ni < n; ++ni) {
                    float* plane = dx.data() + (ni * c + ci) * h * w;
                    const float* src = row + ni * spatial;
                    for (int64_t oy = 0; oy < ho; ++oy) {
                        const int64_t iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int64_t ox = 0; ox < wo; ++ox) {
                            const int64_t ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < w) plane[iy * w + ix] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

Tensor log_softmax_rows(const Tensor& logits, float temperature) {
    const int64_t n = logits.dim(0), k = logits.dim(1);
    Tensor out(logits.shape());
    for (int64_t i = 0; i < n; ++i) {
        const float* z = logits.data() + i * k;
        float* o = out.data() + i * k;
        float m = -std::numeric_limits<float>::infinity();
        for (int64_t j = 0; j < k; ++j) m = std::max(m, z[j] / temperature);
        double s = 0.0;
        for (int64_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(z[j] / temperature - m));
        const float lse = m + static_cast<float>(std::log(s));
        for (int64_t j = 0; j < k; ++j) o[j] = z[j] / temperature - lse;
    }
    return out;
}

void require_rank2(const char* op, const Tensor& t) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 logits, got " + shape_str(t.shape()));
}

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor(), nullptr, requires_grad});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
    if (!value.all_finite()) throw Error("non-finite value produced on tape at node " + std::to_string(nodes_.size()));
    bool needs = false;
    for (const Var& v : inputs) needs = needs || nodes_.at(v.id).requires_grad;
    nodes_.push_back(Node{std::move(value), Tensor(), needs ? std::move(backward) : nullptr, needs});
    return Var{this, nodes_.size() - 1};
}

Tensor* Tape::grad_buffer(Var v) {
    Node& node = nodes_.at(v.id);
    if (!node.requires_grad) return nullptr;
    if (node.grad.empty()) node.grad = Tensor(node.value.shape());
    return &node.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
    Tensor* dst = grad_buffer(v);
    if (dst == nullptr) return;
    if (dst->size() != g.size()) mismatch("accumulate", dst->shape(), g.shape());
    float* d = dst->data();
    const float* s = g.data();
    for (size_t i = 0; i < g.size(); ++i) d[i] += s[i];
}

void backward(Tape& tape, Var loss) {
    if (loss.tape != &tape) throw ValidationError("backward: loss belongs to a different tape");
    if (tape.value(loss).size() != 1) {
        throw ValidationError("backward: loss must be scalar, got " + shape_str(tape.value(loss).shape()));
    }
    for (auto& node : tape.nodes_) node.grad = Tensor();
    tape.visits_ = 0;
    if (!tape.requires_grad(loss)) return;
    tape.nodes_[loss.id].grad = Tensor(tape.value(loss).shape(), 1.0f);
    for (size_t i = loss.id + 1; i-- > 0;) {
        auto& node = tape.nodes_[i];
        if (!node.backward || node.grad.empty()) continue;
        ++tape.visits_;
        // Closures only write to their inputs' slots, never to their own.
        Tensor g = std::move(node.grad);
        node.backward(tape, g);
        tape.nodes_[i].grad = std::move(g);
    }
}

std::vector<Tensor> gradients(const Tape& tape, std::span<const Var> params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Var& p : params) {
        const Tensor& g = tape.grad(p);
        out.push_back(g.empty() ? Tensor(tape.value(p).shape()) : g);
    }
    return out;
}

namespace ops {

Var dense(Var x, Var w, Var b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (xv.rank() < 2 || wv.rank() != 2) mismatch("dense", xv.shape(), wv.shape());
    const int64_t n = xv.dim(0);
    const int64_t in = static_cast<int64_t>(xv.size()) / n;
    const int64_t out = wv.dim(0);
    if (wv.dim(1) != in) mismatch("dense", xv.shape(), wv.shape());
    if (bv.size() != static_cast<size_t>(out)) mismatch("dense bias", wv.shape(), bv.shape());

    Tensor y({n, out});
    auto ym = as_mat(y, n, out);
    ym.noalias() = as_mat(xv, n, in) * as_mat(wv, out, in).transpose();
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bv.data(), out);

    const Var inputs[] = {x, w, b};
    return x.tape->record(std::move(y), inputs, [x, w, b, n, in, out](Tape& tape, const Tensor& g) {
        auto gm = as_mat(g, n, out);
        if (Tensor* dx = tape.grad_buffer(x)) as_mat(*dx, n, in).noalias() += gm * as_mat(w.value(), out, in);
        if (Tensor* dw = tape.grad_buffer(w))
            as_mat(*dw, out, in).noalias() += gm.transpose() * as_mat(x.value(), n, in);
        if (Tensor* db = tape.grad_buffer(b))
            Eigen::Map<Eigen::RowVectorXf>(db->data(), out) += gm.colwise().sum();
    });
}

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) mismatch("matmul", av.shape(), bv.shape());
    const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor y({m, n});
    as_mat(y, m, n).noalias() = as_mat(av, m, k) * as_mat(bv, k, n);
    const Var inputs[] = {a, b};
    return a.tape->record(std::move(y), inputs, [a, b, m, k, n](Tape& tape, const Tensor& g) {
        auto gm = as_mat(g, m, n);
        if (Tensor* da = tape.grad_buffer(a)) as_mat(*da, m, k).noalias() += gm * as_mat(b.value(), k, n).transpose();
        if (Tensor* db = tape.grad_buffer(b)) as_mat(*db, k, n).noalias() += as_mat(a.value(), m, k).transpose() * gm;
    });
}

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (xv.rank() != 4 || wv.rank() != 4 || wv.dim(1) != xv.dim(1) || wv.dim(2) != wv.dim(3)) {
        mismatch("conv2d", xv.shape(), wv.shape());
    }
    if (b.value().size() != static_cast<size_t>(wv.dim(0))) mismatch("conv2d bias", wv.shape(), b.value().shape());
    if (stride < 1 || pad < 0) throw ShapeError("conv2d: invalid stride/pad");
    const int k = static_cast<int>(wv.dim(2));
    const int64_t n = xv.dim(0), c = xv.dim(1);
    const int64_t ho = conv_out(xv.dim(2), k, stride, pad);
    const int64_t wo = conv_out(xv.dim(3), k, stride, pad);
    if (ho <= 0 || wo <= 0) mismatch("conv2d", xv.shape(), wv.shape());
    const int64_t o = wv.dim(0);
    const int64_t ckk = c * k * k;
    const int64_t spatial = ho * wo;
    const int64_t width = n * spatial;

    auto cols = std::make_shared<Tensor>(Shape{ckk, width});
    im2col(xv, k, stride, pad, ho, wo, *cols);
    RowMat prod(o, width);
    prod.noalias() = as_mat(wv, o, ckk) * as_mat(*cols, ckk, width);

    Tensor y({n, o, ho, wo});
    const float* bias = b.value().data();
    for (int64_t ni = 0; ni < n; ++ni) {
        for (int64_t oi = 0; oi < o; ++oi) {
            const float* src = prod.data() + oi * width + ni * spatial;
            float* dst = y.data() + (ni * o + oi) * spatial;
            for (int64_t s = 0; s < spatial; ++s) dst[s] = src[s] + bias[oi];
        }
    }

    const Var inputs[] = {x, w, b};
    const bool keep = x.tape->requires_grad(x) || x.tape->requires_grad(w) || x.tape->requires_grad(b);
    if (!keep) cols.reset();
    return x.tape->record(std::move(y), inputs,
                          [x, w, b, cols, n, c, o, k, stride, pad, ho, wo, ckk, spatial, width](Tape& tape,
                                                                                                  const Tensor& g) {
                              RowMat gm(o, width);
                              for (int64_t ni = 0; ni < n; ++ni) {
                                  for (int64_t oi = 0; oi < o; ++oi) {
                                      std::copy_n(g.data() + (ni * o + oi) * spatial, spatial,
                                                  gm.data() + oi * width + ni * spatial);
                                  }
                              }
                              if (Tensor* db = tape.grad_buffer(b))
                                  Eigen::Map<Eigen::VectorXf>(db->data(), o) += gm.rowwise().sum();
                              if (Tensor* dw = tape.grad_buffer(w))
                                  as_mat(*dw, o, ckk).noalias() += gm * as_mat(*cols, ckk, width).transpose();
                              if (Tensor* dx = tape.grad_buffer(x)) {
                                  Tensor dcols({ckk, width});
                                  as_mat(dcols, ckk, width).noalias() = as_mat(w.value(), o, ckk).transpose() * gm;
                                  col2im(dcols, k, stride, pad, ho, wo, *dx);
                              }
                              (void)c;
                          });
}

namespace {

template <typename Fwd, typename Deriv>
Var elementwise(Var x, Fwd fwd, Deriv deriv) {
    const Tensor& xv = x.value();
    Tensor y(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i) y[i] = fwd(xv[i]);
    const Var inputs[] = {x};
    return x.tape->record(std::move(y), inputs, [x, deriv](Tape& tape, const Tensor& g) {
        Tensor* dx = tape.grad_buffer(x);
        const Tensor& xv = x.value();
        for (size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * deriv(xv[i]);
    });
}

}  // namespace

Var relu(Var x) {
    return elementwise(x, [](float v) { return v > 0.0f ? v : 0.0f; }, [](float v) { return v > 0.0f ? 1.0f : 0.0f; });
}

Var tanh(Var x) {
    return elementwise(
        x, [](float v) { return std::tanh(v); },
        [](float v) {
            const float t = std::tanh(v);
            return 1.0f - t * t;
        });
}

Var clip(Var x, float lo, float hi) {
    if (!(lo <= hi)) throw ValidationError("clip: lo > hi");
    return elementwise(
        x, [lo, hi](float v) { return std::clamp(v, lo, hi); },
        [lo, hi](float v) { return (v >= lo && v <= hi) ? 1.0f : 0.0f; });
}

Var affine(Var x, float scale, float shift) {
    return elementwise(x, [scale, shift](float v) { return scale * v + shift; }, [scale](float) { return scale; });
}

Var add(Var a, Var b) {
    if (a.shape() != b.shape()) mismatch("add", a.shape(), b.shape());
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor y(av.shape());
    for (size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
    const Var inputs[] = {a, b};
    return a.tape->record(std::move(y), inputs, [a, b](Tape& tape, const Tensor& g) {
        tape.accumulate(a, g);
        tape.accumulate(b, g);
    });
}

Var global_avgpool(Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() == 2) return x;
    if (xv.rank() != 4) throw ShapeError("global_avgpool: expected rank 2 or 4, got " + shape_str(xv.shape()));
    const int64_t n = xv.dim(0), c = xv.dim(1), s = xv.dim(2) * xv.dim(3);
    Tensor y({n, c});
    for (int64_t i = 0; i < n * c; ++i) {
        float acc = 0.0f;
        for (int64_t j = 0; j < s; ++j) acc += xv[static_cast<size_t>(i * s + j)];
        y[static_cast<size_t>(i)] = acc / static_cast<float>(s);
    }
    const Var inputs[] = {x};
    return x.tape->record(std::move(y), inputs, [x, n, c, s](Tape& tape, const Tensor& g) {
        Tensor* dx = tape.grad_buffer(x);
        const float inv = 1.0f / static_cast<float>(s);
        for (int64_t i = 0; i < n * c; ++i) {
            const float gi = g[static_cast<size_t>(i)] * inv;
            for (int64_t j = 0; j < s; ++j) (*dx)[static_cast<size_t>(i * s + j)] += gi;
        }
    });
}

Var avgpool(Var x, int k) {
    const Tensor& xv = x.value();
    if (xv.rank() != 4 || k < 1 || xv.dim(2) < k || xv.dim(3) < k) {
        throw ShapeError("avgpool: window " + std::to_string(k) + " on " + shape_str(xv.shape()));
    }
    const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int64_t ho = h / k, wo = w / k;
    Tensor y({n, c, ho, wo});
    const float inv = 1.0f / static_cast<float>(k * k);
    for (int64_t p = 0; p < n * c; ++p)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox) {
                float acc = 0.0f;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx) acc += xv[static_cast<size_t>((p * h + oy * k + dy) * w + ox * k + dx)];
                y[static_cast<size_t>((p * ho + oy) * wo + ox)] = acc * inv;
            }
    const Var inputs[] = {x};
    return x.tape->record(std::move(y), inputs, [x, n, c, h, w, ho, wo, k, inv](Tape& tape, const Tensor& g) {
        Tensor* dx = tape.grad_buffer(x);
        for (int64_t p = 0; p < n * c; ++p)
            for (int64_t oy = 0; oy < ho; ++oy)
                for (int64_t ox = 0; ox < wo; ++ox) {
                    const float gi = g[static_cast<size_t>((p * ho + oy) * wo + ox)] * inv;
                    for (int dy = 0; dy < k; ++dy)
                        for (int ddx = 0; ddx < k; ++ddx)
                            (*dx)[static_cast<size_t>((p * h + oy * k + dy) * w + ox * k + ddx)] += gi;
                }
    });
}

Var maxpool(Var x, int k) {
    const Tensor& xv = x.value();
    if (xv.rank() != 4 || k < 1 || xv.dim(2) < k || xv.dim(3) < k) {
        throw ShapeError("maxpool: window " + std::to_string(k) + " on " + shape_str(xv.shape()));
    }
    const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int64_t ho = h / k, wo = w / k;
    Tensor y({n, c, ho, wo});
    auto argmax = std::make_shared<std::vector<int64_t>>(y.size());
    for (int64_t p = 0; p < n * c; ++p)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox) {
                int64_t best = (p * h + oy * k) * w + ox * k;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx) {
                        const int64_t idx = (p * h + oy * k + dy) * w + ox * k + dx;
                        if (xv[static_cast<size_t>(idx)] > xv[static_cast<size_t>(best)]) best = idx;
                    }
                const size_t o = static_cast<size_t>((p * ho + oy) * wo + ox);
                y[o] = xv[static_cast<size_t>(best)];
                (*argmax)[o] = best;
            }
    const Var inputs[] = {x};
    return x.tape->record(std::move(y), inputs, [x, argmax](Tape& tape, const Tensor& g) {
        Tensor* dx = tape.grad_buffer(x);
        for (size_t o = 0; o < g.size(); ++o) (*dx)[static_cast<size_t>((*argmax)[o])] += g[o];
    });
}

Var flatten(Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() == 2) return x;
    const int64_t n = xv.dim(0);
    const Var inputs[] = {x};
    return x.tape->record(xv.reshaped({n, static_cast<int64_t>(xv.size()) / n}), inputs,
                          [x](Tape& tape, const Tensor& g) { tape.accumulate(x, g); });
}

Var softmax(Var logits) {
    require_rank2("softmax", logits.value());
    Tensor y = softmax_rows(logits.value());
    const int64_t n = y.dim(0), k = y.dim(1);
    const Var inputs[] = {logits};
    auto saved = std::make_shared<Tensor>(y);
    return logits.tape->record(std::move(y), inputs, [logits, saved, n, k](Tape& tape, const Tensor& g) {
        Tensor* dz = tape.grad_buffer(logits);
        for (int64_t i = 0; i < n; ++i) {
            const float* s = saved->data() + i * k;
            const float* gi = g.data() + i * k;
            float dot = 0.0f;
            for (int64_t j = 0; j < k; ++j) dot += gi[j] * s[j];
            for (int64_t j = 0; j < k; ++j) (*dz)[static_cast<size_t>(i * k + j)] += s[j] * (gi[j] - dot);
        }
    });
}

Var log_softmax(Var logits) {
    require_rank2("log_softmax", logits.value());
    Tensor y = log_softmax_rows(logits.value(), 1.0f);
    const int64_t n = y.dim(0), k = y.dim(1);
    const Var inputs[] = {logits};
    auto saved = std::make_shared<Tensor>(y);
    return logits.tape->record(std::move(y), inputs, [logits, saved, n, k](Tape& tape, const Tensor& g) {
        Tensor* dz = tape.grad_buffer(logits);
        for (int64_t i = 0; i < n; ++i) {
            const float* ls = saved->data() + i * k;
            const float* gi = g.data() + i * k;
            float total = 0.0f;
            for (int64_t j = 0; j < k; ++j) total += gi[j];
            for (int64_t j = 0; j < k; ++j) (*dz)[static_cast<size_t>(i * k + j)] += gi[j] - std::exp(ls[j]) * total;
        }
    });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
    const Tensor& z = logits.value();
    require_rank2("cross_entropy", z);
    const int64_t n = z.dim(0), k = z.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) {
        mismatch("cross_entropy", z.shape(), Shape{static_cast<int64_t>(labels.size())});
    }
    auto ls = std::make_shared<Tensor>(log_softmax_rows(z, 1.0f));
    auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const int y = (*lab)[static_cast<size_t>(i)];
        if (y < 0 || y >= k) throw ValidationError("cross_entropy: label " + std::to_string(y) + " out of range");
        loss -= (*ls)[static_cast<size_t>(i * k + y)];
    }
    const Var inputs[] = {logits};
    return logits.tape->record(Tensor({1}, static_cast<float>(loss / static_cast<double>(n))), inputs,
                               [logits, ls, lab, n, k](Tape& tape, const Tensor& g) {
                                   Tensor* dz = tape.grad_buffer(logits);
                                   const float scale = g[0] / static_cast<float>(n);
                                   for (int64_t i = 0; i < n; ++i) {
                                       for (int64_t j = 0; j < k; ++j) {
                                           const size_t idx = static_cast<size_t>(i * k + j);
                                           float p = std::exp((*ls)[idx]);
                                           if (j == (*lab)[static_cast<size_t>(i)]) p -= 1.0f;
                                           (*dz)[idx] += scale * p;
                                       }
                                   }
                               });
}

Var kl_divergence(Var logits, const Tensor& target_probs, float temperature) {
    const Tensor& z = logits.value();
    require_rank2("kl_divergence", z);
    if (target_probs.shape() != z.shape()) mismatch("kl_divergence", z.shape(), target_probs.shape());
    if (!(temperature > 0.0f)) throw ValidationError("kl_divergence: temperature must be positive");
    const int64_t n = z.dim(0);
    auto ls = std::make_shared<Tensor>(log_softmax_rows(z, temperature));
    auto target = std::make_shared<Tensor>(target_probs);
    double loss = 0.0;
    for (size_t i = 0; i < target->size(); ++i) {
        const double t = (*target)[i];
        if (t > 0.0) loss += t * (std::log(t) - static_cast<double>((*ls)[i]));
    }
    const Var inputs[] = {logits};
    return logits.tape->record(Tensor({1}, static_cast<float>(loss / static_cast<double>(n))), inputs,
                               [logits, ls, target, n, temperature](Tape& tape, const Tensor& g) {
                                   Tensor* dz = tape.grad_buffer(logits);
                                   const float scale = g[0] / (static_cast<float>(n) * temperature);
                                   for (size_t i = 0; i < ls->size(); ++i)
                                       (*dz)[i] += scale * (std::exp((*ls)[i]) - (*target)[i]);
                               });
}

Var straight_through(Var x, Tensor quantized, float lo, float hi) {
    if (quantized.shape() != x.shape()) mismatch("straight_through", x.shape(), quantized.shape());
    const Var inputs[] = {x};
    return x.tape->record(std::move(quantized), inputs, [x, lo, hi](Tape& tape, const Tensor& g) {
        Tensor* dx = tape.grad_buffer(x);
        const Tensor& xv = x.value();
        for (size_t i = 0; i < g.size(); ++i) {
            if (xv[i] >= lo && xv[i] <= hi) (*dx)[i] += g[i];
        }
    });
}

Var weighted_sum(std::span<const Var> terms, std::span<const float> weights) {
    if (terms.empty() || terms.size() != weights.size()) throw ValidationError("weighted_sum: term/weight count");
    float total = 0.0f;
    for (size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].value().size() != 1) throw ShapeError("weighted_sum: non-scalar term " + shape_str(terms[i].shape()));
        total += weights[i] * terms[i].value()[0];
    }
    std::vector<Var> ts(terms.begin(), terms.end());
    std::vector<float> ws(weights.begin(), weights.end());
    return terms[0].tape->record(Tensor({1}, total), terms, [ts, ws](Tape& tape, const Tensor& g) {
        for (size_t i = 0; i < ts.size(); ++i) tape.accumulate(ts[i], Tensor({1}, g[0] * ws[i]));
    });
}

}  // namespace ops

Tensor softmax_rows(const Tensor& logits, float temperature) {
    require_rank2("softmax", logits);
    Tensor out = log_softmax_rows(logits, temperature);
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    require_rank2("argmax", logits);
    const int64_t n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const float* row = logits.data() + i * k;
        out[static_cast<size_t>(i)] = static_cast<int>(std::max_element(row, row + k) - row);
    }
    return out;
}

void SgdConfig::validate() const {
    if (!(learning_rate > 0.0f)) throw ValidationError("sgd: learning_rate must be > 0");
    if (!(momentum >= 0.0f && momentum < 1.0f)) throw ValidationError("sgd: momentum must lie in [0, 1)");
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, const SgdConfig& cfg,
              std::vector<Tensor>& velocity) {
    if (params.size() != grads.size()) throw ValidationError("sgd_step: parameter/gradient count mismatch");
    if (velocity.empty()) {
        velocity.reserve(params.size());
        for (Tensor* p : params) velocity.emplace_back(p->shape());
    }
    if (velocity.size() != params.size()) throw ValidationError("sgd_step: velocity count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        Tensor& v = velocity[i];
        if (p.shape() != g.shape() || v.shape() != p.shape()) mismatch("sgd_step", p.shape(), g.shape());
        for (size_t j = 0; j < p.size(); ++j) {
            v[j] = cfg.momentum * v[j] - cfg.learning_rate * g[j];
            p[j] += v[j];
        }
    }
}

}  // namespace ocmp
