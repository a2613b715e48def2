#include "ocmp/harness/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

namespace ocmp::harness {

namespace {

// One glyph family per class; (dx, dy) relative to the glyph centre, r its half-size.
bool glyph_pixel(int cls, float dx, float dy, float r) {
    const float ax = std::fabs(dx), ay = std::fabs(dy);
    const float d = std::sqrt(dx * dx + dy * dy);
    const bool in_box = ax <= r && ay <= r;
    switch (cls) {
        case 0: return in_box;                                                        // filled square
        case 1: return d <= r;                                                        // disk
        case 2: return (ax <= r / 3 && ay <= r) || (ay <= r / 3 && ax <= r);          // plus
        case 3: return in_box && static_cast<int>(std::floor((dy + r) / 2.0f)) % 2 == 0;  // horizontal stripes
        case 4: return in_box && static_cast<int>(std::floor((dx + r) / 2.0f)) % 2 == 0;  // vertical stripes
        case 5: return d <= r && d >= r * 0.55f;                                      // ring
        case 6: return in_box && std::fabs(ax - ay) <= 0.9f;                          // diagonal cross
        case 7: return dy >= -r && dy <= r && ax <= (dy + r) * 0.5f;                  // triangle
        case 8: return in_box && (static_cast<int>(std::floor((dx + r) / 2.0f)) +
                                  static_cast<int>(std::floor((dy + r) / 2.0f))) % 2 == 0;  // checker
        case 9: return in_box && (ax >= r - 1.2f || ay >= r - 1.2f);                 // hollow square
        default: return false;
    }
}

uint32_t read_be32(const std::vector<uint8_t>& b, size_t at) {
    return (uint32_t{b[at]} << 24) | (uint32_t{b[at + 1]} << 16) | (uint32_t{b[at + 2]} << 8) | uint32_t{b[at + 3]};
}

Dataset take(const Dataset& all, std::span<const int64_t> rows) {
    Dataset out;
    out.num_classes = all.num_classes;
    out.images = gather_rows(all.images, rows);
    out.labels = batch_labels(all, rows);
    return out;
}

}  // namespace

DataSplits split_dataset(const Dataset& all, uint64_t seed) {
    const int64_t n = all.size();
    if (n < 3) throw ValidationError("dataset needs at least 3 samples to split");
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    std::shuffle(order.begin(), order.end(), rng);
    const int64_t n_train = std::max<int64_t>(1, static_cast<int64_t>(std::floor(0.7 * static_cast<double>(n))));
    const int64_t n_val = std::max<int64_t>(1, static_cast<int64_t>(std::floor(0.15 * static_cast<double>(n))));
    const std::span<const int64_t> all_rows(order);
    DataSplits s;
    s.train = take(all, all_rows.subspan(0, static_cast<size_t>(n_train)));
    s.val = take(all, all_rows.subspan(static_cast<size_t>(n_train), static_cast<size_t>(n_val)));
    s.test = take(all, all_rows.subspan(static_cast<size_t>(n_train + n_val)));
    return s;
}

DataSplits generate_synthetic_shapes(const SyntheticShapesParams& p, uint64_t seed) {
    if (p.classes < 2 || p.classes > 10) throw ValidationError("synthetic_shapes: classes must lie in [2, 10]");
    if (p.image_size < 8 || p.image_size > 32) throw ValidationError("synthetic_shapes: image_size must lie in [8, 32]");
    if (p.samples < p.classes * 3) throw ValidationError("synthetic_shapes: too few samples");
    if (!(p.noise >= 0.0f)) throw ValidationError("synthetic_shapes: noise must be non-negative");

    const int s = p.image_size;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    Dataset all;
    all.num_classes = p.classes;
    all.images = Tensor({p.samples, 1, s, s});
    all.labels.resize(static_cast<size_t>(p.samples));
    const float half = static_cast<float>(s) / 2.0f;
    for (int i = 0; i < p.samples; ++i) {
        const int cls = i % p.classes;
        all.labels[static_cast<size_t>(i)] = cls;
        const float cx = half - 0.5f + (unit(rng) - 0.5f) * static_cast<float>(s) / 4.0f;
        const float cy = half - 0.5f + (unit(rng) - 0.5f) * static_cast<float>(s) / 4.0f;
        const float r = static_cast<float>(s) * (0.2f + 0.12f * unit(rng));
        const float intensity = 0.7f + 0.3f * unit(rng);
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                float v = glyph_pixel(cls, static_cast<float>(x) - cx, static_cast<float>(y) - cy, r) ? intensity : 0.0f;
                if (p.noise > 0.0f) v += p.noise * gauss(rng);
                all.images.at(i, 0, y, x) = v;
            }
        }
    }
    return split_dataset(all, seed);
}

IdxArray parse_idx(const std::vector<uint8_t>& b) {
    if (b.size() < 4) throw ValidationError("idx: header truncated at byte " + std::to_string(b.size()) + " (need 4)");
    if (b[0] != 0 || b[1] != 0) throw ValidationError("idx: bad magic at byte 0 (expected two zero bytes)");
    if (b[2] != 0x08) throw ValidationError("idx: unsupported element type at byte 2 (only u8 = 0x08)");
    const int ndims = b[3];
    if (ndims < 1) throw ValidationError("idx: zero dimensions at byte 3");
    IdxArray out;
    size_t at = 4;
    int64_t total = 1;
    for (int d = 0; d < ndims; ++d) {
        if (at + 4 > b.size()) throw ValidationError("idx: dimension " + std::to_string(d) + " truncated at byte " + std::to_string(at));
        const int64_t dim = read_be32(b, at);
        if (dim <= 0) throw ValidationError("idx: zero-sized dimension at byte " + std::to_string(at));
        out.dims.push_back(dim);
        total *= dim;
        at += 4;
    }
    if (b.size() - at < static_cast<size_t>(total)) {
        throw ValidationError("idx: payload truncated at byte " + std::to_string(b.size()) + " (expected " +
                              std::to_string(at + static_cast<size_t>(total)) + ")");
    }
    out.data.assign(b.begin() + static_cast<std::ptrdiff_t>(at), b.begin() + static_cast<std::ptrdiff_t>(at) + total);
    return out;
}

IdxArray read_idx_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("idx: cannot open '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_idx(bytes);
}

DataSplits load_idx_dataset(const std::string& images_path, const std::string& labels_path, uint64_t seed) {
    const IdxArray images = read_idx_file(images_path);
    const IdxArray labels = read_idx_file(labels_path);
    if (images.dims.size() != 3) throw ValidationError("idx: image file must be 3-D [N, H, W]");
    if (labels.dims.size() != 1 || labels.dims[0] != images.dims[0]) {
        throw ValidationError("idx: label file must be 1-D with one label per image");
    }
    Dataset all;
    const int64_t n = images.dims[0], h = images.dims[1], w = images.dims[2];
    all.images = Tensor({n, 1, h, w});
    for (size_t i = 0; i < images.data.size(); ++i) all.images[i] = static_cast<float>(images.data[i]) / 255.0f;
    int max_label = 0;
    for (uint8_t l : labels.data) {
        all.labels.push_back(l);
        max_label = std::max<int>(max_label, l);
    }
    all.num_classes = std::max(2, max_label + 1);
    return split_dataset(all, seed);
}

}  // namespace ocmp::harness
