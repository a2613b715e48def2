#pragma once

#include "ocmp/train.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ocmp::harness {

struct SyntheticShapesParams {
    int classes = 4;
    int image_size = 16;
    int samples = 4000;
    float noise = 0.1f;
};

// Procedurally drawn glyphs (one glyph family per class) with additive
// Gaussian noise, split 0.7 / 0.15 / 0.15.
DataSplits generate_synthetic_shapes(const SyntheticShapesParams& params, uint64_t seed);

/// Decoded IDX file: big-endian magic + dims header followed by a u8 payload.
struct IdxArray {
    std::vector<int64_t> dims;
    std::vector<uint8_t> data;
};

IdxArray parse_idx(const std::vector<uint8_t>& bytes);
IdxArray read_idx_file(const std::string& path);

// 3-D image file [N, H, W] + 1-D label file [N], shuffled and split by seed.
DataSplits load_idx_dataset(const std::string& images_path, const std::string& labels_path, uint64_t seed);

// Deterministic 0.7 / 0.15 / 0.15 split after a seeded shuffle.
DataSplits split_dataset(const Dataset& all, uint64_t seed);

}  // namespace ocmp::harness
