#include "ocmp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace ocmp {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

static void check_shape(const Shape& shape) {
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_str(shape));
    }
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
        throw ShapeError("tensor: shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
    }
}

float& Tensor::at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

float Tensor::at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != static_cast<int64_t>(data_.size())) {
        throw ShapeError("reshape: " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool Tensor::identical(const Tensor& other) const {
    if (shape_ != other.shape_ || data_.size() != other.data_.size()) return false;
    return data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

Tensor slice_rows(const Tensor& t, int64_t begin, int64_t end) {
    if (t.rank() == 0 || begin < 0 || end > t.dim(0) || begin >= end) {
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") on " + shape_str(t.shape()));
    }
    const int64_t row = static_cast<int64_t>(t.size()) / t.dim(0);
    Shape shape = t.shape();
    shape[0] = end - begin;
    std::vector<float> out(t.data() + begin * row, t.data() + end * row);
    return Tensor(std::move(shape), std::move(out));
}

Tensor gather_rows(const Tensor& t, std::span<const int64_t> rows) {
    if (t.rank() == 0 || rows.empty()) throw ShapeError("gather_rows: empty selection on " + shape_str(t.shape()));
    const int64_t row = static_cast<int64_t>(t.size()) / t.dim(0);
    Shape shape = t.shape();
    shape[0] = static_cast<int64_t>(rows.size());
    std::vector<float> out(static_cast<size_t>(shape_numel(shape)));
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= t.dim(0)) throw ShapeError("gather_rows: row index out of range");
        std::copy_n(t.data() + rows[i] * row, row, out.data() + static_cast<int64_t>(i) * row);
    }
    return Tensor(std::move(shape), std::move(out));
}

}  // namespace ocmp
