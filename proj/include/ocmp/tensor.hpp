#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocmp {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& shape);
int64_t shape_numel(const Shape& shape);

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not conform for a primitive.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid argument, configuration or precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Dense row-major float32 array.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    const Shape& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](size_t i) { return data_[i]; }
    float operator[](size_t i) const { return data_[i]; }

    // 4-D accessor (N, C, H, W).
    float& at(int64_t n, int64_t c, int64_t h, int64_t w);
    float at(int64_t n, int64_t c, int64_t h, int64_t w) const;

    Tensor reshaped(Shape shape) const;
    void fill(float v);
    bool all_finite() const;

    // Bitwise equality of shape and payload.
    bool identical(const Tensor& other) const;

private:
    Shape shape_;
    std::vector<float> data_;
};

// Copies rows [begin, end) along the leading dimension.
Tensor slice_rows(const Tensor& t, int64_t begin, int64_t end);
// Gathers rows by index along the leading dimension.
Tensor gather_rows(const Tensor& t, std::span<const int64_t> rows);

}  // namespace ocmp
