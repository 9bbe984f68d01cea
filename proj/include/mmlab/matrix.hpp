#pragma once
// Dense row-major f32 matrix, the sole numeric carrier of the NN engine.

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace mmlab {

class Matrix {
  public:
    Matrix() = default;
    Matrix(std::int64_t rows, std::int64_t cols)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), 0.0f) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative shape");
    }
    Matrix(std::int64_t rows, std::int64_t cols, std::vector<float> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != static_cast<std::size_t>(rows * cols))
            throw std::invalid_argument("Matrix: data size does not match shape");
    }

    std::int64_t rows() const { return rows_; }
    std::int64_t cols() const { return cols_; }
    std::int64_t size() const { return rows_ * cols_; }

    float& operator()(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
    float operator()(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float* row(std::int64_t r) { return data_.data() + r * cols_; }
    const float* row(std::int64_t r) const { return data_.data() + r * cols_; }
    std::span<const float> row_span(std::int64_t r) const { return {row(r), static_cast<std::size_t>(cols_)}; }

    std::vector<float>& storage() { return data_; }
    const std::vector<float>& storage() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(float v) { data_.assign(data_.size(), v); }

  private:
    std::int64_t rows_ = 0;
    std::int64_t cols_ = 0;
    std::vector<float> data_;
};

}  // namespace mmlab
