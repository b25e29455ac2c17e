#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace ganlens {

// Dense float tensor, row-major, up to rank 4. Images use NCHW.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float v);

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t numel() const { return data_.size(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // NCHW accessor
    float& at(int n, int c, int h, int w) {
        return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    float at(int n, int c, int h, int w) const {
        return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    // (rows, cols) accessor for rank-2 tensors
    float& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    float at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

    Tensor reshaped(std::vector<int> shape) const;

    void fill(float v);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    float min() const;
    float max() const;

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

// throws ShapeError unless shapes match
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace ganlens
