#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "tadiff/rng.hpp"

namespace tadiff {

// Dense row-major array with a small dynamic shape. Images are rank-3
// (channels, height, width); masks rank-2 or rank-3.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (int d : shape_) {
            if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
            n *= static_cast<std::size_t>(d);
        }
        data_.assign(n, T(0));
    }

    TensorT(std::initializer_list<int> shape) : TensorT(std::vector<int>(shape)) {}

    static TensorT full(std::vector<int> shape, T value) {
        TensorT t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // Rank-3 accessor (c, y, x).
    T& at(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    const T& at(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

private:
    std::vector<int> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": tensor shape mismatch");
}

// i.i.d. standard normal draws; reproducible for a given generator state.
template <typename T = float>
TensorT<T> normal_tensor(std::vector<int> shape, Rng& rng) {
    TensorT<T> t(std::move(shape));
    rng.fill_normal(t.data(), t.numel());
    return t;
}

template <typename T>
inline T logistic(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

}  // namespace tadiff
