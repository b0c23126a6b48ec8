#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "srdet/core/errors.hpp"

namespace srdet {

/// Channels-first (C,H,W) extent. Every tensor crossing a module boundary
/// carries one of these; scalars are (1,1,1).
struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
    bool valid() const { return c >= 1 && h >= 1 && w >= 1; }
    bool operator==(const Shape& o) const { return c == o.c && h == o.h && w == o.w; }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        return "(" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

/// Dense C×H×W array of real values. Images hold pixels in a nominal [0,1]
/// range, activations are unbounded. T is float for training, double for
/// the finite-difference oracles.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape s, T fill = T(0)) : shape_(s), data_(check_size(s), fill) {}

    Tensor(int c, int h, int w, T fill = T(0)) : Tensor(Shape{c, h, w}, fill) {}

    Tensor(Shape s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
        if (data_.size() != check_size(s))
            throw ShapeError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + s.str());
    }

    const Shape& shape() const { return shape_; }
    int channels() const { return shape_.c; }
    int height() const { return shape_.h; }
    int width() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    const T& at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    /// Start of row y in channel c.
    T* row(int c, int y) { return data_.data() + index(c, y, 0); }
    const T* row(int c, int y) const { return data_.data() + index(c, y, 0); }

    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void require_finite(const std::string& what) const {
        if (!all_finite()) throw NumericError("non-finite values in " + what);
    }

    /// Elementwise copy into a different scalar type.
    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

private:
    static std::size_t check_size(const Shape& s) {
        if (!s.valid()) throw ShapeError("shape components must be >= 1, got " + s.str());
        return s.size();
    }

    Shape shape_{};
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Images and intermediate activations share one layout; the aliases mark
/// intent at module boundaries.
template <typename T>
using ImageTensor = Tensor<T>;
template <typename T>
using FeatureMap = Tensor<T>;

} // namespace srdet
