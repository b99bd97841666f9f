#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ctk/error.hpp"

namespace ctk::nn {

using Shape = std::vector<int>;

inline std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

inline std::string to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
}

/// Dense row-major array. Image activations are NHWC.
template <typename T>
struct BasicTensor {
    Shape shape;
    std::vector<T> data;

    BasicTensor() = default;
    explicit BasicTensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(element_count(shape), fill) {
        for (int d : shape)
            if (d < 0) throw ShapeError("negative tensor dimension in " + to_string(shape));
    }
    BasicTensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != element_count(shape))
            throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                             to_string(shape));
    }

    std::size_t size() const noexcept { return data.size(); }
    int rank() const noexcept { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    T* ptr() noexcept { return data.data(); }
    const T* ptr() const noexcept { return data.data(); }
    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }
    std::span<T> span() noexcept { return data; }
    std::span<const T> span() const noexcept { return data; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    /// Same data, new shape with equal element count.
    BasicTensor reshaped(Shape s) const {
        if (element_count(s) != data.size())
            throw ShapeError("cannot reshape " + to_string(shape) + " to " + to_string(s));
        return BasicTensor(std::move(s), data);
    }

    template <typename U>
    BasicTensor<U> cast() const {
        BasicTensor<U> out(shape);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

}  // namespace ctk::nn
