#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "okp/error.hpp"

namespace okp {

using Shape = std::vector<std::size_t>;

inline std::string shape_to_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) {
            out += ",";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

inline std::size_t shape_volume(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major n-dimensional array. A default-constructed tensor is empty
/// (rank 0, no storage) and only serves as a placeholder; every constructed
/// tensor has extents >= 1 and exactly volume(shape) elements.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape))
    {
        validate_extents();
        data_.assign(shape_volume(shape_), fill);
    }

    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        validate_extents();
        if (data_.size() != shape_volume(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape "
                             + shape_to_string(shape_));
        }
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] std::span<T> data() noexcept { return data_; }
    [[nodiscard]] std::span<const T> data() const noexcept { return data_; }
    [[nodiscard]] const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t flat) noexcept { return data_[flat]; }
    const T& operator[](std::size_t flat) const noexcept { return data_[flat]; }

    [[nodiscard]] std::size_t flat_index(std::span<const std::size_t> index) const
    {
        if (index.size() != shape_.size()) {
            throw ShapeError("index rank " + std::to_string(index.size()) + " does not match tensor rank "
                             + std::to_string(shape_.size()));
        }
        std::size_t flat = 0;
        for (std::size_t axis = 0; axis < shape_.size(); ++axis) {
            if (index[axis] >= shape_[axis]) {
                throw ShapeError("index " + std::to_string(index[axis]) + " out of range on axis "
                                 + std::to_string(axis));
            }
            flat = flat * shape_[axis] + index[axis];
        }
        return flat;
    }

    T& at(std::initializer_list<std::size_t> index) { return data_[flat_index({index.begin(), index.size()})]; }
    const T& at(std::initializer_list<std::size_t> index) const
    {
        return data_[flat_index({index.begin(), index.size()})];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    /// Same storage, new extents. Volume must match.
    [[nodiscard]] BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

    template <typename U>
    [[nodiscard]] BasicTensor<U> cast() const
    {
        std::vector<U> converted(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(converted));
    }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    void validate_extents() const
    {
        if (shape_.empty()) {
            throw ShapeError("tensor shape must have at least one axis");
        }
        for (std::size_t axis = 0; axis < shape_.size(); ++axis) {
            if (shape_[axis] == 0) {
                throw ShapeError("tensor extent on axis " + std::to_string(axis) + " must be >= 1, shape "
                                 + shape_to_string(shape_));
            }
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// A trainable parameter and its accumulated gradient.
template <typename T>
struct BasicGradPair {
    BasicTensor<T> value;
    BasicTensor<T> gradient;

    BasicGradPair() = default;
    explicit BasicGradPair(BasicTensor<T> v) : value(std::move(v)), gradient(value.shape(), T{0}) {}

    void zero_grad() { gradient.fill(T{0}); }
};

using GradPair = BasicGradPair<float>;

} // namespace okp
