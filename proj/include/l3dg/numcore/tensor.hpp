#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace l3dg::nc {

    using Shape = std::vector<std::int64_t>;

    enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

    template <typename T>
    constexpr DType dtype_of() {
        static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                      "tensors hold float or double");
        return std::is_same_v<T, float> ? DType::f32 : DType::f64;
    }

    std::int64_t shape_numel(const Shape& shape);
    std::string shape_str(const Shape& shape);

    class ShapeError : public std::invalid_argument {
    public:
        using std::invalid_argument::invalid_argument;
    };

    /// Dense row-major array. Plain value type; copies are deep.
    template <typename T>
    class Tensor {
    public:
        using value_type = T;

        Tensor() = default;
        explicit Tensor(Shape shape, T fill = T(0))
            : shape_(std::move(shape)),
              data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}
        Tensor(Shape shape, std::vector<T> data)
            : shape_(std::move(shape)),
              data_(std::move(data)) {
            if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
                throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
        }

        static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

        const Shape& shape() const { return shape_; }
        int rank() const { return static_cast<int>(shape_.size()); }
        std::int64_t dim(int i) const {
            return shape_.at(i < 0 ? shape_.size() + i : static_cast<std::size_t>(i));
        }
        std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
        bool empty() const { return data_.empty(); }

        std::span<T> data() { return data_; }
        std::span<const T> data() const { return data_; }
        T* ptr() { return data_.data(); }
        const T* ptr() const { return data_.data(); }
        std::vector<T>& storage() { return data_; }
        const std::vector<T>& storage() const { return data_; }

        T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
        const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

        T item() const {
            if (data_.size() != 1)
                throw ShapeError("item() on tensor of shape " + shape_str(shape_));
            return data_[0];
        }

        Tensor reshaped(Shape shape) const {
            if (shape_numel(shape) != numel())
                throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
            return Tensor(std::move(shape), data_);
        }

        void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

        template <typename U>
        Tensor<U> cast() const {
            return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
        }

    private:
        Shape shape_;
        std::vector<T> data_;
    };

} // namespace l3dg::nc
