#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "routecast/errors.hpp"

namespace routecast {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of doubles. Value semantics; shape extents are
/// all positive and product(shape) == data.size() at all times.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, double fill);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
    /// 1-d tensor from a value list.
    static Tensor vector(std::initializer_list<double> values);
    static Tensor vector(std::vector<double> values);
    /// 2-d tensor from nested value lists (rows must be equal length).
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(std::size_t n);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double at(std::span<const std::size_t> index) const;
    double& at(std::span<const std::size_t> index);

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    std::string shape_str() const { return shape_to_string(shape_); }

private:
    Shape shape_;
    std::vector<double> data_;
};

// --- raw (tape-free) kernels -------------------------------------------------
// These operate on values only; the autodiff layer builds on them for both
// forward evaluation and backward accumulation.

/// Broadcast two shapes numpy-style (align right, extents equal or 1).
/// Throws ShapeError naming `op` when the shapes do not broadcast.
Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op);

enum class BinaryOp { Add, Sub, Mul, Div };
Tensor binary_broadcast(const Tensor& a, const Tensor& b, BinaryOp op, const char* name);

/// Sum `grad` down to `target` shape (inverse of broadcasting).
Tensor reduce_to_shape(const Tensor& grad, const Shape& target);

/// Batched matrix multiply with numpy-style broadcast over the batch axes.
/// When trans_a/trans_b are set the last two axes of that operand are
/// treated as transposed.
Tensor matmul_raw(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

Tensor transpose_raw(const Tensor& t, std::span<const std::size_t> perm);
Tensor concat_raw(std::span<const Tensor* const> parts, std::size_t axis);
Tensor sum_axis_raw(const Tensor& t, std::size_t axis, bool keepdim = false);
Tensor mean_axis_raw(const Tensor& t, std::size_t axis, bool keepdim = false);
Tensor gather_raw(const Tensor& t, std::size_t axis, std::span<const std::size_t> indices);

/// 2-d matmul on raw pointers; `c` is accumulated into (caller zeroes it).
void mm2d_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

} // namespace routecast
