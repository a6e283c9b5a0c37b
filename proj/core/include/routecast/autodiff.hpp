#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "routecast/tensor.hpp"

namespace routecast {

class Tape;

namespace detail {
struct OpAccess;
}

/// Handle to a tensor value, optionally tracked on a tape. Cheap to copy;
/// the underlying value is immutable and shared.
class Var {
public:
    Var() = default;

    const Tensor& value() const { return *value_; }
    const Shape& shape() const { return value_->shape(); }
    std::size_t numel() const { return value_->numel(); }
    bool tracked() const { return id_ >= 0; }
    int id() const { return id_; }
    Tape* tape() const { return tape_; }

private:
    friend class Tape;
    friend struct detail::OpAccess;
    Var(Tape* tape, int id, std::shared_ptr<const Tensor> value)
        : tape_(tape), id_(id), value_(std::move(value)) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
    std::shared_ptr<const Tensor> value_;
};

/// Result of a backward pass: one gradient per tracked parameter of the
/// tape, zero-filled for parameters the loss never touched.
class Gradients {
public:
    const Tensor& at(const Var& param) const;
    bool contains(const Var& param) const { return by_id_.count(param.id()) > 0; }
    std::size_t size() const { return by_id_.size(); }

private:
    friend class Tape;
    std::unordered_map<int, Tensor> by_id_;
};

enum class OpKind : std::uint8_t {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    Concat,
    Mean,
    Sum,
    Relu,
    Sigmoid,
    Tanh,
    Sin,
    Exp,
    Log,
    Softmax,
    LayerNorm,
    Dropout,
    Transpose,
    Reshape,
    MaskedFill,
    Gather,
};

/// Reverse-mode tape. Nodes reference strictly earlier nodes, so the record
/// is acyclic by construction. A tape belongs to one thread; Tensor values
/// themselves are value-semantic and may cross threads freely.
class Tape {
public:
    explicit Tape(std::uint64_t dropout_seed = 0);
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Untracked leaf: participates in forward math, receives no gradient.
    Var constant(Tensor value);
    /// Tracked leaf: registered as a gradient target. With recording
    /// disabled this degrades to a constant.
    Var param(Tensor value);

    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Reverse sweep from a scalar loss. Throws ShapeError for non-scalar
    /// losses and Error for losses not produced on this tape.
    Gradients backward(const Var& loss);

    /// True when every node references strictly earlier nodes only.
    bool validate_topology() const;

    std::mt19937_64& rng() { return rng_; }

    struct Input {
        int id = -1;
        std::shared_ptr<const Tensor> value;
    };
    struct Node {
        OpKind op = OpKind::Leaf;
        std::vector<Input> inputs;
        std::vector<std::shared_ptr<const Tensor>> saved;
        std::size_t axis = 0;
        double scalar = 0.0;
        std::vector<std::size_t> index_attr; // transpose perm / gather indices
        Shape prev_shape;                    // reshape backward
    };

private:
    friend struct detail::OpAccess;
    std::vector<Node> nodes_;
    std::vector<int> param_ids_;
    std::mt19937_64 rng_;
    bool recording_ = true;
};

// --- operation set -------------------------------------------------------------
// Batched matmul with numpy-style broadcast over leading (batch) axes.
Var matmul(const Var& a, const Var& b);
// Elementwise with numpy-style broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var concat(std::span<const Var> parts, std::size_t axis);
Var mean(const Var& a, std::size_t axis);
Var sum(const Var& a, std::size_t axis);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var sin(const Var& a);
Var exp(const Var& a);
/// Natural log; throws NumericError on non-positive entries.
Var log(const Var& a);
/// Shift-normalized softmax along `axis`; rows sum to 1 and are strictly positive.
Var softmax(const Var& a, std::size_t axis);
/// (x - mean) / sqrt(var + 1e-5) along `axis`, population variance.
Var layer_norm(const Var& a, std::size_t axis);
/// Inverted dropout: at train time kept entries are scaled by 1/(1-rate);
/// with train == false this is the identity.
Var dropout(const Var& a, double rate, bool train);
Var transpose(const Var& a, std::span<const std::size_t> perm);
/// 2-d convenience: swap the two axes.
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);
/// Entries where mask != 0 are replaced by `fill`; no gradient flows there.
Var masked_fill(const Var& a, const Tensor& mask, double fill);
Var gather(const Var& a, std::size_t axis, std::span<const std::size_t> indices);

// Compositions of the primitive set.
Var sum_all(const Var& a);
Var mean_all(const Var& a);

constexpr double kLayerNormEps = 1e-5;

/// Builds a scalar loss from `x` bound on the given tape.
using ScalarFn = std::function<Var(Tape&, const Var&)>;

/// Central-difference gradient oracle: max over coordinates of
/// |analytic - central| / max(1, |central|). Probe evaluations run on fresh
/// tapes seeded identically, so dropout masks match the analytic pass.
double finite_difference_check(const ScalarFn& f, const Tensor& x, double eps,
                               std::uint64_t dropout_seed = 0);

} // namespace routecast
