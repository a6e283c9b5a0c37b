#include "routecast/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace routecast {

namespace detail {

struct OpAccess {
    static Var make(Tape* tape, int id, std::shared_ptr<const Tensor> value) {
        return Var(tape, id, std::move(value));
    }

    static Var record(Tape* tape, Tape::Node node, std::shared_ptr<const Tensor> out) {
        bool tracked = false;
        for (const auto& in : node.inputs) {
            if (in.id >= 0) tracked = true;
        }
        if (tape == nullptr || !tape->recording_ || !tracked) {
            return Var(tape, -1, std::move(out));
        }
        tape->nodes_.push_back(std::move(node));
        return Var(tape, static_cast<int>(tape->nodes_.size() - 1), std::move(out));
    }

    static Tape* common_tape(std::initializer_list<const Var*> vars) {
        Tape* tape = nullptr;
        for (const Var* v : vars) {
            if (v->tape() == nullptr) continue;
            if (tape == nullptr) tape = v->tape();
            else if (tape != v->tape() && v->tracked()) throw Error("operands belong to different tapes");
        }
        return tape;
    }

    static std::shared_ptr<const Tensor> value_ptr(const Var& v) { return v.value_; }
};

} // namespace detail

using detail::OpAccess;

namespace {

std::shared_ptr<const Tensor> share(Tensor t) { return std::make_shared<const Tensor>(std::move(t)); }

} // namespace

// --- Tape -----------------------------------------------------------------------

Tape::Tape(std::uint64_t dropout_seed) : rng_(dropout_seed) {}

Var Tape::constant(Tensor value) { return Var(this, -1, share(std::move(value))); }

Var Tape::param(Tensor value) {
    if (!recording_) return constant(std::move(value));
    auto out = share(std::move(value));
    Node node;
    node.op = OpKind::Leaf;
    node.saved.push_back(out);
    nodes_.push_back(std::move(node));
    const int id = static_cast<int>(nodes_.size() - 1);
    param_ids_.push_back(id);
    return Var(this, id, std::move(out));
}

bool Tape::validate_topology() const {
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        for (const auto& in : nodes_[id].inputs) {
            if (in.id >= static_cast<int>(id)) return false;
        }
    }
    return true;
}

const Tensor& Gradients::at(const Var& param) const {
    auto it = by_id_.find(param.id());
    if (it == by_id_.end()) throw Error("Gradients::at: not a tracked parameter of this tape");
    return it->second;
}

namespace {

void accumulate(std::vector<Tensor>& buf, std::vector<char>& present, int id, Tensor g) {
    if (id < 0) return;
    if (!present[static_cast<std::size_t>(id)]) {
        buf[static_cast<std::size_t>(id)] = std::move(g);
        present[static_cast<std::size_t>(id)] = 1;
        return;
    }
    Tensor& dst = buf[static_cast<std::size_t>(id)];
    const double* src = g.data();
    double* d = dst.data();
    const std::size_t n = dst.numel();
    for (std::size_t i = 0; i < n; ++i) d[i] += src[i];
}

Tensor map_unary(const Tensor& a, double (*f)(double)) {
    Tensor out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i]);
    return out;
}

Tensor mul_raw(const Tensor& a, const Tensor& b) { return binary_broadcast(a, b, BinaryOp::Mul, "mul"); }
Tensor sub_raw(const Tensor& a, const Tensor& b) { return binary_broadcast(a, b, BinaryOp::Sub, "sub"); }
Tensor div_raw(const Tensor& a, const Tensor& b) { return binary_broadcast(a, b, BinaryOp::Div, "div"); }

// Repeat a reduced tensor back along `axis` (inverse of a keepdim=false
// reduction over an input of shape `full`), scaling entries by `factor`.
Tensor expand_axis(const Tensor& g, const Shape& full, std::size_t axis, double factor) {
    Tensor out(full);
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= full[i];
    const std::size_t ext = full[axis];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < full.size(); ++i) inner *= full[i];
    const double* pg = g.data();
    double* po = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t e = 0; e < ext; ++e) {
            double* dst = po + (o * ext + e) * inner;
            const double* src = pg + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i] * factor;
        }
    }
    return out;
}

void backward_node(const Tape::Node& node, const Tensor& g, std::vector<Tensor>& buf,
                   std::vector<char>& present) {
    switch (node.op) {
        case OpKind::Leaf:
            break;
        case OpKind::MatMul: {
            const Tensor& a = *node.inputs[0].value;
            const Tensor& b = *node.inputs[1].value;
            if (node.inputs[0].id >= 0) {
                Tensor ga = matmul_raw(g, b, false, true);
                accumulate(buf, present, node.inputs[0].id, reduce_to_shape(ga, a.shape()));
            }
            if (node.inputs[1].id >= 0) {
                Tensor gb = matmul_raw(a, g, true, false);
                accumulate(buf, present, node.inputs[1].id, reduce_to_shape(gb, b.shape()));
            }
            break;
        }
        case OpKind::Add: {
            for (int k = 0; k < 2; ++k) {
                if (node.inputs[k].id >= 0) {
                    accumulate(buf, present, node.inputs[k].id, reduce_to_shape(g, node.inputs[k].value->shape()));
                }
            }
            break;
        }
        case OpKind::Sub: {
            if (node.inputs[0].id >= 0) {
                accumulate(buf, present, node.inputs[0].id, reduce_to_shape(g, node.inputs[0].value->shape()));
            }
            if (node.inputs[1].id >= 0) {
                Tensor neg = g;
                for (double& v : neg.values()) v = -v;
                accumulate(buf, present, node.inputs[1].id, reduce_to_shape(neg, node.inputs[1].value->shape()));
            }
            break;
        }
        case OpKind::Mul: {
            const Tensor& a = *node.inputs[0].value;
            const Tensor& b = *node.inputs[1].value;
            if (node.inputs[0].id >= 0) {
                accumulate(buf, present, node.inputs[0].id, reduce_to_shape(mul_raw(g, b), a.shape()));
            }
            if (node.inputs[1].id >= 0) {
                accumulate(buf, present, node.inputs[1].id, reduce_to_shape(mul_raw(g, a), b.shape()));
            }
            break;
        }
        case OpKind::Div: {
            const Tensor& a = *node.inputs[0].value;
            const Tensor& b = *node.inputs[1].value;
            if (node.inputs[0].id >= 0) {
                accumulate(buf, present, node.inputs[0].id, reduce_to_shape(div_raw(g, b), a.shape()));
            }
            if (node.inputs[1].id >= 0) {
                // d(a/b)/db = -a / b^2
                Tensor gb = mul_raw(g, div_raw(a, mul_raw(b, b)));
                for (double& v : gb.values()) v = -v;
                accumulate(buf, present, node.inputs[1].id, reduce_to_shape(gb, b.shape()));
            }
            break;
        }
        case OpKind::Scale: {
            Tensor ga = g;
            for (double& v : ga.values()) v *= node.scalar;
            accumulate(buf, present, node.inputs[0].id, std::move(ga));
            break;
        }
        case OpKind::Concat: {
            const std::size_t axis = node.axis;
            const Shape& out_shape = g.shape();
            std::size_t outer = 1;
            for (std::size_t i = 0; i < axis; ++i) outer *= out_shape[i];
            std::size_t inner = 1;
            for (std::size_t i = axis + 1; i < out_shape.size(); ++i) inner *= out_shape[i];
            const std::size_t out_block = out_shape[axis] * inner;
            std::size_t offset = 0;
            for (const auto& input : node.inputs) {
                const std::size_t ext = input.value->shape()[axis];
                const std::size_t blk = ext * inner;
                if (input.id >= 0) {
                    Tensor gi(input.value->shape());
                    for (std::size_t o = 0; o < outer; ++o) {
                        std::copy_n(g.data() + o * out_block + offset, blk, gi.data() + o * blk);
                    }
                    accumulate(buf, present, input.id, std::move(gi));
                }
                offset += blk;
            }
            break;
        }
        case OpKind::Mean: {
            const Shape& full = node.inputs[0].value->shape();
            const double inv = 1.0 / static_cast<double>(full[node.axis]);
            accumulate(buf, present, node.inputs[0].id, expand_axis(g, full, node.axis, inv));
            break;
        }
        case OpKind::Sum: {
            const Shape& full = node.inputs[0].value->shape();
            accumulate(buf, present, node.inputs[0].id, expand_axis(g, full, node.axis, 1.0));
            break;
        }
        case OpKind::Relu: {
            const Tensor& x = *node.inputs[0].value;
            Tensor gx(g.shape());
            const std::size_t n = g.numel();
            for (std::size_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? g[i] : 0.0;
            accumulate(buf, present, node.inputs[0].id, std::move(gx));
            break;
        }
        case OpKind::Sigmoid: {
            const Tensor& y = *node.saved[0];
            Tensor gx(g.shape());
            const std::size_t n = g.numel();
            for (std::size_t i = 0; i < n; ++i) gx[i] = g[i] * y[i] * (1.0 - y[i]);
            accumulate(buf, present, node.inputs[0].id, std::move(gx));
            break;
        }
        case OpKind::Tanh: {
            const Tensor& y = *node.saved[0];
            Tensor gx(g.shape());
            const std::size_t n = g.numel();
            for (std::size_t i = 0; i < n; ++i) gx[i] = g[i] * (1.0 - y[i] * y[i]);
            accumulate(buf, present, node.inputs[0].id, std::move(gx));
            break;
        }
        case OpKind::Sin: {
            const Tensor& x = *node.inputs[0].value;
            Tensor gx(g.shape());
            const std::size_t n = g.numel();
            for (std::size_t i = 0; i < n; ++i) gx[i] = g[i] * std::cos(x[i]);
            accumulate(buf, present, node.inputs[0].id, std::move(gx));
            break;
        }
        case OpKind::Exp: {
            const Tensor& y = *node.saved[0];
            accumulate(buf, present, node.inputs[0].id, mul_raw(g, y));
            break;
        }
        case OpKind::Log: {
            const Tensor& x = *node.inputs[0].value;
            accumulate(buf, present, node.inputs[0].id, div_raw(g, x));
            break;
        }
        case OpKind::Softmax: {
            const Tensor& y = *node.saved[0];
            Tensor gy = mul_raw(g, y);
            Tensor dot = sum_axis_raw(gy, node.axis, /*keepdim=*/true);
            Tensor gx = mul_raw(y, sub_raw(g, dot));
            accumulate(buf, present, node.inputs[0].id, std::move(gx));
            break;
        }
        case OpKind::LayerNorm: {
            const Tensor& y = *node.saved[0];
            const Tensor& inv_std = *node.saved[1]; // keepdim shape
            Tensor mg = mean_axis_raw(g, node.axis, /*keepdim=*/true);
            Tensor mgy = mean_axis_raw(mul_raw(g, y), node.axis, /*keepdim=*/true);
            Tensor gx = mul_raw(sub_raw(sub_raw(g, mg), mul_raw(y, mgy)), inv_std);
            accumulate(buf, present, node.inputs[0].id, std::move(gx));
            break;
        }
        case OpKind::Dropout: {
            const Tensor& mask = *node.saved[0];
            accumulate(buf, present, node.inputs[0].id, mul_raw(g, mask));
            break;
        }
        case OpKind::Transpose: {
            const auto& perm = node.index_attr;
            std::vector<std::size_t> inverse(perm.size());
            for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
            accumulate(buf, present, node.inputs[0].id, transpose_raw(g, inverse));
            break;
        }
        case OpKind::Reshape: {
            Tensor gx(node.prev_shape, g.values());
            accumulate(buf, present, node.inputs[0].id, std::move(gx));
            break;
        }
        case OpKind::MaskedFill: {
            const Tensor& mask = *node.saved[0];
            Tensor gx(g.shape());
            const std::size_t n = g.numel();
            for (std::size_t i = 0; i < n; ++i) gx[i] = mask[i] != 0.0 ? 0.0 : g[i];
            accumulate(buf, present, node.inputs[0].id, std::move(gx));
            break;
        }
        case OpKind::Gather: {
            const Shape& full = node.inputs[0].value->shape();
            const std::size_t axis = node.axis;
            const auto& indices = node.index_attr;
            Tensor gx(full);
            std::size_t outer = 1;
            for (std::size_t i = 0; i < axis; ++i) outer *= full[i];
            const std::size_t ext = full[axis];
            std::size_t inner = 1;
            for (std::size_t i = axis + 1; i < full.size(); ++i) inner *= full[i];
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t j = 0; j < indices.size(); ++j) {
                    const double* src = g.data() + (o * indices.size() + j) * inner;
                    double* dst = gx.data() + (o * ext + indices[j]) * inner;
                    for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                }
            }
            accumulate(buf, present, node.inputs[0].id, std::move(gx));
            break;
        }
    }
}

} // namespace

Gradients Tape::backward(const Var& loss) {
    if (!loss.tracked() || loss.tape() != this) {
        throw Error("backward: loss was not produced on the active tape");
    }
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_to_string(loss.shape()));
    }
    std::vector<Tensor> buf(nodes_.size());
    std::vector<char> present(nodes_.size(), 0);
    buf[static_cast<std::size_t>(loss.id())] = Tensor(loss.shape(), 1.0);
    present[static_cast<std::size_t>(loss.id())] = 1;

    for (int id = loss.id(); id >= 0; --id) {
        if (!present[static_cast<std::size_t>(id)]) continue;
        backward_node(nodes_[static_cast<std::size_t>(id)], buf[static_cast<std::size_t>(id)], buf, present);
    }

    Gradients grads;
    for (int pid : param_ids_) {
        if (present[static_cast<std::size_t>(pid)]) {
            grads.by_id_.emplace(pid, std::move(buf[static_cast<std::size_t>(pid)]));
        } else {
            // Untouched parameters still appear, with zero gradients of matching shape.
            grads.by_id_.emplace(pid, Tensor(nodes_[static_cast<std::size_t>(pid)].saved[0]->shape()));
        }
    }
    return grads;
}

// --- ops ------------------------------------------------------------------------

namespace {

Tape::Input input_of(const Var& v) {
    Tape::Input in;
    in.id = v.id();
    in.value = OpAccess::value_ptr(v);
    return in;
}

Var binary_op(const Var& a, const Var& b, OpKind kind, BinaryOp raw, const char* name) {
    Tape* tape = OpAccess::common_tape({&a, &b});
    Tensor out = binary_broadcast(a.value(), b.value(), raw, name);
    Tape::Node node;
    node.op = kind;
    node.inputs = {input_of(a), input_of(b)};
    return OpAccess::record(tape, std::move(node), share(std::move(out)));
}

Var unary_op(const Var& a, OpKind kind, Tensor out, bool save_output) {
    Tape::Node node;
    node.op = kind;
    node.inputs = {input_of(a)};
    auto shared_out = share(std::move(out));
    if (save_output) node.saved.push_back(shared_out);
    return OpAccess::record(a.tape(), std::move(node), shared_out);
}

} // namespace

Var matmul(const Var& a, const Var& b) {
    Tape* tape = OpAccess::common_tape({&a, &b});
    Tensor out = matmul_raw(a.value(), b.value());
    Tape::Node node;
    node.op = OpKind::MatMul;
    node.inputs = {input_of(a), input_of(b)};
    return OpAccess::record(tape, std::move(node), share(std::move(out)));
}

Var add(const Var& a, const Var& b) { return binary_op(a, b, OpKind::Add, BinaryOp::Add, "add"); }
Var sub(const Var& a, const Var& b) { return binary_op(a, b, OpKind::Sub, BinaryOp::Sub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary_op(a, b, OpKind::Mul, BinaryOp::Mul, "mul"); }
Var div(const Var& a, const Var& b) { return binary_op(a, b, OpKind::Div, BinaryOp::Div, "div"); }

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (double& v : out.values()) v *= s;
    Tape::Node node;
    node.op = OpKind::Scale;
    node.scalar = s;
    node.inputs = {input_of(a)};
    return OpAccess::record(a.tape(), std::move(node), share(std::move(out)));
}

Var concat(std::span<const Var> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    std::vector<const Tensor*> raw;
    raw.reserve(parts.size());
    for (const Var& v : parts) raw.push_back(&v.value());
    Tensor out = concat_raw(raw, axis);
    Tape* tape = nullptr;
    for (const Var& v : parts) {
        if (v.tape() != nullptr) {
            if (tape != nullptr && tape != v.tape() && v.tracked()) {
                throw Error("concat: operands belong to different tapes");
            }
            if (tape == nullptr) tape = v.tape();
        }
    }
    Tape::Node node;
    node.op = OpKind::Concat;
    node.axis = axis;
    for (const Var& v : parts) node.inputs.push_back(input_of(v));
    return OpAccess::record(tape, std::move(node), share(std::move(out)));
}

Var mean(const Var& a, std::size_t axis) {
    Tensor out = mean_axis_raw(a.value(), axis);
    Tape::Node node;
    node.op = OpKind::Mean;
    node.axis = axis;
    node.inputs = {input_of(a)};
    return OpAccess::record(a.tape(), std::move(node), share(std::move(out)));
}

Var sum(const Var& a, std::size_t axis) {
    Tensor out = sum_axis_raw(a.value(), axis);
    Tape::Node node;
    node.op = OpKind::Sum;
    node.axis = axis;
    node.inputs = {input_of(a)};
    return OpAccess::record(a.tape(), std::move(node), share(std::move(out)));
}

Var relu(const Var& a) {
    return unary_op(a, OpKind::Relu, map_unary(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), false);
}

Var sigmoid(const Var& a) {
    return unary_op(a, OpKind::Sigmoid,
                    map_unary(a.value(), [](double x) { return 1.0 / (1.0 + std::exp(-x)); }), true);
}

Var tanh(const Var& a) {
    return unary_op(a, OpKind::Tanh, map_unary(a.value(), [](double x) { return std::tanh(x); }), true);
}

Var sin(const Var& a) {
    return unary_op(a, OpKind::Sin, map_unary(a.value(), [](double x) { return std::sin(x); }), false);
}

Var exp(const Var& a) {
    return unary_op(a, OpKind::Exp, map_unary(a.value(), [](double x) { return std::exp(x); }), true);
}

Var log(const Var& a) {
    for (double v : a.value().values()) {
        if (v <= 0.0) throw NumericError("log: non-positive input entry");
    }
    return unary_op(a, OpKind::Log, map_unary(a.value(), [](double x) { return std::log(x); }), false);
}

Var softmax(const Var& a, std::size_t axis) {
    const Tensor& x = a.value();
    if (axis >= x.rank()) {
        throw ShapeError("softmax: invalid axis " + std::to_string(axis) + " for shape " + x.shape_str());
    }
    Tensor out(x.shape());
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
    const std::size_t ext = x.shape()[axis];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[i];
    const double* pi = x.data();
    double* po = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * ext * inner + i;
            double mx = pi[base];
            for (std::size_t e = 1; e < ext; ++e) mx = std::max(mx, pi[base + e * inner]);
            double total = 0.0;
            for (std::size_t e = 0; e < ext; ++e) {
                const double v = std::exp(pi[base + e * inner] - mx);
                po[base + e * inner] = v;
                total += v;
            }
            const double inv = 1.0 / total;
            for (std::size_t e = 0; e < ext; ++e) po[base + e * inner] *= inv;
        }
    }
    Tape::Node node;
    node.op = OpKind::Softmax;
    node.axis = axis;
    node.inputs = {input_of(a)};
    auto shared_out = share(std::move(out));
    node.saved.push_back(shared_out);
    return OpAccess::record(a.tape(), std::move(node), shared_out);
}

Var layer_norm(const Var& a, std::size_t axis) {
    const Tensor& x = a.value();
    if (axis >= x.rank()) {
        throw ShapeError("layer_norm: invalid axis " + std::to_string(axis) + " for shape " + x.shape_str());
    }
    Tensor mu = mean_axis_raw(x, axis, /*keepdim=*/true);
    Tensor centered = sub_raw(x, mu);
    Tensor var = mean_axis_raw(mul_raw(centered, centered), axis, /*keepdim=*/true);
    Tensor inv_std(var.shape());
    for (std::size_t i = 0; i < var.numel(); ++i) inv_std[i] = 1.0 / std::sqrt(var[i] + kLayerNormEps);
    Tensor out = mul_raw(centered, inv_std);

    Tape::Node node;
    node.op = OpKind::LayerNorm;
    node.axis = axis;
    node.inputs = {input_of(a)};
    auto shared_out = share(std::move(out));
    node.saved.push_back(shared_out);
    node.saved.push_back(share(std::move(inv_std)));
    return OpAccess::record(a.tape(), std::move(node), shared_out);
}

Var dropout(const Var& a, double rate, bool train) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    }
    if (!train || rate == 0.0) return a;
    if (a.tape() == nullptr) throw Error("dropout: variable is not bound to a tape");
    std::mt19937_64& rng = a.tape()->rng();
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask(a.shape());
    for (double& v : mask.values()) v = uni(rng) >= rate ? keep_scale : 0.0;
    Tensor out = mul_raw(a.value(), mask);
    Tape::Node node;
    node.op = OpKind::Dropout;
    node.inputs = {input_of(a)};
    node.saved.push_back(share(std::move(mask)));
    return OpAccess::record(a.tape(), std::move(node), share(std::move(out)));
}

Var transpose(const Var& a, std::span<const std::size_t> perm) {
    Tensor out = transpose_raw(a.value(), perm);
    Tape::Node node;
    node.op = OpKind::Transpose;
    node.index_attr.assign(perm.begin(), perm.end());
    node.inputs = {input_of(a)};
    return OpAccess::record(a.tape(), std::move(node), share(std::move(out)));
}

Var transpose(const Var& a) {
    if (a.value().rank() != 2) throw ShapeError("transpose: expected rank-2 tensor, got " + a.value().shape_str());
    const std::size_t perm[2] = {1, 0};
    return transpose(a, perm);
}

Var reshape(const Var& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot reshape " + a.value().shape_str() + " to " + shape_to_string(shape));
    }
    Tensor out(shape, a.value().values());
    Tape::Node node;
    node.op = OpKind::Reshape;
    node.prev_shape = a.shape();
    node.inputs = {input_of(a)};
    return OpAccess::record(a.tape(), std::move(node), share(std::move(out)));
}

Var masked_fill(const Var& a, const Tensor& mask, double fill) {
    if (!a.value().same_shape(mask)) {
        throw ShapeError("masked_fill: mask shape " + mask.shape_str() + " does not match " + a.value().shape_str());
    }
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        if (mask[i] != 0.0) out[i] = fill;
    }
    Tape::Node node;
    node.op = OpKind::MaskedFill;
    node.scalar = fill;
    node.inputs = {input_of(a)};
    node.saved.push_back(share(Tensor(mask)));
    return OpAccess::record(a.tape(), std::move(node), share(std::move(out)));
}

Var gather(const Var& a, std::size_t axis, std::span<const std::size_t> indices) {
    Tensor out = gather_raw(a.value(), axis, indices);
    Tape::Node node;
    node.op = OpKind::Gather;
    node.axis = axis;
    node.index_attr.assign(indices.begin(), indices.end());
    node.inputs = {input_of(a)};
    return OpAccess::record(a.tape(), std::move(node), share(std::move(out)));
}

Var sum_all(const Var& a) { return sum(reshape(a, Shape{a.numel()}), 0); }
Var mean_all(const Var& a) { return mean(reshape(a, Shape{a.numel()}), 0); }

// --- gradient oracle --------------------------------------------------------------

double finite_difference_check(const ScalarFn& f, const Tensor& x, double eps, std::uint64_t dropout_seed) {
    if (eps <= 0.0) throw ConfigError("finite_difference_check: eps must be positive");

    Tape tape(dropout_seed);
    Var vx = tape.param(x);
    Var loss = f(tape, vx);
    if (loss.numel() != 1) throw ShapeError("finite_difference_check: f must return a scalar");
    Gradients grads = tape.backward(loss);
    const Tensor analytic = grads.at(vx);

    const auto eval_at = [&](const Tensor& probe) {
        Tape t(dropout_seed);
        t.set_recording(false);
        Var v = t.param(probe);
        const double out = f(t, v).value()[0];
        if (!std::isfinite(out)) throw NumericError("finite_difference_check: non-finite function value");
        return out;
    };

    double worst = 0.0;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double fp = eval_at(probe);
        probe[i] = orig - eps;
        const double fm = eval_at(probe);
        probe[i] = orig;
        const double central = (fp - fm) / (2.0 * eps);
        const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
        worst = std::max(worst, err);
    }
    return worst;
}

} // namespace routecast
