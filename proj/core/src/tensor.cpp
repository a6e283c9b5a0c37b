#include "routecast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace routecast {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    for (std::size_t e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
    }
}

std::vector<std::size_t> row_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

} // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
    check_shape(shape_);
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    check_shape(shape_);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
    }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("matrix rows must have equal length");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t.data()[i * n + i] = 1.0;
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str());
    }
    return shape_[axis];
}

double Tensor::at(std::span<const std::size_t> index) const {
    return const_cast<Tensor*>(this)->at(index);
}

double& Tensor::at(std::span<const std::size_t> index) {
    if (index.size() != shape_.size()) throw ShapeError("index rank mismatch for shape " + shape_str());
    std::size_t flat = 0;
    std::size_t stride = 1;
    for (std::size_t i = shape_.size(); i-- > 0;) {
        if (index[i] >= shape_[i]) throw ShapeError("index out of range for shape " + shape_str());
        flat += index[i] * stride;
        stride *= shape_[i];
    }
    return data_[flat];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// --- broadcasting ------------------------------------------------------------

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ea = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::size_t eb = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (ea != eb && ea != 1 && eb != 1) {
            throw ShapeError(std::string(op) + ": shapes " + shape_to_string(a) + " and " +
                             shape_to_string(b) + " do not broadcast");
        }
        out[rank - 1 - i] = std::max(ea, eb);
    }
    return out;
}

namespace {

// Strides of `shape` embedded in an output of rank `out_rank`, with stride 0
// on broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& shape, const Shape& out) {
    std::vector<std::size_t> strides(out.size(), 0);
    const auto own = row_strides(shape);
    for (std::size_t i = 0; i < shape.size(); ++i) {
        const std::size_t out_axis = out.size() - shape.size() + i;
        strides[out_axis] = (shape[i] == 1 && out[out_axis] != 1) ? 0 : own[i];
    }
    return strides;
}

template <typename F>
void for_each_broadcast(const Tensor& a, const Tensor& b, const Shape& out_shape, Tensor& out, F&& f) {
    const std::size_t n = out.numel();
    if (a.same_shape(b)) {
        const double* pa = a.data();
        const double* pb = b.data();
        double* po = out.data();
        for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
        return;
    }
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    const std::size_t rank = out_shape.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        po[i] = f(pa[ia], pb[ib]);
        for (std::size_t ax = rank; ax-- > 0;) {
            if (++idx[ax] < out_shape[ax]) {
                ia += sa[ax];
                ib += sb[ax];
                break;
            }
            idx[ax] = 0;
            ia -= sa[ax] * (out_shape[ax] - 1);
            ib -= sb[ax] * (out_shape[ax] - 1);
        }
    }
}

} // namespace

Tensor binary_broadcast(const Tensor& a, const Tensor& b, BinaryOp op, const char* name) {
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape(), name);
    Tensor out(out_shape);
    switch (op) {
        case BinaryOp::Add:
            for_each_broadcast(a, b, out_shape, out, [](double x, double y) { return x + y; });
            break;
        case BinaryOp::Sub:
            for_each_broadcast(a, b, out_shape, out, [](double x, double y) { return x - y; });
            break;
        case BinaryOp::Mul:
            for_each_broadcast(a, b, out_shape, out, [](double x, double y) { return x * y; });
            break;
        case BinaryOp::Div:
            for (double v : b.values()) {
                if (v == 0.0) throw NumericError("div: zero divisor entry");
            }
            for_each_broadcast(a, b, out_shape, out, [](double x, double y) { return x / y; });
            break;
    }
    return out;
}

Tensor reduce_to_shape(const Tensor& grad, const Shape& target) {
    if (grad.shape() == target) return grad;
    Tensor out(target);
    const auto st = broadcast_strides(target, grad.shape());
    const Shape& gs = grad.shape();
    const std::size_t rank = gs.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t it = 0;
    const double* pg = grad.data();
    double* po = out.data();
    const std::size_t n = grad.numel();
    for (std::size_t i = 0; i < n; ++i) {
        po[it] += pg[i];
        for (std::size_t ax = rank; ax-- > 0;) {
            if (++idx[ax] < gs[ax]) {
                it += st[ax];
                break;
            }
            idx[ax] = 0;
            it -= st[ax] * (gs[ax] - 1);
        }
    }
    return out;
}

// --- matmul ------------------------------------------------------------------

void mm2d_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

namespace {

void mm2d_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    // b is (n, k) row-major, used transposed
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

void mm2d_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    // a is (k, m) row-major, used transposed
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a + p * m;
        const double* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = ap[i];
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

void mm2d_tt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * bj[p];
            ci[j] += acc;
        }
    }
}

} // namespace

Tensor matmul_raw(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw ShapeError("matmul: operands must have rank >= 2, got " + a.shape_str() + " and " +
                         b.shape_str());
    }
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    const std::size_t am = as[as.size() - 2], an = as[as.size() - 1];
    const std::size_t bm = bs[bs.size() - 2], bn = bs[bs.size() - 1];
    const std::size_t m = trans_a ? an : am;
    const std::size_t ka = trans_a ? am : an;
    const std::size_t kb = trans_b ? bn : bm;
    const std::size_t n = trans_b ? bm : bn;
    if (ka != kb) {
        throw ShapeError("matmul: inner extents do not conform for shapes " + a.shape_str() + " and " +
                         b.shape_str());
    }

    const Shape batch_a(as.begin(), as.end() - 2);
    const Shape batch_b(bs.begin(), bs.end() - 2);
    const Shape batch = broadcast_shapes(batch_a, batch_b, "matmul");

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out(out_shape);

    const std::size_t slice_a = am * an;
    const std::size_t slice_b = bm * bn;
    const std::size_t slice_o = m * n;
    const std::size_t batches = shape_numel(batch);

    // Broadcast strides over the batch axes, counted in slices.
    std::vector<std::size_t> sa(batch.size(), 0), sb(batch.size(), 0);
    {
        const auto stride_of = [&](const Shape& bshape, std::vector<std::size_t>& dst) {
            if (bshape.empty()) return;
            auto own = row_strides(bshape);
            for (std::size_t i = 0; i < bshape.size(); ++i) {
                const std::size_t axis = batch.size() - bshape.size() + i;
                dst[axis] = (bshape[i] == 1 && batch[axis] != 1) ? 0 : own[i];
            }
        };
        stride_of(batch_a, sa);
        stride_of(batch_b, sb);
    }

    std::vector<std::size_t> idx(batch.size(), 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t bi = 0; bi < batches; ++bi) {
        const double* pa = a.data() + ia * slice_a;
        const double* pb = b.data() + ib * slice_b;
        double* pc = out.data() + bi * slice_o;
        if (!trans_a && !trans_b) mm2d_nn(pa, pb, pc, m, ka, n);
        else if (!trans_a && trans_b) mm2d_nt(pa, pb, pc, m, ka, n);
        else if (trans_a && !trans_b) mm2d_tn(pa, pb, pc, m, ka, n);
        else mm2d_tt(pa, pb, pc, m, ka, n);

        for (std::size_t ax = batch.size(); ax-- > 0;) {
            if (++idx[ax] < batch[ax]) {
                ia += sa[ax];
                ib += sb[ax];
                break;
            }
            idx[ax] = 0;
            ia -= sa[ax] * (batch[ax] - 1);
            ib -= sb[ax] * (batch[ax] - 1);
        }
    }
    return out;
}

// --- layout ops ---------------------------------------------------------------

Tensor transpose_raw(const Tensor& t, std::span<const std::size_t> perm) {
    if (perm.size() != t.rank()) throw ShapeError("transpose: permutation rank mismatch for " + t.shape_str());
    std::vector<bool> seen(t.rank(), false);
    Shape out_shape(t.rank());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= t.rank() || seen[perm[i]]) throw ShapeError("transpose: invalid permutation");
        seen[perm[i]] = true;
        out_shape[i] = t.shape()[perm[i]];
    }
    Tensor out(out_shape);
    const auto in_strides = row_strides(t.shape());
    std::vector<std::size_t> strides(t.rank());
    for (std::size_t i = 0; i < perm.size(); ++i) strides[i] = in_strides[perm[i]];

    const std::size_t rank = out_shape.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    double* po = out.data();
    const double* pi = t.data();
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i) {
        po[i] = pi[src];
        for (std::size_t ax = rank; ax-- > 0;) {
            if (++idx[ax] < out_shape[ax]) {
                src += strides[ax];
                break;
            }
            idx[ax] = 0;
            src -= strides[ax] * (out_shape[ax] - 1);
        }
    }
    return out;
}

Tensor concat_raw(std::span<const Tensor* const> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Tensor& first = *parts.front();
    if (axis >= first.rank()) throw ShapeError("concat: axis out of range for " + first.shape_str());
    Shape out_shape = first.shape();
    std::size_t total = 0;
    for (const Tensor* p : parts) {
        if (p->rank() != first.rank()) throw ShapeError("concat: rank mismatch");
        for (std::size_t i = 0; i < first.rank(); ++i) {
            if (i != axis && p->shape()[i] != first.shape()[i]) {
                throw ShapeError("concat: shapes " + first.shape_str() + " and " + p->shape_str() +
                                 " differ off-axis");
            }
        }
        total += p->shape()[axis];
    }
    out_shape[axis] = total;
    Tensor out(out_shape);

    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= out_shape[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < out_shape.size(); ++i) inner *= out_shape[i];

    const std::size_t out_block = total * inner;
    std::size_t offset = 0;
    for (const Tensor* p : parts) {
        const std::size_t blk = p->shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(p->data() + o * blk, blk, out.data() + o * out_block + offset);
        }
        offset += blk;
    }
    return out;
}

Tensor sum_axis_raw(const Tensor& t, std::size_t axis, bool keepdim) {
    if (axis >= t.rank()) throw ShapeError("sum: axis out of range for " + t.shape_str());
    Shape out_shape;
    for (std::size_t i = 0; i < t.rank(); ++i) {
        if (i == axis) {
            if (keepdim) out_shape.push_back(1);
        } else {
            out_shape.push_back(t.shape()[i]);
        }
    }
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor out(out_shape);
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= t.shape()[i];
    const std::size_t ext = t.shape()[axis];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < t.rank(); ++i) inner *= t.shape()[i];
    const double* pi = t.data();
    double* po = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t e = 0; e < ext; ++e) {
            const double* src = pi + (o * ext + e) * inner;
            double* dst = po + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    }
    return out;
}

Tensor mean_axis_raw(const Tensor& t, std::size_t axis, bool keepdim) {
    Tensor out = sum_axis_raw(t, axis, keepdim);
    const double inv = 1.0 / static_cast<double>(t.shape()[axis]);
    for (double& v : out.values()) v *= inv;
    return out;
}

Tensor gather_raw(const Tensor& t, std::size_t axis, std::span<const std::size_t> indices) {
    if (axis >= t.rank()) throw ShapeError("gather: axis out of range for " + t.shape_str());
    if (indices.empty()) throw ShapeError("gather: empty index list");
    const std::size_t ext = t.shape()[axis];
    for (std::size_t ix : indices) {
        if (ix >= ext) throw ShapeError("gather: index " + std::to_string(ix) + " out of range for axis extent " +
                                        std::to_string(ext));
    }
    Shape out_shape = t.shape();
    out_shape[axis] = indices.size();
    Tensor out(out_shape);
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= t.shape()[i];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < t.rank(); ++i) inner *= t.shape()[i];
    const double* pi = t.data();
    double* po = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < indices.size(); ++j) {
            std::copy_n(pi + (o * ext + indices[j]) * inner, inner, po + (o * indices.size() + j) * inner);
        }
    }
    return out;
}

} // namespace routecast
