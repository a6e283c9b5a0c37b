#include "routecast/time2vec.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace routecast {

void add_time2vec_params(ParamStore& params, const std::string& prefix, std::size_t dim,
                         std::mt19937_64& rng) {
    if (dim < 2) {
        throw ConfigError("time2vec needs dim >= 2 (one linear plus at least one periodic component)");
    }
    const double two_pi = 2.0 * std::numbers::pi;
    params.add(prefix + ".freq", uniform_tensor(Shape{dim}, 0.0, two_pi, rng));
    params.add(prefix + ".phase", uniform_tensor(Shape{dim}, 0.0, two_pi, rng));
}

Var time2vec(Tape& tape, const Var& freq, const Var& phase, const Tensor& taus) {
    const std::size_t dim = freq.value().extent(0);
    if (dim < 2) throw ConfigError("time2vec needs dim >= 2");
    if (!phase.value().same_shape(freq.value())) {
        throw ConfigError("time2vec frequency/phase lengths differ: " + freq.value().shape_str() + " vs " +
                          phase.value().shape_str());
    }
    Shape col_shape = taus.shape();
    col_shape.push_back(1);
    Var tau_col = tape.constant(Tensor(col_shape, taus.values()));
    Var arg = add(mul(tau_col, freq), phase); // (..., dim)

    const std::size_t last = arg.shape().size() - 1;
    const std::size_t linear_idx[1] = {0};
    std::vector<std::size_t> periodic_idx(dim - 1);
    for (std::size_t i = 0; i + 1 < dim; ++i) periodic_idx[i] = i + 1;

    Var linear = gather(arg, last, linear_idx);
    Var periodic = sin(gather(arg, last, periodic_idx));
    const Var parts[2] = {linear, periodic};
    return concat(parts, last);
}

Tensor time2vec_at(double tau, const Tensor& freq, const Tensor& phase) {
    Tape tape;
    tape.set_recording(false);
    Var out = time2vec(tape, tape.constant(freq), tape.constant(phase), Tensor::scalar(tau));
    return Tensor(Shape{freq.extent(0)}, out.value().values());
}

Var embed_input(Tape& tape, const Var& x, const Var& tim, const Var& proj) {
    const Shape& xs = x.shape();
    if (xs.size() < 3) throw ShapeError("embed_input: x must be (..., T, N, C), got " + x.value().shape_str());
    const std::size_t channels = xs[xs.size() - 1];
    const std::size_t nodes = xs[xs.size() - 2];
    const std::size_t dt = tim.shape().back();
    if (proj.shape().size() != 2 || proj.shape()[0] != channels + dt) {
        throw ShapeError("embed_input: projection expects input width " +
                         std::to_string(proj.shape().empty() ? 0 : proj.shape()[0]) +
                         " but features provide C + dt = " + std::to_string(channels + dt));
    }
    // Tile the per-step embedding across the node axis.
    Shape tiled = tim.shape();
    tiled.insert(tiled.end() - 1, 1); // (..., T, 1, dt)
    Var tim_col = reshape(tim, tiled);
    Shape target = xs;
    target[target.size() - 1] = dt;
    Var tim_tiled = add(tim_col, tape.constant(Tensor(target))); // broadcast against zeros
    const Var parts[2] = {x, tim_tiled};
    Var fused = concat(parts, xs.size() - 1); // (..., T, N, C + dt)
    (void)nodes;
    return matmul(fused, proj);
}

} // namespace routecast
