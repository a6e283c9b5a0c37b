#pragma once

#include <random>
#include <string>

#include "routecast/autodiff.hpp"
#include "routecast/nn.hpp"

namespace routecast {

/// Registers the learnable frequency/phase vectors of a Time2Vec embedding
/// under `<prefix>.freq` and `<prefix>.phase`, both drawn from U[0, 2*pi).
/// `dim` must be >= 2: component 0 is linear, the rest are sinusoidal.
void add_time2vec_params(ParamStore& params, const std::string& prefix, std::size_t dim,
                         std::mt19937_64& rng);

/// Time2Vec over a batch of scalar time indices. `taus` has any shape S;
/// the result has shape S + [dim] with out[..., 0] = f0*tau + p0 and
/// out[..., i] = sin(fi*tau + pi) for i >= 1.
Var time2vec(Tape& tape, const Var& freq, const Var& phase, const Tensor& taus);

/// Single-timestamp convenience used by tests and docs.
Tensor time2vec_at(double tau, const Tensor& freq, const Tensor& phase);

/// Fuses raw node features with per-step time embeddings:
/// x (..., T, N, C) and tim (..., T, dt) -> (..., T, N, d) via the
/// projection weight (C + dt, d), i.e. proj([x || tim]) per (step, node).
Var embed_input(Tape& tape, const Var& x, const Var& tim, const Var& proj);

} // namespace routecast
