#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "routecast/nn.hpp"

namespace routecast {

enum class FusionMode { Weighted, Top1 };

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from(const std::string& tag);

/// Registers the trainable memory bank: `<prefix>.keys` (M, d), one key per
/// active expert, and the pooling projection `<prefix>.wq` (d, d).
void add_router_params(ParamStore& params, const std::string& prefix, std::size_t n_experts,
                       std::size_t hidden_dim, std::mt19937_64& rng);

/// Pooled query: W_q applied to the mean over the time and node axes of the
/// embedded input (B, T, N, d) -> (B, d).
Var memory_query(const Var& x, const Var& wq);

struct RoutingDecision {
    Var weights;                      // (B, M) softmax routing probabilities
    std::vector<std::size_t> chosen;  // argmax per window, ties to the lowest index
};

/// alpha_m = softmax_m(q . k_m) per window.
RoutingDecision routing_weights(const Var& q, const Var& keys);

/// Weighted mode blends all experts by alpha. Top-1 forwards the argmax
/// expert's output bit-exactly; the selection is not differentiated, but
/// gradient still reaches the chosen routing weight (straight-through).
Var fuse_outputs(const RoutingDecision& decision, std::span<const Var> outputs, FusionMode mode);

/// Index of the expert with the lowest per-window MAE against the target,
/// computed on detached values; ties resolve to the lowest index.
std::vector<std::size_t> oracle_expert_labels(std::span<const Var> outputs, const Tensor& target);

/// Mean over the batch of -log(alpha[label] + 1e-12).
Var routing_loss(const RoutingDecision& decision, std::span<const std::size_t> labels);

} // namespace routecast
