#pragma once

#include <random>
#include <string>

#include "routecast/graph.hpp"
#include "routecast/nn.hpp"

namespace routecast {

/// Spatial-graph flavor of an expert; the backbone is identical across kinds.
enum class ExpertKind { Identity, Adaptive, Attention, SpatioSemantic };

std::string to_string(ExpertKind kind);
ExpertKind expert_kind_from(const std::string& tag);

struct ExpertConfig {
    std::size_t hidden_dim = 32;  // d, must be divisible by heads
    std::size_t heads = 4;
    std::size_t time_dim = 8;     // Time2Vec width
    std::size_t layers = 1;       // temporal-attention + spatial rounds before the horizon attention
    std::size_t channels = 1;     // C
    std::size_t adaptive_dim = 8; // node-embedding width of the learned static graph
    std::size_t edge_hidden = 16; // hidden width of the edge-score MLP
    double rho = 0.7;             // kept-edge ratio of the hybrid graph
};

/// Registers every backbone and graph parameter of one expert under
/// `<prefix>.`. All kinds register identical backbone shapes; only the
/// graph parameters differ.
void add_expert_params(ParamStore& params, const std::string& prefix, ExpertKind kind,
                       const ExpertConfig& cfg, std::size_t n_nodes, std::mt19937_64& rng);

/// Names of the backbone (non-graph) parameters, for shape-audit tests.
std::vector<std::string> backbone_param_names(const std::string& prefix, const ExpertConfig& cfg);

struct ExpertInputs {
    Var xp;                                      // (B, T', N, d) embedded window
    Var tim_future;                              // (B, T, dt) horizon time embeddings
    const AdjacencyMatrix* static_graph = nullptr; // road topology (SpatioSemantic only)
    Tensor window_features;                      // (B, N, C) per-node mean features
    bool train = false;
    double dropout_rate = 0.0;
};

struct ExpertOutput {
    Var forecast; // (B, T, N, C) in normalized units
    Var hidden;   // (B, T, N, d)
};

/// Per-node multi-head self-attention over the time axis, with residual
/// and layer norm: LN(x + Attn(x)) * gamma + beta.
Var temporal_attention(const Var& x, const Var& wq, const Var& wk, const Var& wv, const Var& wo,
                       const Var& ln_gamma, const Var& ln_beta, std::size_t heads,
                       double dropout_rate, bool train);

/// relu(A_hat X W_s) per step; the caller owns the residual and layer norm.
/// a_hat may be (N,N), (B,1,N,N) per window, or (B,T,N,N) per step.
Var spatial_conv(const Var& x, const Var& a_hat, const Var& ws);

struct TimeEnhancedAttention {
    Var output;  // (B, T, N, d), layer-normed
    Var weights; // (B, N, T, T') attention over history
};

/// Cross-attention from horizon time-embedding queries to historical
/// states; produces every horizon step in one parallel pass.
TimeEnhancedAttention time_enhanced_attention(const Var& h, const Var& tim_future, const Var& w_hist,
                                              const Var& w_tim, const Var& wv, const Var& ln_gamma,
                                              const Var& ln_beta, double dropout_rate, bool train);

/// LN(h + W2 relu(W1 h + b1) + b2) * gamma + beta, inner width 4d.
Var feedforward(const Var& h, const Var& w1, const Var& b1, const Var& w2, const Var& b2,
                const Var& ln_gamma, const Var& ln_beta, double dropout_rate, bool train);

/// Full expert pipeline: `layers` rounds of temporal attention + spatial
/// aggregation (graph resolved by kind), then horizon attention, the
/// feedforward block, and the shared d -> C output head.
ExpertOutput run_expert(Tape& tape, const Bindings& bind, const std::string& prefix, ExpertKind kind,
                        const ExpertInputs& in, const ExpertConfig& cfg);

} // namespace routecast
