#pragma once

#include <span>
#include <string>
#include <vector>

#include "routecast/autodiff.hpp"
#include "routecast/tensor.hpp"

namespace routecast {

/// Dense nonnegative adjacency over n nodes. Static graphs live here;
/// learned graphs are Vars produced by the builders below.
struct AdjacencyMatrix {
    std::size_t n = 0;
    Tensor weights; // (n, n)
};

struct Edge {
    std::size_t from = 0;
    std::size_t to = 0;
    double weight = 1.0;
};

/// I_n: self-loops only, already row-stochastic.
AdjacencyMatrix identity_graph(std::size_t n);

/// Dense matrix from an edge list; duplicate edges sum their weights and
/// rows without any outgoing mass receive a unit self-loop so that
/// normalization stays defined.
AdjacencyMatrix load_static_graph(std::span<const Edge> edges, std::size_t n);

/// Parse the edge-list text format: one `from,to,weight` triple per line,
/// zero-based indices, `#` comments and blank lines allowed.
std::vector<Edge> parse_edge_list(const std::string& path);

/// weights[i][j] / row_sum(i); all-zero rows get a unit self-loop first.
AdjacencyMatrix row_normalize(const AdjacencyMatrix& a);

/// {0,1} road-link indicator: 1 where the static graph has positive weight.
Tensor link_bits(const AdjacencyMatrix& a);

/// softmax(relu(E1 E2^T)) row-wise; differentiable w.r.t. both embeddings.
Var adaptive_graph(const Var& emb_src, const Var& emb_dst);

/// softmax_row((H Wq)(H Wk)^T / sqrt(dk)); H is (N, d) for one step or
/// (T, N, d) for a per-step stack of graphs.
Var attention_graph(const Var& h, const Var& wq, const Var& wk);

/// Cosine similarity; 0 when either vector is all-zero.
double semantic_similarity(std::span<const double> a, std::span<const double> b);

/// Pairwise cosine similarities of per-node feature vectors:
/// (N, C) -> (N, N) or batched (B, N, C) -> (B, N, N).
Tensor semantic_similarity_matrix(const Tensor& node_features);

/// Shared two-layer MLP edge scorer over [link bit, similarity] pairs.
/// dist_bits is (N, N) binary; sims is (N, N) or batched (B, N, N).
Var hybrid_edge_scores(Tape& tape, const Tensor& dist_bits, const Tensor& sims, const Var& w1,
                       const Var& b1, const Var& w2, const Var& b2);

/// Keep the global top ceil(N^2 * rho) entries of each (N, N) slice;
/// ties at the threshold resolve to the lower flat index.
Tensor topk_mask(const Tensor& scores, double rho);

/// exp() of the kept scores, 0 elsewhere; gradients flow through the kept
/// scores only (the selection itself is not differentiated).
Var topk_sparsify(const Var& scores, double rho);

/// Row-stochastic normalization on the tape; all-zero rows get a constant
/// unit self-loop before dividing.
Var row_normalize(const Var& a);

/// Full hybrid pipeline: edge scores -> top-k sparsify -> row normalize.
Var spatio_semantic_graph(Tape& tape, const Tensor& dist_bits, const Tensor& sims, const Var& w1,
                          const Var& b1, const Var& w2, const Var& b2, double rho);

} // namespace routecast
