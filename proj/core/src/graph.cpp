#include "routecast/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace routecast {

AdjacencyMatrix identity_graph(std::size_t n) {
    if (n == 0) throw ConfigError("identity_graph: node count must be >= 1");
    return AdjacencyMatrix{n, Tensor::identity(n)};
}

AdjacencyMatrix load_static_graph(std::span<const Edge> edges, std::size_t n) {
    if (n == 0) throw ConfigError("load_static_graph: node count must be >= 1");
    Tensor w(Shape{n, n});
    std::size_t ordinal = 0;
    for (const Edge& e : edges) {
        ++ordinal;
        if (e.from >= n || e.to >= n) {
            throw DataError("edge " + std::to_string(ordinal) + ": node index (" + std::to_string(e.from) +
                            "," + std::to_string(e.to) + ") out of range for n=" + std::to_string(n));
        }
        if (e.weight < 0.0) {
            throw DataError("edge " + std::to_string(ordinal) + ": negative weight");
        }
        w[e.from * n + e.to] += e.weight; // duplicates merge additively
    }
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += w[i * n + j];
        if (row == 0.0) w[i * n + i] = 1.0; // isolated row: self-loop
    }
    return AdjacencyMatrix{n, std::move(w)};
}

std::vector<Edge> parse_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open edge list: " + path);
    std::vector<Edge> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        const auto begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        const auto end = line.find_last_not_of(" \t\r");
        std::istringstream ss(line.substr(begin, end - begin + 1));
        std::string f, t, w;
        if (!std::getline(ss, f, ',') || !std::getline(ss, t, ',') || !std::getline(ss, w)) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected `from,to,weight`");
        }
        try {
            long long from = std::stoll(f);
            long long to = std::stoll(t);
            double weight = std::stod(w);
            if (from < 0 || to < 0) throw std::invalid_argument("negative");
            edges.push_back(Edge{static_cast<std::size_t>(from), static_cast<std::size_t>(to), weight});
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(lineno) + ": malformed edge `" + line + "`");
        }
    }
    return edges;
}

AdjacencyMatrix row_normalize(const AdjacencyMatrix& a) {
    const std::size_t n = a.n;
    Tensor w = a.weights;
    for (double v : w.values()) {
        if (v < 0.0) throw NumericError("row_normalize: negative entry");
    }
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += w[i * n + j];
        if (row == 0.0) {
            w[i * n + i] = 1.0;
            row = 1.0;
        }
        const double inv = 1.0 / row;
        for (std::size_t j = 0; j < n; ++j) w[i * n + j] *= inv;
    }
    return AdjacencyMatrix{n, std::move(w)};
}

Tensor link_bits(const AdjacencyMatrix& a) {
    Tensor bits(a.weights.shape());
    for (std::size_t i = 0; i < bits.numel(); ++i) bits[i] = a.weights[i] > 0.0 ? 1.0 : 0.0;
    return bits;
}

Var adaptive_graph(const Var& emb_src, const Var& emb_dst) {
    if (!emb_src.value().all_finite() || !emb_dst.value().all_finite()) {
        throw NumericError("adaptive_graph: embeddings must be finite");
    }
    Var logits = relu(matmul(emb_src, transpose(emb_dst)));
    return softmax(logits, logits.shape().size() - 1);
}

Var attention_graph(const Var& h, const Var& wq, const Var& wk) {
    const std::size_t rank = h.shape().size();
    if (rank < 2) {
        throw ShapeError("attention_graph: node states must be (..., N, d), got " + h.value().shape_str());
    }
    Var q = matmul(h, wq);
    Var k = matmul(h, wk);
    const double dk = static_cast<double>(wq.shape().back());
    std::vector<std::size_t> perm(rank);
    for (std::size_t i = 0; i < rank; ++i) perm[i] = i;
    std::swap(perm[rank - 1], perm[rank - 2]);
    Var scores = scale(matmul(q, transpose(k, perm)), 1.0 / std::sqrt(dk));
    return softmax(scores, rank - 1);
}

double semantic_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("semantic_similarity: vector lengths differ (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

Tensor semantic_similarity_matrix(const Tensor& node_features) {
    const std::size_t rank = node_features.rank();
    if (rank != 2 && rank != 3) {
        throw ShapeError("semantic_similarity_matrix: expected (N,C) or (B,N,C), got " +
                         node_features.shape_str());
    }
    const std::size_t batch = rank == 3 ? node_features.extent(0) : 1;
    const std::size_t n = node_features.extent(rank - 2);
    const std::size_t c = node_features.extent(rank - 1);
    Shape out_shape = rank == 3 ? Shape{batch, n, n} : Shape{n, n};
    Tensor out(out_shape);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* base = node_features.data() + b * n * c;
        double* po = out.data() + b * n * n;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                const double s = semantic_similarity({base + i * c, c}, {base + j * c, c});
                po[i * n + j] = s;
                po[j * n + i] = s;
            }
        }
    }
    return out;
}

Var hybrid_edge_scores(Tape& tape, const Tensor& dist_bits, const Tensor& sims, const Var& w1,
                       const Var& b1, const Var& w2, const Var& b2) {
    if (dist_bits.rank() != 2 || dist_bits.extent(0) != dist_bits.extent(1)) {
        throw ShapeError("hybrid_edge_scores: dist_bits must be square, got " + dist_bits.shape_str());
    }
    for (double v : dist_bits.values()) {
        if (v != 0.0 && v != 1.0) throw DataError("hybrid_edge_scores: non-binary distance entry");
    }
    const std::size_t n = dist_bits.extent(0);
    const bool batched = sims.rank() == 3;
    if ((batched && (sims.extent(1) != n || sims.extent(2) != n)) ||
        (!batched && !(sims.rank() == 2 && sims.extent(0) == n && sims.extent(1) == n))) {
        throw ShapeError("hybrid_edge_scores: sims shape " + sims.shape_str() + " does not match n=" +
                         std::to_string(n));
    }
    if (!sims.all_finite()) throw NumericError("hybrid_edge_scores: non-finite similarity");

    const std::size_t batch = batched ? sims.extent(0) : 1;
    Tensor pairs(Shape{batch * n * n, 2});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t e = 0; e < n * n; ++e) {
            pairs[(b * n * n + e) * 2 + 0] = dist_bits[e];
            pairs[(b * n * n + e) * 2 + 1] = sims[b * n * n + e];
        }
    }
    Var hidden = relu(add(matmul(tape.constant(std::move(pairs)), w1), b1));
    Var scores = add(matmul(hidden, w2), b2); // (batch*n*n, 1)
    return reshape(scores, batched ? Shape{batch, n, n} : Shape{n, n});
}

Tensor topk_mask(const Tensor& scores, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) {
        throw ConfigError("topk: rho must lie in (0,1], got " + std::to_string(rho));
    }
    const std::size_t rank = scores.rank();
    if (rank < 2 || scores.extent(rank - 1) != scores.extent(rank - 2)) {
        throw ShapeError("topk: expected (..., N, N) scores, got " + scores.shape_str());
    }
    const std::size_t n = scores.extent(rank - 1);
    const std::size_t slice = n * n;
    const std::size_t batches = scores.numel() / slice;
    const std::size_t k = static_cast<std::size_t>(std::ceil(static_cast<double>(slice) * rho));

    Tensor mask(scores.shape());
    std::vector<std::size_t> order(slice);
    for (std::size_t b = 0; b < batches; ++b) {
        const double* s = scores.data() + b * slice;
        double* m = mask.data() + b * slice;
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(),
                         [s](std::size_t a, std::size_t c) { return s[a] > s[c] || (s[a] == s[c] && a < c); });
        for (std::size_t i = 0; i < k; ++i) m[order[i]] = 1.0;
    }
    return mask;
}

Var topk_sparsify(const Var& scores, double rho) {
    Tensor mask = topk_mask(scores.value(), rho);
    Tape* tape = scores.tape();
    Var mask_const = tape ? tape->constant(std::move(mask)) : Var();
    if (!tape) throw Error("topk_sparsify: scores are not bound to a tape");
    return mul(exp(scores), mask_const);
}

Var row_normalize(const Var& a) {
    const Shape& shape = a.shape();
    const std::size_t rank = shape.size();
    if (rank < 2 || shape[rank - 1] != shape[rank - 2]) {
        throw ShapeError("row_normalize: expected (..., N, N), got " + a.value().shape_str());
    }
    for (double v : a.value().values()) {
        if (v < 0.0) throw NumericError("row_normalize: negative entry");
    }
    const std::size_t n = shape[rank - 1];
    const std::size_t slice = n * n;
    const std::size_t batches = a.numel() / slice;

    // Unit self-loops on all-zero rows, injected as a constant.
    Tensor fix(shape);
    bool any_fix = false;
    for (std::size_t b = 0; b < batches; ++b) {
        const double* v = a.value().data() + b * slice;
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += v[i * n + j];
            if (row == 0.0) {
                fix.data()[b * slice + i * n + i] = 1.0;
                any_fix = true;
            }
        }
    }
    Tape* tape = a.tape();
    if (!tape) throw Error("row_normalize: input is not bound to a tape");
    Var patched = any_fix ? add(a, tape->constant(std::move(fix))) : a;

    Var sums = sum(patched, rank - 1); // (..., N)
    Shape keep = shape;
    keep[rank - 1] = 1;
    return div(patched, reshape(sums, keep));
}

Var spatio_semantic_graph(Tape& tape, const Tensor& dist_bits, const Tensor& sims, const Var& w1,
                          const Var& b1, const Var& w2, const Var& b2, double rho) {
    Var scores = hybrid_edge_scores(tape, dist_bits, sims, w1, b1, w2, b2);
    return row_normalize(topk_sparsify(scores, rho));
}

} // namespace routecast
