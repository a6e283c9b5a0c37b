#include "routecast/expert.hpp"

#include <cmath>
#include <vector>

namespace routecast {

std::string to_string(ExpertKind kind) {
    switch (kind) {
        case ExpertKind::Identity: return "Id";
        case ExpertKind::Adaptive: return "Ad";
        case ExpertKind::Attention: return "At";
        case ExpertKind::SpatioSemantic: return "SS";
    }
    return "?";
}

ExpertKind expert_kind_from(const std::string& tag) {
    if (tag == "Id") return ExpertKind::Identity;
    if (tag == "Ad") return ExpertKind::Adaptive;
    if (tag == "At") return ExpertKind::Attention;
    if (tag == "SS") return ExpertKind::SpatioSemantic;
    throw ConfigError("unknown expert tag `" + tag + "` (expected Id, Ad, At or SS)");
}

std::vector<std::string> backbone_param_names(const std::string& prefix, const ExpertConfig& cfg) {
    std::vector<std::string> names;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        for (const char* s : {".ta.wq", ".ta.wk", ".ta.wv", ".ta.wo", ".ta.ln_g", ".ta.ln_b",
                              ".sp.ws", ".sp.ln_g", ".sp.ln_b"}) {
            names.push_back(lp + s);
        }
    }
    for (const char* s : {".tea.w_hist", ".tea.w_tim", ".tea.wv", ".tea.ln_g", ".tea.ln_b",
                          ".ffn.w1", ".ffn.b1", ".ffn.w2", ".ffn.b2", ".ffn.ln_g", ".ffn.ln_b",
                          ".out.w", ".out.b"}) {
        names.push_back(prefix + s);
    }
    return names;
}

void add_expert_params(ParamStore& params, const std::string& prefix, ExpertKind kind,
                       const ExpertConfig& cfg, std::size_t n_nodes, std::mt19937_64& rng) {
    const std::size_t d = cfg.hidden_dim;
    if (cfg.heads == 0 || d % cfg.heads != 0) {
        throw ConfigError("hidden_dim " + std::to_string(d) + " is not divisible by heads " +
                          std::to_string(cfg.heads));
    }
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        for (const char* s : {".ta.wq", ".ta.wk", ".ta.wv", ".ta.wo"}) {
            params.add(lp + s, glorot_uniform(Shape{d, d}, rng));
        }
        params.add(lp + ".ta.ln_g", Tensor(Shape{d}, 1.0));
        params.add(lp + ".ta.ln_b", Tensor(Shape{d}));
        params.add(lp + ".sp.ws", glorot_uniform(Shape{d, d}, rng));
        params.add(lp + ".sp.ln_g", Tensor(Shape{d}, 1.0));
        params.add(lp + ".sp.ln_b", Tensor(Shape{d}));
    }
    params.add(prefix + ".tea.w_hist", glorot_uniform(Shape{d, d}, rng));
    params.add(prefix + ".tea.w_tim", glorot_uniform(Shape{cfg.time_dim, d}, rng));
    params.add(prefix + ".tea.wv", glorot_uniform(Shape{d, d}, rng));
    params.add(prefix + ".tea.ln_g", Tensor(Shape{d}, 1.0));
    params.add(prefix + ".tea.ln_b", Tensor(Shape{d}));
    params.add(prefix + ".ffn.w1", glorot_uniform(Shape{d, 4 * d}, rng));
    params.add(prefix + ".ffn.b1", Tensor(Shape{4 * d}));
    params.add(prefix + ".ffn.w2", glorot_uniform(Shape{4 * d, d}, rng));
    params.add(prefix + ".ffn.b2", Tensor(Shape{d}));
    params.add(prefix + ".ffn.ln_g", Tensor(Shape{d}, 1.0));
    params.add(prefix + ".ffn.ln_b", Tensor(Shape{d}));
    params.add(prefix + ".out.w", glorot_uniform(Shape{d, cfg.channels}, rng));
    params.add(prefix + ".out.b", Tensor(Shape{cfg.channels}));

    switch (kind) {
        case ExpertKind::Identity:
            break;
        case ExpertKind::Adaptive:
            params.add(prefix + ".graph.e1", glorot_uniform(Shape{n_nodes, cfg.adaptive_dim}, rng));
            params.add(prefix + ".graph.e2", glorot_uniform(Shape{n_nodes, cfg.adaptive_dim}, rng));
            break;
        case ExpertKind::Attention:
            params.add(prefix + ".graph.wq", glorot_uniform(Shape{d, d}, rng));
            params.add(prefix + ".graph.wk", glorot_uniform(Shape{d, d}, rng));
            break;
        case ExpertKind::SpatioSemantic:
            params.add(prefix + ".graph.w1", glorot_uniform(Shape{2, cfg.edge_hidden}, rng));
            params.add(prefix + ".graph.b1", Tensor(Shape{cfg.edge_hidden}));
            params.add(prefix + ".graph.w2", glorot_uniform(Shape{cfg.edge_hidden, 1}, rng));
            params.add(prefix + ".graph.b2", Tensor(Shape{1}));
            break;
    }
}

namespace {

Var apply_ln(const Var& x, const Var& gamma, const Var& beta) {
    return add(mul(layer_norm(x, x.shape().size() - 1), gamma), beta);
}

} // namespace

Var temporal_attention(const Var& x, const Var& wq, const Var& wk, const Var& wv, const Var& wo,
                       const Var& ln_gamma, const Var& ln_beta, std::size_t heads,
                       double dropout_rate, bool train) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw ShapeError("temporal_attention: expected (B,T,N,d), got " + x.value().shape_str());
    const std::size_t batch = s[0], steps = s[1], nodes = s[2], d = s[3];
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("temporal_attention: heads " + std::to_string(heads) + " must divide d " +
                          std::to_string(d));
    }
    const std::size_t dk = d / heads;

    Var xt = transpose(x, std::vector<std::size_t>{0, 2, 1, 3}); // (B,N,T,d)
    const auto split_heads = [&](const Var& v) {
        Var r = reshape(v, Shape{batch, nodes, steps, heads, dk});
        return transpose(r, std::vector<std::size_t>{0, 1, 3, 2, 4}); // (B,N,h,T,dk)
    };
    Var q = split_heads(matmul(xt, wq));
    Var k = split_heads(matmul(xt, wk));
    Var v = split_heads(matmul(xt, wv));

    Var kt = transpose(k, std::vector<std::size_t>{0, 1, 2, 4, 3}); // (B,N,h,dk,T)
    Var scores = scale(matmul(q, kt), 1.0 / std::sqrt(static_cast<double>(dk)));
    Var probs = softmax(scores, 4); // over the time axis
    Var mixed = matmul(probs, v);   // (B,N,h,T,dk)
    Var merged = reshape(transpose(mixed, std::vector<std::size_t>{0, 1, 3, 2, 4}),
                         Shape{batch, nodes, steps, d});
    Var out = matmul(merged, wo);
    out = transpose(out, std::vector<std::size_t>{0, 2, 1, 3}); // (B,T,N,d)
    out = dropout(out, dropout_rate, train);
    return apply_ln(add(x, out), ln_gamma, ln_beta);
}

Var spatial_conv(const Var& x, const Var& a_hat, const Var& ws) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw ShapeError("spatial_conv: expected (B,T,N,d), got " + x.value().shape_str());
    const std::size_t nodes = s[2];
    const Shape& as = a_hat.shape();
    if (as[as.size() - 1] != nodes || as[as.size() - 2] != nodes) {
        throw ShapeError("spatial_conv: adjacency " + a_hat.value().shape_str() + " does not match N=" +
                         std::to_string(nodes));
    }
    return relu(matmul(matmul(a_hat, x), ws));
}

TimeEnhancedAttention time_enhanced_attention(const Var& h, const Var& tim_future, const Var& w_hist,
                                              const Var& w_tim, const Var& wv, const Var& ln_gamma,
                                              const Var& ln_beta, double dropout_rate, bool train) {
    const Shape& s = h.shape();
    if (s.size() != 4) {
        throw ShapeError("time_enhanced_attention: expected history (B,T',N,d), got " + h.value().shape_str());
    }
    const std::size_t batch = s[0], horizon = tim_future.shape()[tim_future.shape().size() - 2];
    const std::size_t d = s[3];

    Var ht = transpose(h, std::vector<std::size_t>{0, 2, 1, 3}); // (B,N,T',d)
    Var keys = matmul(ht, w_hist);                               // (B,N,T',d)
    Var vals = matmul(ht, wv);
    Var queries = matmul(tim_future, w_tim); // (B,T,d)
    queries = reshape(queries, Shape{batch, 1, horizon, d});

    Var kt = transpose(keys, std::vector<std::size_t>{0, 1, 3, 2}); // (B,N,d,T')
    Var scores = scale(matmul(queries, kt), 1.0 / std::sqrt(static_cast<double>(d)));
    Var weights = softmax(scores, 3); // over history
    Var mixed = matmul(weights, vals);                                   // (B,N,T,d)
    Var out = transpose(mixed, std::vector<std::size_t>{0, 2, 1, 3});    // (B,T,N,d)
    out = dropout(out, dropout_rate, train);
    return {apply_ln(out, ln_gamma, ln_beta), weights};
}

Var feedforward(const Var& h, const Var& w1, const Var& b1, const Var& w2, const Var& b2,
                const Var& ln_gamma, const Var& ln_beta, double dropout_rate, bool train) {
    Var inner = relu(affine(h, w1, b1));
    inner = dropout(inner, dropout_rate, train);
    Var out = affine(inner, w2, b2);
    return apply_ln(add(h, out), ln_gamma, ln_beta);
}

namespace {

Var graph_for(Tape& tape, const Bindings& bind, const std::string& prefix, ExpertKind kind,
              const ExpertInputs& in, const ExpertConfig& cfg, const Var& h) {
    const std::size_t nodes = h.shape()[2];
    switch (kind) {
        case ExpertKind::Identity:
            return tape.constant(Tensor::identity(nodes));
        case ExpertKind::Adaptive:
            return adaptive_graph(bind[prefix + ".graph.e1"], bind[prefix + ".graph.e2"]);
        case ExpertKind::Attention:
            // per-step graphs from the current hidden states: (B,T,N,N)
            return attention_graph(h, bind[prefix + ".graph.wq"], bind[prefix + ".graph.wk"]);
        case ExpertKind::SpatioSemantic: {
            if (in.static_graph == nullptr) {
                throw ConfigError("SpatioSemantic expert requires a static road graph");
            }
            Tensor sims = semantic_similarity_matrix(in.window_features); // (B,N,N)
            Var a_hat = spatio_semantic_graph(tape, link_bits(*in.static_graph), sims,
                                              bind[prefix + ".graph.w1"], bind[prefix + ".graph.b1"],
                                              bind[prefix + ".graph.w2"], bind[prefix + ".graph.b2"],
                                              cfg.rho); // (B,N,N)
            const std::size_t batch = a_hat.shape()[0];
            return reshape(a_hat, Shape{batch, 1, nodes, nodes});
        }
    }
    throw ConfigError("unknown expert kind");
}

} // namespace

ExpertOutput run_expert(Tape& tape, const Bindings& bind, const std::string& prefix, ExpertKind kind,
                        const ExpertInputs& in, const ExpertConfig& cfg) {
    Var h = in.xp;
    if (h.shape().size() != 4) {
        throw ShapeError("run_expert: expected embedded input (B,T',N,d), got " + h.value().shape_str());
    }
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        h = temporal_attention(h, bind[lp + ".ta.wq"], bind[lp + ".ta.wk"], bind[lp + ".ta.wv"],
                               bind[lp + ".ta.wo"], bind[lp + ".ta.ln_g"], bind[lp + ".ta.ln_b"],
                               cfg.heads, in.dropout_rate, in.train);
        Var a_hat = graph_for(tape, bind, prefix, kind, in, cfg, h);
        Var spatial = spatial_conv(h, a_hat, bind[lp + ".sp.ws"]);
        spatial = dropout(spatial, in.dropout_rate, in.train);
        h = apply_ln(add(h, spatial), bind[lp + ".sp.ln_g"], bind[lp + ".sp.ln_b"]);
    }
    TimeEnhancedAttention tea =
        time_enhanced_attention(h, in.tim_future, bind[prefix + ".tea.w_hist"], bind[prefix + ".tea.w_tim"],
                                bind[prefix + ".tea.wv"], bind[prefix + ".tea.ln_g"],
                                bind[prefix + ".tea.ln_b"], in.dropout_rate, in.train);
    Var hidden = feedforward(tea.output, bind[prefix + ".ffn.w1"], bind[prefix + ".ffn.b1"],
                             bind[prefix + ".ffn.w2"], bind[prefix + ".ffn.b2"], bind[prefix + ".ffn.ln_g"],
                             bind[prefix + ".ffn.ln_b"], in.dropout_rate, in.train);
    Var forecast = affine(hidden, bind[prefix + ".out.w"], bind[prefix + ".out.b"]);
    return {forecast, hidden};
}

} // namespace routecast
