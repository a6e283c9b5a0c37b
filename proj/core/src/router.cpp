#include "routecast/router.hpp"

#include <cmath>

namespace routecast {

std::string to_string(FusionMode mode) { return mode == FusionMode::Weighted ? "weighted" : "top1"; }

FusionMode fusion_mode_from(const std::string& tag) {
    if (tag == "weighted") return FusionMode::Weighted;
    if (tag == "top1") return FusionMode::Top1;
    throw ConfigError("unknown fusion mode `" + tag + "` (expected weighted or top1)");
}

void add_router_params(ParamStore& params, const std::string& prefix, std::size_t n_experts,
                       std::size_t hidden_dim, std::mt19937_64& rng) {
    if (n_experts == 0) throw ConfigError("router needs at least one expert key");
    params.add(prefix + ".keys", glorot_uniform(Shape{n_experts, hidden_dim}, rng));
    params.add(prefix + ".wq", glorot_uniform(Shape{hidden_dim, hidden_dim}, rng));
}

Var memory_query(const Var& x, const Var& wq) {
    if (x.shape().size() != 4) {
        throw ShapeError("memory_query: expected (B,T,N,d), got " + x.value().shape_str());
    }
    Var pooled = mean(mean(x, 1), 1); // (B, d)
    return matmul(pooled, wq);
}

RoutingDecision routing_weights(const Var& q, const Var& keys) {
    if (q.shape().size() != 2 || keys.shape().size() != 2 || q.shape()[1] != keys.shape()[1]) {
        throw ShapeError("routing_weights: query " + q.value().shape_str() + " and keys " +
                         keys.value().shape_str() + " do not conform");
    }
    Var logits = matmul(q, transpose(keys)); // (B, M)
    Var alpha = softmax(logits, 1);

    const std::size_t batch = alpha.shape()[0];
    const std::size_t m = alpha.shape()[1];
    std::vector<std::size_t> chosen(batch, 0);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = alpha.value().data() + b * m;
        std::size_t best = 0;
        for (std::size_t i = 1; i < m; ++i) {
            if (row[i] > row[best]) best = i;
        }
        chosen[b] = best;
    }
    return {alpha, std::move(chosen)};
}

namespace {

Tensor onehot_rows(std::span<const std::size_t> rows, std::size_t m) {
    Tensor t(Shape{rows.size(), m});
    for (std::size_t b = 0; b < rows.size(); ++b) {
        if (rows[b] >= m) throw ConfigError("expert index " + std::to_string(rows[b]) + " out of range");
        t[b * m + rows[b]] = 1.0;
    }
    return t;
}

} // namespace

Var fuse_outputs(const RoutingDecision& decision, std::span<const Var> outputs, FusionMode mode) {
    if (outputs.empty()) throw ConfigError("fuse_outputs: no expert outputs");
    const Shape& os = outputs.front().shape();
    for (const Var& o : outputs) {
        if (o.shape() != os) {
            throw Error("fuse_outputs: expert output shapes differ: " + o.value().shape_str() + " vs " +
                        shape_to_string(os));
        }
    }
    const std::size_t m = outputs.size();
    const Shape& as = decision.weights.shape();
    if (as.size() != 2 || as[1] != m || as[0] != os[0]) {
        throw Error("fuse_outputs: routing weights " + decision.weights.value().shape_str() +
                    " do not match " + std::to_string(m) + " outputs of batch " + std::to_string(os[0]));
    }
    const std::size_t batch = os[0];
    const Shape col_shape{batch, 1, 1, 1};
    Tape* tape = decision.weights.tape();
    if (tape == nullptr) throw Error("fuse_outputs: routing weights are not bound to a tape");

    if (mode == FusionMode::Weighted) {
        Var fused;
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t idx[1] = {i};
            Var coeff = reshape(gather(decision.weights, 1, idx), col_shape);
            Var term = mul(outputs[i], coeff);
            fused = i == 0 ? term : add(fused, term);
        }
        return fused;
    }

    // Top-1: forward the argmax expert's output unchanged; gradient reaches
    // the chosen routing weight through selected / stop_grad(selected).
    Tensor onehot = onehot_rows(decision.chosen, m);
    Var selected = sum(mul(decision.weights, tape->constant(onehot)), 1); // (B,)
    Var ratio = div(selected, tape->constant(selected.value()));          // forward == 1 exactly
    Var fused;
    for (std::size_t i = 0; i < m; ++i) {
        Tensor mask(col_shape);
        for (std::size_t b = 0; b < batch; ++b) mask[b] = decision.chosen[b] == i ? 1.0 : 0.0;
        Var term = mul(outputs[i], tape->constant(std::move(mask)));
        fused = i == 0 ? term : add(fused, term);
    }
    return mul(fused, reshape(ratio, col_shape));
}

std::vector<std::size_t> oracle_expert_labels(std::span<const Var> outputs, const Tensor& target) {
    if (outputs.empty()) throw ConfigError("oracle_expert_labels: no expert outputs");
    const Shape& os = outputs.front().shape();
    if (target.shape() != os) {
        throw Error("oracle_expert_labels: target shape " + target.shape_str() + " does not match outputs " +
                    shape_to_string(os));
    }
    const std::size_t batch = os[0];
    const std::size_t per = target.numel() / batch;
    std::vector<std::size_t> labels(batch, 0);
    for (std::size_t b = 0; b < batch; ++b) {
        double best = 0.0;
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            const double* f = outputs[i].value().data() + b * per;
            const double* y = target.data() + b * per;
            double mae = 0.0;
            for (std::size_t k = 0; k < per; ++k) mae += std::abs(f[k] - y[k]);
            mae /= static_cast<double>(per);
            if (i == 0 || mae < best) {
                best = mae;
                labels[b] = i;
            }
        }
    }
    return labels;
}

Var routing_loss(const RoutingDecision& decision, std::span<const std::size_t> labels) {
    const std::size_t batch = decision.weights.shape()[0];
    const std::size_t m = decision.weights.shape()[1];
    if (labels.size() != batch) {
        throw Error("routing_loss: label count " + std::to_string(labels.size()) + " does not match batch " +
                    std::to_string(batch));
    }
    Tape* tape = decision.weights.tape();
    if (tape == nullptr) throw Error("routing_loss: routing weights are not bound to a tape");
    Tensor onehot = onehot_rows(labels, m);
    Var selected = sum(mul(decision.weights, tape->constant(std::move(onehot))), 1); // (B,)
    Var guarded = add(selected, tape->constant(Tensor::scalar(1e-12)));
    return scale(mean(log(guarded), 0), -1.0);
}

} // namespace routecast
