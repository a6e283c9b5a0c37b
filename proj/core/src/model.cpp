#include "routecast/model.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace routecast {

void ModelConfig::validate() const {
    if (experts.empty()) throw ConfigError("model needs at least one expert");
    std::set<ExpertKind> seen(experts.begin(), experts.end());
    if (seen.size() != experts.size()) throw ConfigError("duplicate expert kinds in configuration");
    if (n_nodes == 0) throw ConfigError("n_nodes must be set");
    if (expert.hidden_dim == 0 || expert.heads == 0 || expert.hidden_dim % expert.heads != 0) {
        throw ConfigError("hidden_dim must be positive and divisible by heads");
    }
    if (expert.time_dim < 2) throw ConfigError("time_dim must be >= 2");
    if (expert.layers == 0) throw ConfigError("layers must be >= 1");
    if (expert.channels == 0) throw ConfigError("channels must be >= 1");
    if (!(expert.rho > 0.0 && expert.rho <= 1.0)) throw ConfigError("rho must lie in (0,1]");
    if (lambda_route < 0.0) throw ConfigError("lambda_route must be >= 0");
}

std::string ModelConfig::experts_tag() const {
    std::string tag;
    for (std::size_t i = 0; i < experts.size(); ++i) {
        if (i) tag += "+";
        tag += to_string(experts[i]);
    }
    return tag;
}

std::string ModelConfig::summary() const {
    std::ostringstream os;
    os << "experts=" << experts_tag() << ";n_nodes=" << n_nodes << ";hidden_dim=" << expert.hidden_dim
       << ";heads=" << expert.heads << ";time_dim=" << expert.time_dim << ";layers=" << expert.layers
       << ";channels=" << expert.channels << ";adaptive_dim=" << expert.adaptive_dim
       << ";edge_hidden=" << expert.edge_hidden << ";rho=" << expert.rho
       << ";fusion=" << to_string(fusion) << ";lambda_route=" << lambda_route << ";seed=" << seed;
    return os.str();
}

Model::Model(ModelConfig cfg, AdjacencyMatrix static_graph)
    : cfg_(std::move(cfg)), graph_(std::move(static_graph)) {
    cfg_.validate();
    if (graph_.n != cfg_.n_nodes) {
        throw ConfigError("static graph has " + std::to_string(graph_.n) + " nodes, config expects " +
                          std::to_string(cfg_.n_nodes));
    }
    std::mt19937_64 rng(cfg_.seed);
    add_time2vec_params(params_, "tim", cfg_.expert.time_dim, rng);
    params_.add("proj.w", glorot_uniform(Shape{cfg_.expert.channels + cfg_.expert.time_dim,
                                               cfg_.expert.hidden_dim},
                                         rng));
    for (std::size_t i = 0; i < cfg_.experts.size(); ++i) {
        add_expert_params(params_, "e" + std::to_string(i), cfg_.experts[i], cfg_.expert, cfg_.n_nodes,
                          rng);
    }
    add_router_params(params_, "router", cfg_.experts.size(), cfg_.expert.hidden_dim, rng);
}

namespace {

Tensor window_mean_features(const Tensor& windows) {
    // (B, T', N, C) -> per-window per-node mean over time: (B, N, C)
    return mean_axis_raw(windows, 1);
}

} // namespace

Model::Forward Model::forward(Tape& tape, const Bindings& bind, const Tensor& windows,
                              const Tensor& taus_hist, const Tensor& taus_fut, bool train,
                              double dropout_rate, FusionMode mode) const {
    if (windows.rank() != 4) {
        throw ShapeError("model forward: expected windows (B,T',N,C), got " + windows.shape_str());
    }
    Var tim_hist = time2vec(tape, bind["tim.freq"], bind["tim.phase"], taus_hist);
    Var tim_fut = time2vec(tape, bind["tim.freq"], bind["tim.phase"], taus_fut);
    Var xp = embed_input(tape, tape.constant(windows), tim_hist, bind["proj.w"]);

    ExpertInputs in;
    in.xp = xp;
    in.tim_future = tim_fut;
    in.static_graph = &graph_;
    in.window_features = window_mean_features(windows);
    in.train = train;
    in.dropout_rate = dropout_rate;

    Forward fwd;
    fwd.expert_forecasts.reserve(cfg_.experts.size());
    for (std::size_t i = 0; i < cfg_.experts.size(); ++i) {
        ExpertOutput out = run_expert(tape, bind, "e" + std::to_string(i), cfg_.experts[i], in, cfg_.expert);
        fwd.expert_forecasts.push_back(out.forecast);
    }
    Var q = memory_query(xp, bind["router.wq"]);
    fwd.routing = routing_weights(q, bind["router.keys"]);
    fwd.forecast = fuse_outputs(fwd.routing, fwd.expert_forecasts, mode);
    return fwd;
}

Model::Loss Model::loss(Tape& tape, const Bindings& bind, const Tensor& windows, const Tensor& taus_hist,
                        const Tensor& taus_fut, const Tensor& targets, bool train,
                        double dropout_rate) const {
    Forward fwd = forward(tape, bind, windows, taus_hist, taus_fut, train, dropout_rate, cfg_.fusion);
    Var diff = sub(fwd.forecast, tape.constant(targets));
    Var mae = mean_all(add(relu(diff), relu(scale(diff, -1.0))));

    Loss out;
    out.forecast_mae = mae.value()[0];
    if (cfg_.experts.size() > 1 && cfg_.lambda_route > 0.0) {
        out.oracle_labels = oracle_expert_labels(fwd.expert_forecasts, targets);
        Var ce = routing_loss(fwd.routing, out.oracle_labels);
        out.route_ce = ce.value()[0];
        out.total = add(mae, scale(ce, cfg_.lambda_route));
    } else {
        out.total = mae;
    }
    return out;
}

Tensor Model::predict(const Tensor& windows, const Tensor& taus_hist, const Tensor& taus_fut,
                      FusionMode mode, std::size_t batch_size,
                      std::vector<std::vector<double>>* routing_out) const {
    if (windows.rank() != 4) {
        throw ShapeError("predict: expected windows (W,T',N,C), got " + windows.shape_str());
    }
    const std::size_t total = windows.extent(0);
    const std::size_t hist = windows.extent(1);
    const std::size_t nodes = windows.extent(2);
    const std::size_t channels = windows.extent(3);
    const std::size_t horizon = taus_fut.extent(1);
    if (batch_size == 0) batch_size = total;

    Tensor out(Shape{total, horizon, nodes, channels});
    const std::size_t m = cfg_.experts.size();
    for (std::size_t begin = 0; begin < total; begin += batch_size) {
        const std::size_t count = std::min(batch_size, total - begin);
        Tensor batch(Shape{count, hist, nodes, channels});
        std::copy_n(windows.data() + begin * hist * nodes * channels, batch.numel(), batch.data());
        Tensor th(Shape{count, hist});
        std::copy_n(taus_hist.data() + begin * hist, th.numel(), th.data());
        Tensor tf(Shape{count, horizon});
        std::copy_n(taus_fut.data() + begin * horizon, tf.numel(), tf.data());

        Tape tape;
        tape.set_recording(false);
        Bindings bind(tape, params_);
        Forward fwd = forward(tape, bind, batch, th, tf, false, 0.0, mode);
        std::copy_n(fwd.forecast.value().data(), fwd.forecast.numel(),
                    out.data() + begin * horizon * nodes * channels);
        if (routing_out != nullptr) {
            for (std::size_t b = 0; b < count; ++b) {
                const double* row = fwd.routing.weights.value().data() + b * m;
                routing_out->emplace_back(row, row + m);
            }
        }
    }
    return out;
}

Tensor persistence_baseline(const Tensor& windows, std::size_t horizon) {
    if (windows.rank() != 4) {
        throw ShapeError("persistence_baseline: expected (W,T',N,C), got " + windows.shape_str());
    }
    if (horizon == 0) throw ConfigError("persistence_baseline: horizon must be >= 1");
    const std::size_t w = windows.extent(0), hist = windows.extent(1);
    const std::size_t frame = windows.extent(2) * windows.extent(3);
    Tensor out(Shape{w, horizon, windows.extent(2), windows.extent(3)});
    for (std::size_t i = 0; i < w; ++i) {
        const double* last = windows.data() + (i * hist + hist - 1) * frame;
        for (std::size_t h = 0; h < horizon; ++h) {
            std::copy_n(last, frame, out.data() + (i * horizon + h) * frame);
        }
    }
    return out;
}

} // namespace routecast
