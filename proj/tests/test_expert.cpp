#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "routecast/expert.hpp"
#include "routecast/time2vec.hpp"

using namespace routecast;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> uni(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = uni(rng);
    return t;
}

ExpertConfig toy_config() {
    ExpertConfig cfg;
    cfg.hidden_dim = 8;
    cfg.heads = 2;
    cfg.time_dim = 4;
    cfg.layers = 1;
    cfg.channels = 1;
    cfg.adaptive_dim = 3;
    cfg.edge_hidden = 6;
    cfg.rho = 0.7;
    return cfg;
}

struct ToyExpert {
    ParamStore params;
    ExpertConfig cfg = toy_config();
    AdjacencyMatrix road;
    std::size_t batch = 2, hist = 4, horizon = 4, nodes = 3;

    explicit ToyExpert(ExpertKind kind, std::uint64_t seed = 100) {
        std::mt19937_64 rng(seed);
        add_expert_params(params, "e", kind, cfg, nodes, rng);
        const Edge ring[] = {{0, 1, 1.0}, {1, 2, 1.0}, {2, 0, 1.0}};
        road = load_static_graph(ring, nodes);
    }

    ExpertInputs inputs(Tape& tape, std::mt19937_64& rng) const {
        ExpertInputs in;
        in.xp = tape.constant(random_tensor(Shape{batch, hist, nodes, cfg.hidden_dim},
                                            const_cast<std::mt19937_64&>(rng)));
        in.tim_future = tape.constant(random_tensor(Shape{batch, horizon, cfg.time_dim},
                                                    const_cast<std::mt19937_64&>(rng)));
        in.static_graph = &road;
        in.window_features = random_tensor(Shape{batch, nodes, cfg.channels},
                                           const_cast<std::mt19937_64&>(rng));
        return in;
    }
};

} // namespace

TEST_CASE("temporal attention: zero value path reduces to layer norm") {
    std::mt19937_64 rng(1);
    const std::size_t d = 8;
    Tape t;
    Var x = t.constant(random_tensor(Shape{2, 5, 3, d}, rng));
    Var wq = t.constant(random_tensor(Shape{d, d}, rng));
    Var wk = t.constant(random_tensor(Shape{d, d}, rng));
    Var wv = t.constant(Tensor(Shape{d, d})); // zero values
    Var wo = t.constant(random_tensor(Shape{d, d}, rng));
    Var gamma = t.constant(Tensor(Shape{d}, 1.0));
    Var beta = t.constant(Tensor(Shape{d}));

    Var out = temporal_attention(x, wq, wk, wv, wo, gamma, beta, 2, 0.0, false);
    Var expected = layer_norm(x, 3);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        CHECK(out.value()[i] == doctest::Approx(expected.value()[i]).epsilon(1e-12));
    }
}

TEST_CASE("temporal attention: single step attends to itself with weight 1") {
    std::mt19937_64 rng(2);
    const std::size_t d = 6;
    Tape t;
    Tensor x0 = random_tensor(Shape{1, 1, 2, d}, rng);
    Tensor wv0 = random_tensor(Shape{d, d}, rng);
    Tensor wo0 = random_tensor(Shape{d, d}, rng);
    Var x = t.constant(x0);
    Var out = temporal_attention(x, t.constant(random_tensor(Shape{d, d}, rng)),
                                 t.constant(random_tensor(Shape{d, d}, rng)), t.constant(wv0),
                                 t.constant(wo0), t.constant(Tensor(Shape{d}, 1.0)),
                                 t.constant(Tensor(Shape{d})), 3, 0.0, false);
    // softmax over a singleton is 1, so Attn(x) == (x Wv) Wo exactly
    Var expected = layer_norm(add(x, matmul(matmul(x, t.constant(wv0)), t.constant(wo0))), 3);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        CHECK(out.value()[i] == doctest::Approx(expected.value()[i]).epsilon(1e-12));
    }
}

TEST_CASE("temporal attention never mixes across nodes") {
    std::mt19937_64 rng(3);
    const std::size_t d = 8, nodes = 3, steps = 4;
    Tensor base = random_tensor(Shape{1, steps, nodes, d}, rng);
    Tensor perturbed = base;
    // perturb node 2 at every step
    for (std::size_t s = 0; s < steps; ++s) {
        for (std::size_t k = 0; k < d; ++k) perturbed[(s * nodes + 2) * d + k] += 0.7;
    }
    Tensor wq = random_tensor(Shape{d, d}, rng), wk = random_tensor(Shape{d, d}, rng);
    Tensor wv = random_tensor(Shape{d, d}, rng), wo = random_tensor(Shape{d, d}, rng);

    Tape t;
    const auto run = [&](const Tensor& input) {
        return temporal_attention(t.constant(input), t.constant(wq), t.constant(wk), t.constant(wv),
                                  t.constant(wo), t.constant(Tensor(Shape{d}, 1.0)),
                                  t.constant(Tensor(Shape{d})), 2, 0.0, false)
            .value();
    };
    const Tensor a = run(base);
    const Tensor b = run(perturbed);
    for (std::size_t s = 0; s < steps; ++s) {
        for (std::size_t n = 0; n < 2; ++n) { // untouched nodes 0 and 1
            for (std::size_t k = 0; k < d; ++k) {
                CHECK(a[(s * nodes + n) * d + k] == b[(s * nodes + n) * d + k]);
            }
        }
    }
    CHECK_THROWS_AS(temporal_attention(t.constant(base), t.constant(wq), t.constant(wk), t.constant(wv),
                                       t.constant(wo), t.constant(Tensor(Shape{d}, 1.0)),
                                       t.constant(Tensor(Shape{d})), 3, 0.0, false),
                    ConfigError);
}

TEST_CASE("spatial conv identity and averaging graphs") {
    std::mt19937_64 rng(4);
    const std::size_t nodes = 3, d = 4;
    Tensor x0 = random_tensor(Shape{1, 2, nodes, d}, rng);
    Tape t;
    Var x = t.constant(x0);
    Var eye = t.constant(Tensor::identity(nodes));
    Var ws_eye = t.constant(Tensor::identity(d));

    Var out = spatial_conv(x, eye, ws_eye);
    for (std::size_t i = 0; i < x0.numel(); ++i) {
        CHECK(out.value()[i] == doctest::Approx(std::max(0.0, x0[i])));
    }

    Var uniform = t.constant(Tensor(Shape{nodes, nodes}, 1.0 / nodes));
    Var mixed = spatial_conv(x, uniform, ws_eye);
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t k = 0; k < d; ++k) {
            double m = 0.0;
            for (std::size_t n = 0; n < nodes; ++n) m += x0[(s * nodes + n) * d + k];
            m /= nodes;
            for (std::size_t n = 0; n < nodes; ++n) {
                CHECK(mixed.value()[(s * nodes + n) * d + k] == doctest::Approx(std::max(0.0, m)));
            }
        }
    }

    Var bad = t.constant(Tensor::identity(nodes + 1));
    CHECK_THROWS_AS(spatial_conv(x, bad, ws_eye), ShapeError);
}

TEST_CASE("spatial conv gradient w.r.t. the spatial weight") {
    std::mt19937_64 rng(5);
    const std::size_t nodes = 3, d = 4;
    Tensor x0 = random_tensor(Shape{1, 2, nodes, d}, rng);
    Tensor a0 = row_normalize(AdjacencyMatrix{nodes, random_tensor(Shape{nodes, nodes}, rng, 0.0, 1.0)}).weights;
    const double err = finite_difference_check(
        [&](Tape& t, const Var& v) {
            Var out = spatial_conv(t.constant(x0), t.constant(a0), v);
            return mean_all(mul(out, out));
        },
        random_tensor(Shape{d, d}, rng), 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("time-enhanced attention: singleton history gets weight 1") {
    std::mt19937_64 rng(6);
    const std::size_t d = 6, dt = 3, horizon = 4, nodes = 2;
    Tape t;
    Var h = t.constant(random_tensor(Shape{1, 1, nodes, d}, rng));
    Var tim = t.constant(random_tensor(Shape{1, horizon, dt}, rng));
    auto tea = time_enhanced_attention(h, tim, t.constant(random_tensor(Shape{d, d}, rng)),
                                       t.constant(random_tensor(Shape{dt, d}, rng)),
                                       t.constant(random_tensor(Shape{d, d}, rng)),
                                       t.constant(Tensor(Shape{d}, 1.0)), t.constant(Tensor(Shape{d})),
                                       0.0, false);
    for (double w : tea.weights.value().values()) CHECK(w == doctest::Approx(1.0));
}

TEST_CASE("time-enhanced attention: identical queries produce identical horizon rows") {
    std::mt19937_64 rng(7);
    const std::size_t d = 6, dt = 3, nodes = 2, hist = 5;
    Tensor tim(Shape{1, 2, dt});
    for (std::size_t k = 0; k < dt; ++k) {
        tim[k] = 0.3 * static_cast<double>(k) - 0.2;
        tim[dt + k] = tim[k]; // second horizon step identical
    }
    Tape t;
    auto tea = time_enhanced_attention(
        t.constant(random_tensor(Shape{1, hist, nodes, d}, rng)), t.constant(tim),
        t.constant(random_tensor(Shape{d, d}, rng)), t.constant(random_tensor(Shape{dt, d}, rng)),
        t.constant(random_tensor(Shape{d, d}, rng)), t.constant(Tensor(Shape{d}, 1.0)),
        t.constant(Tensor(Shape{d})), 0.0, false);
    const Tensor& out = tea.output.value(); // (1, 2, nodes, d)
    for (std::size_t i = 0; i < nodes * d; ++i) {
        CHECK(out[i] == out[nodes * d + i]);
    }
}

TEST_CASE("time-enhanced attention weights sum to 1 per (future step, node)") {
    std::mt19937_64 rng(8);
    const std::size_t d = 8, dt = 4, nodes = 3, hist = 6, horizon = 5;
    Tape t;
    auto tea = time_enhanced_attention(
        t.constant(random_tensor(Shape{2, hist, nodes, d}, rng)),
        t.constant(random_tensor(Shape{2, horizon, dt}, rng)),
        t.constant(random_tensor(Shape{d, d}, rng)), t.constant(random_tensor(Shape{dt, d}, rng)),
        t.constant(random_tensor(Shape{d, d}, rng)), t.constant(Tensor(Shape{d}, 1.0)),
        t.constant(Tensor(Shape{d})), 0.0, false);
    const Tensor& w = tea.weights.value(); // (B, N, T, T')
    const std::size_t rows = w.numel() / hist;
    for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (std::size_t i = 0; i < hist; ++i) total += w[r * hist + i];
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("feedforward: zero weights reduce to layer norm; shape preserved") {
    std::mt19937_64 rng(9);
    const std::size_t d = 6;
    Tape t;
    Tensor h0 = random_tensor(Shape{2, 3, 2, d}, rng);
    Var h = t.constant(h0);
    Var out = feedforward(h, t.constant(Tensor(Shape{d, 4 * d})), t.constant(Tensor(Shape{4 * d})),
                          t.constant(Tensor(Shape{4 * d, d})), t.constant(Tensor(Shape{d})),
                          t.constant(Tensor(Shape{d}, 1.0)), t.constant(Tensor(Shape{d})), 0.0, false);
    REQUIRE(out.shape() == h0.shape());
    Var expected = layer_norm(h, 3);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        CHECK(out.value()[i] == doctest::Approx(expected.value()[i]).epsilon(1e-12));
    }
}

TEST_CASE("feedforward gradient check") {
    std::mt19937_64 rng(10);
    const std::size_t d = 4;
    Tensor h0 = random_tensor(Shape{1, 2, 2, d}, rng);
    Tensor b1 = random_tensor(Shape{4 * d}, rng);
    Tensor w2 = random_tensor(Shape{4 * d, d}, rng);
    Tensor b2 = random_tensor(Shape{d}, rng);
    const double err = finite_difference_check(
        [&](Tape& t, const Var& v) {
            Var out = feedforward(t.constant(h0), v, t.constant(b1), t.constant(w2), t.constant(b2),
                                  t.constant(Tensor(Shape{d}, 1.0)), t.constant(Tensor(Shape{d})), 0.0,
                                  false);
            return mean_all(mul(out, out));
        },
        random_tensor(Shape{d, 4 * d}, rng), 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("backbone parameter shapes are identical across expert kinds") {
    const ExpertConfig cfg = toy_config();
    std::vector<std::vector<std::pair<std::string, Shape>>> all;
    for (ExpertKind kind : {ExpertKind::Identity, ExpertKind::Adaptive, ExpertKind::Attention,
                            ExpertKind::SpatioSemantic}) {
        std::mt19937_64 rng(55);
        ParamStore params;
        add_expert_params(params, "e", kind, cfg, 3, rng);
        std::vector<std::pair<std::string, Shape>> shapes;
        for (const std::string& name : backbone_param_names("e", cfg)) {
            shapes.emplace_back(name, params.at(name).shape());
        }
        all.push_back(std::move(shapes));
    }
    for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i] == all[0]);
}

TEST_CASE("zeroed spatial weight makes every kind produce identical outputs") {
    // With W_s = 0 the graph cannot influence the pipeline, so all four
    // kinds must agree given identical backbone parameters.
    const ExpertConfig cfg = toy_config();
    std::mt19937_64 data_rng(77);
    std::vector<Tensor> outputs;
    for (ExpertKind kind : {ExpertKind::Identity, ExpertKind::Adaptive, ExpertKind::Attention,
                            ExpertKind::SpatioSemantic}) {
        ToyExpert toy(kind, 200);
        toy.params.at("e.l0.sp.ws") = Tensor(Shape{cfg.hidden_dim, cfg.hidden_dim});
        std::mt19937_64 rng(88);
        Tape t;
        Bindings bind(t, toy.params);
        ExpertInputs in = toy.inputs(t, rng);
        outputs.push_back(run_expert(t, bind, "e", kind, in, cfg).forecast.value());
    }
    for (std::size_t i = 1; i < outputs.size(); ++i) {
        REQUIRE(outputs[i].shape() == outputs[0].shape());
        for (std::size_t k = 0; k < outputs[i].numel(); ++k) {
            CHECK(outputs[i][k] == doctest::Approx(outputs[0][k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("identity expert is permutation invariant") {
    ToyExpert toy(ExpertKind::Identity, 300);
    std::mt19937_64 rng(99);
    Tape t;
    Bindings bind(t, toy.params);
    ExpertInputs in = toy.inputs(t, rng);
    ExpertOutput base = run_expert(t, bind, "e", ExpertKind::Identity, in, toy.cfg);

    const std::vector<std::size_t> perm{2, 0, 1};
    const std::size_t nodes = toy.nodes, d = toy.cfg.hidden_dim, C = toy.cfg.channels;
    Tensor xp = in.xp.value();
    Tensor xp_p(xp.shape());
    const std::size_t frames = xp.numel() / (nodes * d);
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t n = 0; n < nodes; ++n) {
            std::copy_n(xp.data() + (f * nodes + perm[n]) * d, d, xp_p.data() + (f * nodes + n) * d);
        }
    }
    Tensor feats_p(in.window_features.shape());
    for (std::size_t b = 0; b < toy.batch; ++b) {
        for (std::size_t n = 0; n < nodes; ++n) {
            std::copy_n(in.window_features.data() + (b * nodes + perm[n]) * C, C,
                        feats_p.data() + (b * nodes + n) * C);
        }
    }
    ExpertInputs in_p = in;
    in_p.xp = t.constant(xp_p);
    in_p.window_features = feats_p;
    ExpertOutput permuted = run_expert(t, bind, "e", ExpertKind::Identity, in_p, toy.cfg);

    const Tensor& f0 = base.forecast.value();
    const Tensor& f1 = permuted.forecast.value();
    const std::size_t out_frames = f0.numel() / (nodes * C);
    for (std::size_t f = 0; f < out_frames; ++f) {
        for (std::size_t n = 0; n < nodes; ++n) {
            for (std::size_t c = 0; c < C; ++c) {
                CHECK(f1[(f * nodes + n) * C + c] ==
                      doctest::Approx(f0[(f * nodes + perm[n]) * C + c]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("identical parameters produce identical outputs") {
    for (ExpertKind kind : {ExpertKind::Adaptive, ExpertKind::SpatioSemantic}) {
        ToyExpert a(kind, 400), b(kind, 400);
        std::mt19937_64 rng_a(123), rng_b(123);
        Tape ta, tb;
        Bindings bind_a(ta, a.params), bind_b(tb, b.params);
        ExpertInputs ia = a.inputs(ta, rng_a);
        ExpertInputs ib = b.inputs(tb, rng_b);
        const Tensor fa = run_expert(ta, bind_a, "e", kind, ia, a.cfg).forecast.value();
        const Tensor fb = run_expert(tb, bind_b, "e", kind, ib, b.cfg).forecast.value();
        for (std::size_t i = 0; i < fa.numel(); ++i) CHECK(fa[i] == fb[i]);
    }
}

TEST_CASE("spatio-semantic expert with rho=1 matches the dense-graph oracle") {
    ToyExpert toy(ExpertKind::SpatioSemantic, 500);
    toy.cfg.rho = 1.0;
    // all-ones link bits
    toy.road.weights = Tensor(Shape{toy.nodes, toy.nodes}, 1.0);
    std::mt19937_64 rng(7);
    Tape t;
    Bindings bind(t, toy.params);
    ExpertInputs in = toy.inputs(t, rng);

    ExpertOutput out = run_expert(t, bind, "e", ExpertKind::SpatioSemantic, in, toy.cfg);
    CHECK(out.forecast.value().all_finite());

    // oracle: with every edge kept, the graph is exp(scores) row-normalized
    Tensor sims = semantic_similarity_matrix(in.window_features);
    Var scores = hybrid_edge_scores(t, link_bits(toy.road), sims, bind["e.graph.w1"], bind["e.graph.b1"],
                                    bind["e.graph.w2"], bind["e.graph.b2"]);
    const Tensor& s = scores.value(); // (B, N, N)
    Var pipeline = spatio_semantic_graph(t, link_bits(toy.road), sims, bind["e.graph.w1"],
                                         bind["e.graph.b1"], bind["e.graph.w2"], bind["e.graph.b2"], 1.0);
    const std::size_t n = toy.nodes;
    for (std::size_t b = 0; b < toy.batch; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            double denom = 0.0;
            for (std::size_t j = 0; j < n; ++j) denom += std::exp(s[(b * n + i) * n + j]);
            for (std::size_t j = 0; j < n; ++j) {
                const double expect = std::exp(s[(b * n + i) * n + j]) / denom;
                CHECK(pipeline.value()[(b * n + i) * n + j] == doctest::Approx(expect).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("missing static graph for the spatio-semantic kind is a configuration error") {
    ToyExpert toy(ExpertKind::SpatioSemantic, 600);
    std::mt19937_64 rng(1);
    Tape t;
    Bindings bind(t, toy.params);
    ExpertInputs in = toy.inputs(t, rng);
    in.static_graph = nullptr;
    CHECK_THROWS_AS(run_expert(t, bind, "e", ExpertKind::SpatioSemantic, in, toy.cfg), ConfigError);
}

TEST_CASE("end-to-end expert gradient passes the oracle at toy size") {
    // MAE loss through a full expert, checked for one parameter per block.
    for (ExpertKind kind : {ExpertKind::Adaptive, ExpertKind::SpatioSemantic}) {
        ToyExpert toy(kind, 700);
        std::mt19937_64 rng(11);
        Tape setup;
        ExpertInputs proto = toy.inputs(setup, rng);
        const Tensor xp = proto.xp.value();
        const Tensor tim = proto.tim_future.value();
        const Tensor target = random_tensor(Shape{toy.batch, toy.horizon, toy.nodes, toy.cfg.channels}, rng);

        const auto loss_for = [&](Tape& t, const Bindings& bind) {
            ExpertInputs in;
            in.xp = t.constant(xp);
            in.tim_future = t.constant(tim);
            in.static_graph = &toy.road;
            in.window_features = proto.window_features;
            ExpertOutput out = run_expert(t, bind, "e", kind, in, toy.cfg);
            Var diff = sub(out.forecast, t.constant(target));
            return mean_all(add(relu(diff), relu(scale(diff, -1.0))));
        };

        std::vector<std::string> focus = {"e.l0.ta.wq", "e.l0.sp.ws", "e.tea.w_tim", "e.ffn.w1", "e.out.w"};
        focus.push_back(kind == ExpertKind::Adaptive ? "e.graph.e1" : "e.graph.w1");
        for (const std::string& name : focus) {
            INFO("parameter: " << name);
            const double err = finite_difference_check(
                [&](Tape& t, const Var& v) {
                    Bindings bind(t, toy.params, name, v);
                    return loss_for(t, bind);
                },
                toy.params.at(name), 1e-5);
            CHECK(err < 1e-4);
        }
    }
}
