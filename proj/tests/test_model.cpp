#include <doctest.h>

#include <cmath>
#include <sstream>

#include "routecast/synthetic.hpp"
#include "routecast/training.hpp"

using namespace routecast;

namespace {

ModelConfig tiny_config(std::vector<ExpertKind> experts, std::size_t n_nodes) {
    ModelConfig cfg;
    cfg.expert.hidden_dim = 8;
    cfg.expert.heads = 2;
    cfg.expert.time_dim = 4;
    cfg.expert.adaptive_dim = 3;
    cfg.expert.edge_hidden = 6;
    cfg.experts = std::move(experts);
    cfg.n_nodes = n_nodes;
    cfg.seed = 5;
    return cfg;
}

TrainConfig tiny_train() {
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.input_steps = 4;
    cfg.horizon = 4;
    cfg.max_epochs = 2;
    cfg.patience = 15;
    cfg.dropout = 0.0;
    cfg.seed = 5;
    return cfg;
}

SyntheticData tiny_data(std::size_t steps = 160) {
    SyntheticConfig cfg;
    cfg.n_nodes = 4;
    cfg.n_steps = steps;
    cfg.steps_per_day = 48;
    cfg.seed = 9;
    return generate_synthetic(cfg);
}

} // namespace

TEST_CASE("model forward shapes and routing wiring") {
    SyntheticData data = tiny_data();
    Model model(tiny_config({ExpertKind::Identity, ExpertKind::Adaptive, ExpertKind::Attention,
                             ExpertKind::SpatioSemantic},
                            4),
                data.graph);
    TrainConfig tc = tiny_train();
    const SplitIndices split = chronological_split(data.series.steps(), tc.input_steps, tc.horizon);
    ZScoreStats stats = zscore_fit(data.series.values);
    Tensor normalized = stats.apply(data.series.values);
    auto starts = window_starts(0, split.train_end, tc.input_steps, tc.horizon);
    starts.resize(6);
    WindowBatch batch = gather_windows(normalized, data.series, starts, tc.input_steps, tc.horizon);

    Tape tape;
    Bindings bind(tape, model.params());
    Model::Forward fwd = model.forward(tape, bind, batch.inputs, batch.taus_hist, batch.taus_fut, false,
                                       0.0, FusionMode::Weighted);
    CHECK(fwd.forecast.shape() == Shape{6, 4, 4, 1});
    CHECK(fwd.expert_forecasts.size() == 4);
    CHECK(fwd.routing.weights.shape() == Shape{6, 4});
    for (std::size_t b = 0; b < 6; ++b) {
        double total = 0.0;
        for (std::size_t m = 0; m < 4; ++m) total += fwd.routing.weights.value()[b * 4 + m];
        CHECK(std::abs(total - 1.0) < 1e-9);
    }

    // loss carries the routing term for multi-expert models
    Model::Loss loss = model.loss(tape, bind, batch.inputs, batch.taus_hist, batch.taus_fut,
                                  batch.targets, false, 0.0);
    CHECK(loss.total.value()[0] > 0.0);
    CHECK(loss.oracle_labels.size() == 6);
    CHECK(loss.total.value()[0] ==
          doctest::Approx(loss.forecast_mae + model.config().lambda_route * loss.route_ce));
}

TEST_CASE("predict is batch-size invariant") {
    SyntheticData data = tiny_data();
    Model model(tiny_config({ExpertKind::Identity, ExpertKind::Adaptive}, 4), data.graph);
    TrainConfig tc = tiny_train();
    ZScoreStats stats = zscore_fit(data.series.values);
    Tensor normalized = stats.apply(data.series.values);
    auto starts = window_starts(0, 100, tc.input_steps, tc.horizon);
    starts.resize(10);
    WindowBatch batch = gather_windows(normalized, data.series, starts, tc.input_steps, tc.horizon);

    Tensor all = model.predict(batch.inputs, batch.taus_hist, batch.taus_fut, FusionMode::Weighted, 10);
    Tensor chunked = model.predict(batch.inputs, batch.taus_hist, batch.taus_fut, FusionMode::Weighted, 3);
    for (std::size_t i = 0; i < all.numel(); ++i) CHECK(all[i] == chunked[i]);
}

TEST_CASE("training runs, improves on the first epochs, and is deterministic") {
    SyntheticData data = tiny_data(400);
    TrainConfig tc = tiny_train();
    tc.max_epochs = 3;

    Model a(tiny_config({ExpertKind::Identity, ExpertKind::Adaptive}, 4), data.graph);
    std::ostringstream log_a;
    TrainResult ra = train(a, data.series, tc, &log_a);
    CHECK(ra.history.size() >= 1);
    CHECK(ra.best_epoch >= 1);
    for (const EpochRecord& rec : ra.history) {
        CHECK(std::isfinite(rec.train_loss));
        CHECK(std::isfinite(rec.val_mae));
    }

    Model b(tiny_config({ExpertKind::Identity, ExpertKind::Adaptive}, 4), data.graph);
    TrainResult rb = train(b, data.series, tc);
    // bit-identical histories given the same seed (wall-clock column aside)
    REQUIRE(ra.history.size() == rb.history.size());
    for (std::size_t i = 0; i < ra.history.size(); ++i) {
        CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
        CHECK(ra.history[i].val_mae == rb.history[i].val_mae);
        CHECK(ra.history[i].val_rmse == rb.history[i].val_rmse);
    }
    // identical parameters after training
    for (std::size_t p = 0; p < a.params().entries().size(); ++p) {
        const auto& [name, ta] = a.params().entries()[p];
        const Tensor& tb = b.params().entries()[p].second;
        for (std::size_t i = 0; i < ta.numel(); ++i) {
            REQUIRE(ta[i] == tb[i]);
        }
    }
}

TEST_CASE("lr = 0 leaves parameters untouched and the history flat") {
    SyntheticData data = tiny_data(300);
    TrainConfig tc = tiny_train();
    tc.lr = 0.0;
    tc.max_epochs = 3;
    Model model(tiny_config({ExpertKind::Identity}, 4), data.graph);
    const ParamStore before = model.params();
    TrainResult res = train(model, data.series, tc);
    for (std::size_t p = 0; p < before.entries().size(); ++p) {
        const Tensor& pre = before.entries()[p].second;
        const Tensor& post = model.params().entries()[p].second;
        for (std::size_t i = 0; i < pre.numel(); ++i) CHECK(pre[i] == post[i]);
    }
    for (const EpochRecord& rec : res.history) {
        CHECK(rec.val_mae == res.history.front().val_mae);
        CHECK(rec.train_loss == res.history.front().train_loss);
    }
}

TEST_CASE("patience 0 stops after the first non-improving epoch") {
    SyntheticData data = tiny_data(300);
    TrainConfig tc = tiny_train();
    tc.lr = 0.0; // validation MAE can never improve after epoch 1
    tc.patience = 0;
    tc.max_epochs = 50;
    Model model(tiny_config({ExpertKind::Identity}, 4), data.graph);
    TrainResult res = train(model, data.series, tc);
    CHECK(res.history.size() == 2); // epoch 1 sets the best, epoch 2 fails to improve
}

TEST_CASE("training aborts on divergence with a diagnostic") {
    SyntheticData data = tiny_data(300);
    TrainConfig tc = tiny_train();
    tc.lr = 1e12; // guaranteed blow-up
    tc.max_epochs = 30;
    Model model(tiny_config({ExpertKind::Identity, ExpertKind::Adaptive}, 4), data.graph);
    CHECK_THROWS_AS(train(model, data.series, tc), NumericError);
}

TEST_CASE("forecasts never depend on steps beyond the window") {
    SyntheticData data = tiny_data(200);
    TrainConfig tc = tiny_train();
    Model model(tiny_config({ExpertKind::Identity, ExpertKind::SpatioSemantic}, 4), data.graph);
    ZScoreStats stats = zscore_fit(data.series.values);
    model.norm_stats() = stats;

    Tensor normalized = stats.apply(data.series.values);
    const std::size_t starts_arr[] = {10, 40};
    WindowBatch batch = gather_windows(normalized, data.series, starts_arr, tc.input_steps, tc.horizon);
    Tensor base = model.predict(batch.inputs, batch.taus_hist, batch.taus_fut, FusionMode::Weighted, 8);

    // perturb the series after the last window's horizon; the gathered
    // windows (and thus the forecasts) must be bit-identical
    Tensor tampered = data.series.values;
    for (std::size_t t = 60; t < 200; ++t) {
        for (std::size_t n = 0; n < 4; ++n) tampered[t * 4 + n] += 123.0;
    }
    TrafficSeries copy = data.series;
    copy.values = tampered;
    Tensor normalized2 = stats.apply(copy.values);
    WindowBatch batch2 = gather_windows(normalized2, copy, starts_arr, tc.input_steps, tc.horizon);
    Tensor again = model.predict(batch2.inputs, batch2.taus_hist, batch2.taus_fut, FusionMode::Weighted, 8);
    for (std::size_t i = 0; i < base.numel(); ++i) CHECK(base[i] == again[i]);
}

TEST_CASE("model config summary and guards") {
    SyntheticData data = tiny_data(100);
    ModelConfig cfg = tiny_config({ExpertKind::Identity, ExpertKind::Identity}, 4);
    CHECK_THROWS_AS(Model(cfg, data.graph), ConfigError);

    ModelConfig ok = tiny_config({ExpertKind::Adaptive, ExpertKind::SpatioSemantic}, 4);
    Model model(ok, data.graph);
    CHECK(model.config().experts_tag() == "Ad+SS");
    CHECK(model.config().summary().find("hidden_dim=8") != std::string::npos);
}
