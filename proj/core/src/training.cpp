#include "routecast/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace routecast {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
    if (lr < 0.0) throw ConfigError("lr must be >= 0");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (input_steps == 0 || horizon == 0) throw ConfigError("input_steps and horizon must be >= 1");
    if (lambda_route < 0.0) throw ConfigError("lambda_route must be >= 0");
    if (mape_eps < 0.0) throw ConfigError("mape_eps must be >= 0");
}

SplitIndices chronological_split(std::size_t total_steps, std::size_t input_steps, std::size_t horizon,
                                 double train_frac, double val_frac) {
    if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0) {
        throw ConfigError("split fractions must satisfy 0 < train, 0 <= val, train + val < 1");
    }
    SplitIndices split;
    split.total = total_steps;
    split.train_end = static_cast<std::size_t>(static_cast<double>(total_steps) * train_frac);
    split.val_end = static_cast<std::size_t>(static_cast<double>(total_steps) * (train_frac + val_frac));
    const std::size_t need = input_steps + horizon;
    if (split.train_end < need || split.val_end - split.train_end < need ||
        split.total - split.val_end < need) {
        throw DataError("series too short for the split: every split needs at least " +
                        std::to_string(need) + " steps (input " + std::to_string(input_steps) +
                        " + horizon " + std::to_string(horizon) + ")");
    }
    return split;
}

std::vector<std::size_t> window_starts(std::size_t begin, std::size_t end, std::size_t input_steps,
                                       std::size_t horizon) {
    std::vector<std::size_t> starts;
    const std::size_t need = input_steps + horizon;
    if (end < begin || end - begin < need) return starts;
    starts.reserve(end - begin - need + 1);
    for (std::size_t w = begin; w + need <= end; ++w) starts.push_back(w);
    return starts;
}

WindowBatch gather_windows(const Tensor& values, const TrafficSeries& series,
                           std::span<const std::size_t> starts, std::size_t input_steps,
                           std::size_t horizon) {
    if (values.rank() != 3) throw ShapeError("gather_windows: expected (S,N,C) values");
    const std::size_t frame = values.extent(1) * values.extent(2);
    const std::size_t count = starts.size();
    WindowBatch batch{
        Tensor(Shape{count, input_steps, values.extent(1), values.extent(2)}),
        Tensor(Shape{count, horizon, values.extent(1), values.extent(2)}),
        Tensor(Shape{count, input_steps}),
        Tensor(Shape{count, horizon}),
    };
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t s = starts[w];
        std::copy_n(values.data() + s * frame, input_steps * frame,
                    batch.inputs.data() + w * input_steps * frame);
        std::copy_n(values.data() + (s + input_steps) * frame, horizon * frame,
                    batch.targets.data() + w * horizon * frame);
        for (std::size_t t = 0; t < input_steps; ++t) {
            batch.taus_hist[w * input_steps + t] = series.tau_of(s + t);
        }
        for (std::size_t t = 0; t < horizon; ++t) {
            batch.taus_fut[w * horizon + t] = series.tau_of(s + input_steps + t);
        }
    }
    return batch;
}

void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::int64_t step, double lr,
                 double beta1, double beta2, double eps) {
    if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v)) {
        throw Error("adam_update: parameter/gradient/state shapes differ");
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void adam_step(ParamStore& params, const Bindings& bind, const Gradients& grads, AdamState& state,
               double lr) {
    ++state.step;
    for (auto& [name, tensor] : params.entries()) {
        const Tensor& grad = grads.at(bind[name]);
        auto it = state.moments.find(name);
        if (it == state.moments.end()) {
            it = state.moments
                     .emplace(name, std::make_pair(Tensor(tensor.shape()), Tensor(tensor.shape())))
                     .first;
        }
        adam_update(tensor, grad, it->second.first, it->second.second, state.step, lr, state.beta1,
                    state.beta2, state.eps);
    }
}

namespace {

WindowBatch slice_batch(const WindowBatch& all, std::span<const std::size_t> order, std::size_t begin,
                        std::size_t count) {
    const std::size_t in_frame = all.inputs.numel() / all.inputs.extent(0);
    const std::size_t out_frame = all.targets.numel() / all.targets.extent(0);
    const std::size_t th = all.taus_hist.extent(1);
    const std::size_t tf = all.taus_fut.extent(1);
    Shape in_shape = all.inputs.shape();
    in_shape[0] = count;
    Shape out_shape = all.targets.shape();
    out_shape[0] = count;
    WindowBatch b{Tensor(in_shape), Tensor(out_shape), Tensor(Shape{count, th}),
                  Tensor(Shape{count, tf})};
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[begin + i];
        std::copy_n(all.inputs.data() + src * in_frame, in_frame, b.inputs.data() + i * in_frame);
        std::copy_n(all.targets.data() + src * out_frame, out_frame, b.targets.data() + i * out_frame);
        std::copy_n(all.taus_hist.data() + src * th, th, b.taus_hist.data() + i * th);
        std::copy_n(all.taus_fut.data() + src * tf, tf, b.taus_fut.data() + i * tf);
    }
    return b;
}

} // namespace

TrainResult train(Model& model, const TrafficSeries& series, const TrainConfig& cfg, std::ostream* log) {
    cfg.validate();
    const SplitIndices split =
        chronological_split(series.steps(), cfg.input_steps, cfg.horizon);

    // normalization stats from the training split only
    const std::size_t frame = series.nodes() * series.channels();
    Tensor train_slice(Shape{split.train_end, series.nodes(), series.channels()},
                       std::vector<double>(series.values.data(),
                                           series.values.data() + split.train_end * frame));
    model.norm_stats() = zscore_fit(train_slice);
    const Tensor normalized = model.norm_stats().apply(series.values);

    const auto train_idx = window_starts(0, split.train_end, cfg.input_steps, cfg.horizon);
    const auto val_idx = window_starts(split.train_end, split.val_end, cfg.input_steps, cfg.horizon);
    WindowBatch train_set = gather_windows(normalized, series, train_idx, cfg.input_steps, cfg.horizon);
    WindowBatch val_set = gather_windows(normalized, series, val_idx, cfg.input_steps, cfg.horizon);

    AdamState adam;
    TrainResult result;
    ParamStore best = model.params();
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t since_best = 0;
    const std::size_t n_train = train_idx.size();
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::mt19937_64 shuffle_rng(cfg.seed * 7919 + epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < n_train; begin += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n_train - begin);
            WindowBatch batch = slice_batch(train_set, order, begin, count);
            Tape tape(cfg.seed ^ (epoch * 1315423911ull) ^ (begin * 2654435761ull));
            Bindings bind(tape, model.params());
            Model::Loss loss = model.loss(tape, bind, batch.inputs, batch.taus_hist, batch.taus_fut,
                                          batch.targets, true, cfg.dropout);
            const double value = loss.total.value()[0];
            if (!std::isfinite(value)) {
                throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
            }
            loss_total += value;
            ++batches;
            Gradients grads = tape.backward(loss.total);
            adam_step(model.params(), bind, grads, adam, cfg.lr);
        }

        // validation in original units
        Tensor val_pred = model.predict(val_set.inputs, val_set.taus_hist, val_set.taus_fut, cfg.fusion,
                                        cfg.batch_size);
        MetricsReport val =
            compute_metrics(val_pred, val_set.targets, &model.norm_stats(), cfg.mape_eps);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = batches > 0 ? loss_total / static_cast<double>(batches) : 0.0;
        rec.val_mae = val.mae;
        rec.val_rmse = val.rmse;
        rec.val_mape = val.mape;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);
        if (log != nullptr) {
            (*log) << rec.epoch << ',' << rec.train_loss << ',' << rec.val_mae << ',' << rec.val_rmse
                   << ',' << rec.val_mape << ',' << rec.seconds << '\n';
        }

        if (val.mae < best_val) {
            best_val = val.mae;
            best_epoch = epoch;
            best = model.params();
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= std::max<std::size_t>(cfg.patience, 1)) break;
        }
    }

    model.params() = best;
    result.best_epoch = best_epoch;
    result.best_val_mae = best_val;
    return result;
}

MetricsReport evaluate(const Model& model, const TrafficSeries& series, const TrainConfig& cfg,
                       FusionMode mode, std::vector<std::vector<double>>* routing_out) {
    if (model.norm_stats().empty()) throw ConfigError("evaluate: model has no normalization stats");
    const SplitIndices split = chronological_split(series.steps(), cfg.input_steps, cfg.horizon);
    const Tensor normalized = model.norm_stats().apply(series.values);
    const auto test_idx = window_starts(split.val_end, split.total, cfg.input_steps, cfg.horizon);
    WindowBatch test_set = gather_windows(normalized, series, test_idx, cfg.input_steps, cfg.horizon);

    Tensor pred = model.predict(test_set.inputs, test_set.taus_hist, test_set.taus_fut, mode,
                                cfg.batch_size, routing_out);
    MetricsReport rep = compute_metrics(pred, test_set.targets, &model.norm_stats(), cfg.mape_eps);
    rep.inference_seconds = measure_inference(model, test_set, mode, cfg.batch_size);
    return rep;
}

double measure_inference(const Model& model, const WindowBatch& batch, FusionMode mode,
                         std::size_t batch_size) {
    std::vector<double> runs;
    for (int r = 0; r < 6; ++r) { // one warm-up + five measured
        const auto t0 = std::chrono::steady_clock::now();
        Tensor pred = model.predict(batch.inputs, batch.taus_hist, batch.taus_fut, mode, batch_size);
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (r > 0) runs.push_back(dt);
        if (!pred.all_finite()) throw NumericError("measure_inference: non-finite forecast");
    }
    std::sort(runs.begin(), runs.end());
    return runs[runs.size() / 2];
}

} // namespace routecast
