#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <unordered_map>

#include "routecast/dataset.hpp"
#include "routecast/model.hpp"

namespace routecast {

struct TrainConfig {
    std::size_t batch_size = 64;
    double dropout = 0.2;
    double lr = 0.001;
    std::size_t patience = 15;
    std::size_t max_epochs = 100;
    std::size_t input_steps = 12; // window length
    std::size_t horizon = 12;     // forecast length
    double lambda_route = 0.1;
    FusionMode fusion = FusionMode::Weighted;
    std::uint64_t seed = 1;
    double mape_eps = 1.0;

    void validate() const;
};

/// Step indices of the chronological 70/10/20 split: [0, train_end),
/// [train_end, val_end), [val_end, total).
struct SplitIndices {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    std::size_t total = 0;
};

SplitIndices chronological_split(std::size_t total_steps, std::size_t input_steps, std::size_t horizon,
                                 double train_frac = 0.7, double val_frac = 0.1);

/// Window start offsets inside [begin, end): every w with
/// w + input_steps + horizon <= end. Windows never cross split boundaries.
std::vector<std::size_t> window_starts(std::size_t begin, std::size_t end, std::size_t input_steps,
                                       std::size_t horizon);

struct WindowBatch {
    Tensor inputs;    // (W, T', N, C)
    Tensor targets;   // (W, T, N, C)
    Tensor taus_hist; // (W, T')
    Tensor taus_fut;  // (W, T)
};

/// Gathers the listed windows from a (normalized) value tensor; taus come
/// from the series timestamps.
WindowBatch gather_windows(const Tensor& values, const TrafficSeries& series,
                           std::span<const std::size_t> starts, std::size_t input_steps,
                           std::size_t horizon);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::unordered_map<std::string, std::pair<Tensor, Tensor>> moments; // first, second

    void reset() {
        step = 0;
        moments.clear();
    }
};

/// Single-tensor Adam update with bias correction (used by the full-store
/// step below and directly by tests).
void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::int64_t step, double lr,
                 double beta1, double beta2, double eps);

/// One optimizer step over every parameter in the store.
void adam_step(ParamStore& params, const Bindings& bind, const Gradients& grads, AdamState& state,
               double lr);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_mae = 0.0;
    double val_rmse = 0.0;
    double val_mape = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_mae = 0.0;
};

/// Full protocol: z-score stats from the training split only, chronological
/// windows, MAE (+ routing) loss, Adam, early stopping on validation MAE,
/// and restoration of the best-validation parameters. Deterministic given
/// cfg.seed. Emits one `epoch,train_loss,val_mae,val_rmse,val_mape,seconds`
/// line per epoch to `log` when provided.
TrainResult train(Model& model, const TrafficSeries& series, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

/// Forecast quality on the test split (original units).
MetricsReport evaluate(const Model& model, const TrafficSeries& series, const TrainConfig& cfg,
                       FusionMode mode,
                       std::vector<std::vector<double>>* routing_out = nullptr);

/// Median-of-5 wall-clock (after one warm-up) of a full no-grad forward
/// pass over the given windows.
double measure_inference(const Model& model, const WindowBatch& batch, FusionMode mode,
                         std::size_t batch_size);

} // namespace routecast
