#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "routecast/tensor.hpp"

namespace routecast {

/// Per-channel normalization statistics fitted on the training split only.
struct ZScoreStats {
    std::vector<double> mean;
    std::vector<double> std; // floored at 1e-8

    bool empty() const { return mean.empty(); }
    Tensor apply(const Tensor& values) const;
    Tensor invert(const Tensor& values) const;
};

/// Sample standard deviation (n-1 denominator) per trailing channel.
/// `values` is (..., C).
ZScoreStats zscore_fit(const Tensor& values);

struct MetricsReport {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0; // percent
    std::vector<double> mae_step;
    std::vector<double> rmse_step;
    std::vector<double> mape_step;
    bool mape_valid = true;       // false when every entry fell under the mask
    std::size_t mape_masked = 0;  // entries excluded by the |y| >= eps mask
    double inference_seconds = 0.0;
};

/// MAE / RMSE / MAPE over (W, T, N, C) forecasts, reported overall and per
/// horizon step. When `stats` is non-null both tensors are denormalized
/// first; MAPE averages entries with |truth| >= mape_eps and is a percent.
MetricsReport compute_metrics(const Tensor& pred, const Tensor& truth, const ZScoreStats* stats,
                              double mape_eps = 1.0);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0; // two-sided, normal approximation (fine for df >> 30)
};

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

} // namespace routecast
