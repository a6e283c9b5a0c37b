#pragma once

#include <optional>
#include <string>
#include <vector>

#include "routecast/expert.hpp"
#include "routecast/metrics.hpp"
#include "routecast/router.hpp"
#include "routecast/time2vec.hpp"

namespace routecast {

struct ModelConfig {
    ExpertConfig expert;
    std::vector<ExpertKind> experts = {ExpertKind::Identity, ExpertKind::Adaptive,
                                       ExpertKind::Attention, ExpertKind::SpatioSemantic};
    std::size_t n_nodes = 0;
    FusionMode fusion = FusionMode::Weighted;
    double lambda_route = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
    /// Canonical text encoding used for checkpoint compatibility checks.
    std::string summary() const;
    /// Comma-separated expert tags, e.g. "Id+Ad".
    std::string experts_tag() const;
};

/// The routed mixture forecaster: shared time embedding and projection,
/// one expert bundle per active kind, and the memory-query router.
class Model {
public:
    Model(ModelConfig cfg, AdjacencyMatrix static_graph);

    const ModelConfig& config() const { return cfg_; }
    const AdjacencyMatrix& static_graph() const { return graph_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    ZScoreStats& norm_stats() { return stats_; }
    const ZScoreStats& norm_stats() const { return stats_; }

    struct Forward {
        Var forecast;                // (B, T, N, C) normalized units
        RoutingDecision routing;     // weights (B, M)
        std::vector<Var> expert_forecasts;
    };

    /// windows: (B, T', N, C) normalized; taus_hist (B, T'), taus_fut (B, T).
    Forward forward(Tape& tape, const Bindings& bind, const Tensor& windows, const Tensor& taus_hist,
                    const Tensor& taus_fut, bool train, double dropout_rate, FusionMode mode) const;

    struct Loss {
        Var total;
        double forecast_mae = 0.0;
        double route_ce = 0.0;
        std::vector<std::size_t> oracle_labels;
    };

    /// MAE on normalized values plus lambda_route * routing cross-entropy
    /// against the per-window best-expert oracle (skipped for single-expert
    /// models or lambda_route == 0).
    Loss loss(Tape& tape, const Bindings& bind, const Tensor& windows, const Tensor& taus_hist,
              const Tensor& taus_fut, const Tensor& targets, bool train, double dropout_rate) const;

    /// No-grad batched inference; returns the normalized forecast and, when
    /// `routing_out` is non-null, appends per-window routing weights.
    Tensor predict(const Tensor& windows, const Tensor& taus_hist, const Tensor& taus_fut,
                   FusionMode mode, std::size_t batch_size = 64,
                   std::vector<std::vector<double>>* routing_out = nullptr) const;

private:
    ModelConfig cfg_;
    AdjacencyMatrix graph_;
    ParamStore params_;
    ZScoreStats stats_;
};

/// Repeats the last observed frame across the horizon:
/// (W, T', N, C) -> (W, T, N, C).
Tensor persistence_baseline(const Tensor& windows, std::size_t horizon);

} // namespace routecast
