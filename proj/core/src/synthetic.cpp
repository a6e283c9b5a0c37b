#include "routecast/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace routecast {

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_nodes < 2) throw ConfigError("generate_synthetic: need at least 2 nodes");
    if (cfg.n_steps == 0) throw ConfigError("generate_synthetic: need at least 1 step");
    const std::size_t n = cfg.n_nodes;
    const std::size_t steps = cfg.n_steps;

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SyntheticData out;
    out.incident_step.assign(steps, 0);

    // ring road: i <-> i+1 (mod n), both directions
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        edges.push_back(Edge{i, (i + 1) % n, 1.0});
        edges.push_back(Edge{(i + 1) % n, i, 1.0});
    }
    out.graph = load_static_graph(edges, n);

    Tensor values(Shape{steps, n, 1});
    std::vector<double> anomaly(n, 0.0), prev_anomaly(n, 0.0);
    std::vector<double> incident_age(n, -1.0); // < 0: no active incident
    // an incident stays "active" until its effect decays below one unit
    const double active_span = cfg.incident_recovery * std::log(std::max(cfg.incident_drop, 1.0));
    const double two_pi = 2.0 * std::numbers::pi;

    for (std::size_t t = 0; t < steps; ++t) {
        bool any_active = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (incident_age[i] >= 0.0) {
                incident_age[i] += 1.0;
                if (incident_age[i] > active_span) incident_age[i] = -1.0;
            }
            if (incident_age[i] < 0.0 && uni(rng) < cfg.incident_rate) incident_age[i] = 0.0;
            if (incident_age[i] >= 0.0) any_active = true;
        }
        out.incident_step[t] = any_active ? 1 : 0;

        for (std::size_t i = 0; i < n; ++i) {
            const double phase = two_pi * static_cast<double>(i) / static_cast<double>(n);
            const double seasonal =
                cfg.base_level +
                cfg.daily_amplitude *
                    std::sin(two_pi * static_cast<double>(t) / static_cast<double>(cfg.steps_per_day) + phase);
            const double left = prev_anomaly[(i + n - 1) % n];
            const double right = prev_anomaly[(i + 1) % n];
            double a = cfg.coupling * 0.5 * (left + right);
            if (incident_age[i] >= 0.0) {
                a -= cfg.incident_drop * std::exp(-incident_age[i] / cfg.incident_recovery);
            }
            a += cfg.noise_std * gauss(rng);
            anomaly[i] = a;
            values[(t * n + i)] = seasonal + a;
        }
        prev_anomaly = anomaly;
    }

    out.series.values = std::move(values);
    out.series.timestamps.resize(steps);
    const std::int64_t interval = static_cast<std::int64_t>(86400 / cfg.steps_per_day);
    for (std::size_t t = 0; t < steps; ++t) {
        out.series.timestamps[t] = 1600000000 + static_cast<std::int64_t>(t) * interval;
    }
    out.series.sensor_ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.series.sensor_ids[i] = "s" + std::to_string(i);
    return out;
}

std::vector<char> window_regime_labels(const SyntheticData& data, std::span<const std::size_t> starts,
                                       std::size_t input_steps) {
    std::vector<char> labels(starts.size(), 0);
    for (std::size_t w = 0; w < starts.size(); ++w) {
        for (std::size_t t = starts[w]; t < starts[w] + input_steps && t < data.incident_step.size(); ++t) {
            if (data.incident_step[t]) {
                labels[w] = 1;
                break;
            }
        }
    }
    return labels;
}

} // namespace routecast
