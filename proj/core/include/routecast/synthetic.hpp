#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "routecast/dataset.hpp"

namespace routecast {

/// Desk-scale traffic stand-in: a ring road whose per-node signal is a
/// daily sinusoid plus a neighbor-coupled diffusion term, seeded incident
/// drops with exponential recovery, and Gaussian noise.
struct SyntheticConfig {
    std::size_t n_nodes = 20;
    std::size_t n_steps = 5000;
    std::uint64_t seed = 1;
    std::size_t steps_per_day = 288; // 5-minute cadence
    double base_level = 60.0;
    double daily_amplitude = 10.0;
    double coupling = 0.3;        // neighbor anomaly spill-over per step
    double noise_std = 1.0;
    double incident_rate = 0.0015; // per node per step
    double incident_drop = 25.0;
    double incident_recovery = 18.0; // decay constant, in steps
};

struct SyntheticData {
    TrafficSeries series;
    AdjacencyMatrix graph;           // ring topology
    std::vector<char> incident_step; // 1 when any incident is active at that step
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

/// Window regime labels: 1 (incident-present) when any step of the input
/// span [start, start + input_steps) has an active incident, else 0.
std::vector<char> window_regime_labels(const SyntheticData& data, std::span<const std::size_t> starts,
                                       std::size_t input_steps);

} // namespace routecast
