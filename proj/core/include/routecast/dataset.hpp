#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "routecast/graph.hpp"
#include "routecast/tensor.hpp"

namespace routecast {

/// Observations shaped (steps, nodes, channels) with strictly increasing,
/// evenly spaced timestamps.
struct TrafficSeries {
    std::vector<std::int64_t> timestamps; // epoch seconds
    Tensor values;                        // (S, N, C)
    std::vector<std::string> sensor_ids;

    std::size_t steps() const { return values.rank() > 0 ? values.extent(0) : 0; }
    std::size_t nodes() const { return values.rank() > 1 ? values.extent(1) : 0; }
    std::size_t channels() const { return values.rank() > 2 ? values.extent(2) : 0; }

    /// Scalar time index fed to the time embedding: days elapsed since the
    /// first observation, so the fractional part is the time of day and the
    /// integer part counts days.
    double tau_of(std::size_t step) const;
};

/// Readings CSV: header `timestamp,<sensor_id>,...`, one row per step, one
/// value column per sensor. Rejects ragged rows, missing cells,
/// non-monotonic or unevenly spaced timestamps.
TrafficSeries load_readings_csv(const std::string& path);
void save_readings_csv(const TrafficSeries& series, const std::string& path);

/// Loads readings and the edge list together, cross-checking edge indices
/// against the sensor count.
std::pair<TrafficSeries, AdjacencyMatrix> load_dataset(const std::string& readings_path,
                                                       const std::string& edges_path);

void save_edge_list(const AdjacencyMatrix& graph, const std::string& path);

} // namespace routecast
