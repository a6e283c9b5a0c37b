#include "routecast/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace routecast {

double TrafficSeries::tau_of(std::size_t step) const {
    if (step >= timestamps.size()) {
        throw ShapeError("tau_of: step " + std::to_string(step) + " out of range");
    }
    return static_cast<double>(timestamps[step] - timestamps.front()) / 86400.0;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trimmed(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

TrafficSeries load_readings_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open readings file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    auto header = split_csv_line(line);
    if (header.size() < 2 || trimmed(header[0]) != "timestamp") {
        throw DataError(path + ":1: header must be `timestamp,<sensor_id>,...`");
    }
    TrafficSeries series;
    for (std::size_t i = 1; i < header.size(); ++i) {
        const std::string id = trimmed(header[i]);
        if (id.empty()) throw DataError(path + ":1: empty sensor id in column " + std::to_string(i + 1));
        series.sensor_ids.push_back(id);
    }
    const std::size_t n = series.sensor_ids.size();

    std::vector<double> data;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trimmed(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != n + 1) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(n + 1) +
                            " columns, got " + std::to_string(cells.size()));
        }
        std::int64_t ts = 0;
        try {
            ts = std::stoll(trimmed(cells[0]));
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad timestamp `" + cells[0] + "`");
        }
        if (!series.timestamps.empty() && ts <= series.timestamps.back()) {
            throw DataError(path + ":" + std::to_string(lineno) + ": timestamps must be strictly increasing");
        }
        series.timestamps.push_back(ts);
        for (std::size_t i = 1; i <= n; ++i) {
            const std::string cell = trimmed(cells[i]);
            if (cell.empty()) {
                throw DataError(path + ":" + std::to_string(lineno) + ": missing value in column " +
                                std::to_string(i + 1) + " (no imputation is performed)");
            }
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                data.push_back(v);
            } catch (const std::exception&) {
                throw DataError(path + ":" + std::to_string(lineno) + ": bad value `" + cell +
                                "` in column " + std::to_string(i + 1));
            }
        }
    }
    const std::size_t steps = series.timestamps.size();
    if (steps == 0) throw DataError(path + ": no observation rows");
    if (steps >= 3) {
        const std::int64_t dt = series.timestamps[1] - series.timestamps[0];
        for (std::size_t i = 2; i < steps; ++i) {
            if (series.timestamps[i] - series.timestamps[i - 1] != dt) {
                throw DataError(path + ": timestamp interval changes at row " + std::to_string(i + 2) +
                                " (a constant interval is required)");
            }
        }
    }
    series.values = Tensor(Shape{steps, n, 1}, std::move(data));
    return series;
}

void save_readings_csv(const TrafficSeries& series, const std::string& path) {
    if (series.channels() != 1) {
        throw DataError("save_readings_csv: the CSV format stores one channel per sensor");
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write readings file: " + path);
    out << "timestamp";
    for (const std::string& id : series.sensor_ids) out << ',' << id;
    out << '\n';
    const std::size_t n = series.nodes();
    char buf[32];
    for (std::size_t t = 0; t < series.steps(); ++t) {
        out << series.timestamps[t];
        for (std::size_t i = 0; i < n; ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", series.values[t * n + i]);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("failed while writing " + path);
}

std::pair<TrafficSeries, AdjacencyMatrix> load_dataset(const std::string& readings_path,
                                                       const std::string& edges_path) {
    TrafficSeries series = load_readings_csv(readings_path);
    const std::size_t n = series.nodes();
    std::vector<Edge> edges = parse_edge_list(edges_path);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (edges[i].from >= n || edges[i].to >= n) {
            throw DataError(edges_path + ": edge " + std::to_string(i + 1) + " references sensor index (" +
                            std::to_string(edges[i].from) + "," + std::to_string(edges[i].to) +
                            ") outside the " + std::to_string(n) + " sensors of " + readings_path);
        }
    }
    return {std::move(series), load_static_graph(edges, n)};
}

void save_edge_list(const AdjacencyMatrix& graph, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write edge list: " + path);
    out << "# from,to,weight\n";
    char buf[32];
    for (std::size_t i = 0; i < graph.n; ++i) {
        for (std::size_t j = 0; j < graph.n; ++j) {
            const double w = graph.weights[i * graph.n + j];
            if (w > 0.0 && i != j) {
                std::snprintf(buf, sizeof(buf), "%.17g", w);
                out << i << ',' << j << ',' << buf << '\n';
            }
        }
    }
    if (!out) throw DataError("failed while writing " + path);
}

} // namespace routecast
