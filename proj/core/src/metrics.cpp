#include "routecast/metrics.hpp"

#include <cmath>
#include <limits>

namespace routecast {

namespace {

constexpr double kStdFloor = 1e-8;

} // namespace

Tensor ZScoreStats::apply(const Tensor& values) const {
    const std::size_t c = mean.size();
    if (values.shape().back() != c) {
        throw ShapeError("zscore apply: channel count " + std::to_string(values.shape().back()) +
                         " does not match stats (" + std::to_string(c) + ")");
    }
    Tensor out = values;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const std::size_t ch = i % c;
        out[i] = (out[i] - mean[ch]) / std[ch];
    }
    return out;
}

Tensor ZScoreStats::invert(const Tensor& values) const {
    const std::size_t c = mean.size();
    if (values.shape().back() != c) {
        throw ShapeError("zscore invert: channel count " + std::to_string(values.shape().back()) +
                         " does not match stats (" + std::to_string(c) + ")");
    }
    Tensor out = values;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const std::size_t ch = i % c;
        out[i] = out[i] * std[ch] + mean[ch];
    }
    return out;
}

ZScoreStats zscore_fit(const Tensor& values) {
    if (values.numel() == 0 || values.rank() == 0) throw DataError("zscore_fit: empty training split");
    const std::size_t c = values.shape().back();
    const std::size_t rows = values.numel() / c;
    if (rows < 1) throw DataError("zscore_fit: empty training split");
    ZScoreStats stats;
    stats.mean.assign(c, 0.0);
    stats.std.assign(c, 0.0);
    for (std::size_t i = 0; i < values.numel(); ++i) stats.mean[i % c] += values[i];
    for (std::size_t ch = 0; ch < c; ++ch) stats.mean[ch] /= static_cast<double>(rows);
    if (rows > 1) {
        for (std::size_t i = 0; i < values.numel(); ++i) {
            const std::size_t ch = i % c;
            const double d = values[i] - stats.mean[ch];
            stats.std[ch] += d * d;
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            stats.std[ch] = std::sqrt(stats.std[ch] / static_cast<double>(rows - 1));
        }
    }
    for (double& s : stats.std) s = std::max(s, kStdFloor);
    return stats;
}

MetricsReport compute_metrics(const Tensor& pred, const Tensor& truth, const ZScoreStats* stats,
                              double mape_eps) {
    if (!pred.same_shape(truth)) {
        throw ShapeError("compute_metrics: prediction " + pred.shape_str() + " vs truth " + truth.shape_str());
    }
    if (pred.rank() != 4) {
        throw ShapeError("compute_metrics: expected (W, T, N, C), got " + pred.shape_str());
    }
    const Tensor p = stats != nullptr ? stats->invert(pred) : pred;
    const Tensor y = stats != nullptr ? stats->invert(truth) : truth;

    const std::size_t windows = p.extent(0);
    const std::size_t horizon = p.extent(1);
    const std::size_t per_step = p.extent(2) * p.extent(3);

    MetricsReport rep;
    rep.mae_step.assign(horizon, 0.0);
    rep.rmse_step.assign(horizon, 0.0);
    rep.mape_step.assign(horizon, 0.0);
    std::vector<std::size_t> mape_counts(horizon, 0);

    for (std::size_t w = 0; w < windows; ++w) {
        for (std::size_t h = 0; h < horizon; ++h) {
            const std::size_t base = (w * horizon + h) * per_step;
            for (std::size_t k = 0; k < per_step; ++k) {
                const double e = p[base + k] - y[base + k];
                rep.mae_step[h] += std::abs(e);
                rep.rmse_step[h] += e * e;
                if (std::abs(y[base + k]) >= mape_eps) {
                    rep.mape_step[h] += std::abs(e) / std::abs(y[base + k]);
                    ++mape_counts[h];
                } else {
                    ++rep.mape_masked;
                }
            }
        }
    }

    const double denom = static_cast<double>(windows * per_step);
    double se_total = 0.0, ae_total = 0.0, ape_total = 0.0;
    std::size_t ape_count = 0;
    for (std::size_t h = 0; h < horizon; ++h) {
        ae_total += rep.mae_step[h];
        se_total += rep.rmse_step[h];
        ape_total += rep.mape_step[h];
        ape_count += mape_counts[h];
        rep.mae_step[h] /= denom;
        rep.rmse_step[h] = std::sqrt(rep.rmse_step[h] / denom);
        rep.mape_step[h] = mape_counts[h] > 0
                               ? 100.0 * rep.mape_step[h] / static_cast<double>(mape_counts[h])
                               : std::numeric_limits<double>::quiet_NaN();
    }
    const double total = denom * static_cast<double>(horizon);
    rep.mae = ae_total / total;
    rep.rmse = std::sqrt(se_total / total);
    if (ape_count > 0) {
        rep.mape = 100.0 * ape_total / static_cast<double>(ape_count);
    } else {
        rep.mape = std::numeric_limits<double>::quiet_NaN();
        rep.mape_valid = false;
    }
    return rep;
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw DataError("welch_t_test: both samples need >= 2 points");
    const auto stats_of = [](std::span<const double> x) {
        double m = 0.0;
        for (double v : x) m += v;
        m /= static_cast<double>(x.size());
        double var = 0.0;
        for (double v : x) var += (v - m) * (v - m);
        var /= static_cast<double>(x.size() - 1);
        return std::pair<double, double>{m, var};
    };
    const auto [ma, va] = stats_of(a);
    const auto [mb, vb] = stats_of(b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double se2 = va / na + vb / nb;
    WelchResult res;
    if (se2 == 0.0) {
        res.t = ma == mb ? 0.0 : std::numeric_limits<double>::infinity();
        res.p = ma == mb ? 1.0 : 0.0;
        res.df = na + nb - 2.0;
        return res;
    }
    res.t = (ma - mb) / std::sqrt(se2);
    const double num = se2 * se2;
    const double den = (va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0);
    res.df = num / den;
    res.p = std::erfc(std::abs(res.t) / std::sqrt(2.0));
    return res;
}

} // namespace routecast
