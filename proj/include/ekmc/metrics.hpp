#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "ekmc/errors.hpp"
#include "ekmc/problem.hpp"

namespace ekmc {

/*
 * Binary sequence read as a right-continuous step function: values[i] holds
 * on [i, i+1), jumps happen at integer times.
 */
class StepSignal {
public:
    explicit StepSignal(std::vector<std::uint8_t> values) : values_(std::move(values))
    {
        if (values_.empty()) throw DataError("step signal must have length >= 1");
        for (auto v : values_) {
            if (v > 1) throw DataError("step signal values must be 0 or 1");
        }
    }

    // From a row/column of 0.0/1.0 doubles.
    template <class Derived>
    static StepSignal from_binary(const Eigen::DenseBase<Derived>& v)
    {
        std::vector<std::uint8_t> out;
        out.reserve(static_cast<std::size_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const double x = v(i);
            if (x != 0.0 && x != 1.0) throw DataError("step signal values must be 0 or 1");
            out.push_back(static_cast<std::uint8_t>(x));
        }
        return StepSignal(std::move(out));
    }

    std::size_t size() const noexcept { return values_.size(); }
    std::uint8_t operator[](std::size_t i) const { return values_[i]; }
    const std::vector<std::uint8_t>& values() const noexcept { return values_; }

private:
    std::vector<std::uint8_t> values_;
};

struct PathPoint {
    double u;  // space (signal value)
    double r;  // time

    friend bool operator==(const PathPoint&, const PathPoint&) = default;
};

using ParametricPath = std::vector<PathPoint>;

/// Per-variable mean absolute error. Rows are observations, columns variables.
inline Vector mae(const Matrix& truth, const Matrix& pred)
{
    if (truth.rows() != pred.rows() || truth.cols() != pred.cols()) {
        throw DimensionError("mae: truth and prediction shapes differ");
    }
    if (truth.rows() == 0) throw DimensionError("mae: no observations");
    return (truth - pred).cwiseAbs().colwise().mean().transpose();
}

/*
 * Densified completed graph: each horizontal run [i, i+1] is sampled every
 * 1/resolution time units and each jump at time i+1 is sampled every
 * 1/resolution space units, in traversal order.
 */
inline ParametricPath completed_graph(const StepSignal& signal, int resolution)
{
    if (resolution < 1) throw DomainError("completed_graph: resolution must be >= 1");
    const std::size_t t = signal.size();
    std::size_t jumps = 0;
    for (std::size_t i = 1; i < t; ++i) jumps += signal[i] != signal[i - 1];

    const auto res = static_cast<std::size_t>(resolution);
    ParametricPath path;
    path.reserve(1 + (t - 1) * res + jumps * res);
    path.push_back({static_cast<double>(signal[0]), 0.0});
    for (std::size_t i = 0; i + 1 < t; ++i) {
        const double level = signal[i];
        for (std::size_t m = 1; m <= res; ++m) {
            path.push_back({level, static_cast<double>(i) + static_cast<double>(m) / resolution});
        }
        const double next = signal[i + 1];
        if (next != level) {
            const double when = static_cast<double>(i + 1);
            for (std::size_t m = 1; m <= res; ++m) {
                path.push_back({level + (next - level) * static_cast<double>(m) / resolution, when});
            }
        }
    }
    return path;
}

/// Discrete Frechet distance under max(|du|, |dr|).
inline double discrete_frechet(const ParametricPath& a, const ParametricPath& b)
{
    if (a.empty() || b.empty()) throw DimensionError("discrete_frechet: empty path");
    auto dist = [](const PathPoint& p, const PathPoint& q) {
        return std::max(std::abs(p.u - q.u), std::abs(p.r - q.r));
    };
    const std::size_t m = b.size();
    std::vector<double> prev(m), cur(m);
    prev[0] = dist(a[0], b[0]);
    for (std::size_t j = 1; j < m; ++j) prev[j] = std::max(prev[j - 1], dist(a[0], b[j]));
    for (std::size_t i = 1; i < a.size(); ++i) {
        cur[0] = std::max(prev[0], dist(a[i], b[0]));
        for (std::size_t j = 1; j < m; ++j) {
            const double reach = std::min({prev[j], cur[j - 1], prev[j - 1]});
            cur[j] = std::max(reach, dist(a[i], b[j]));
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

/// Skorokhod M1 distance, approximated from above at the given resolution.
inline double m1_distance(const StepSignal& a, const StepSignal& b, int resolution = 20)
{
    if (a.size() != b.size()) throw DimensionError("m1_distance: signal lengths differ");
    return discrete_frechet(completed_graph(a, resolution), completed_graph(b, resolution));
}

}  // namespace ekmc
