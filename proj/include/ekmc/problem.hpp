#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ekmc/errors.hpp"

namespace ekmc {

using Timestamp = std::int64_t;  // UTC seconds
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr Timestamp kSecondsPerDay = 86400;
inline constexpr int kDaysPerWeek = 7;

/*
 * One sensor's 1 Hz binary occupancy record. Values are contiguous:
 * values[i] is the state during second start + i.
 */
class OccupancySeries {
public:
    OccupancySeries(std::string sensor_id, Timestamp start, std::vector<std::uint8_t> values)
        : sensor_id_(std::move(sensor_id)), start_(start), values_(std::move(values))
    {
        if (values_.empty()) {
            throw DataError("occupancy series '" + sensor_id_ + "' is empty");
        }
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (values_[i] > 1) {
                throw DataError("occupancy series '" + sensor_id_ + "' has non-binary value at t=" +
                                std::to_string(start_ + static_cast<Timestamp>(i)));
            }
        }
    }

    const std::string& sensor_id() const noexcept { return sensor_id_; }
    Timestamp start() const noexcept { return start_; }
    // One past the last covered second.
    Timestamp end() const noexcept { return start_ + static_cast<Timestamp>(values_.size()); }
    std::size_t size() const noexcept { return values_.size(); }
    const std::vector<std::uint8_t>& values() const noexcept { return values_; }

    bool covers(Timestamp t) const noexcept { return t >= start_ && t < end(); }

    std::uint8_t at(Timestamp t) const
    {
        if (!covers(t)) {
            throw CoverageError("sensor '" + sensor_id_ + "' has no sample at t=" + std::to_string(t));
        }
        return values_[static_cast<std::size_t>(t - start_)];
    }

    friend bool operator==(const OccupancySeries&, const OccupancySeries&) = default;

private:
    std::string sensor_id_;
    Timestamp start_;
    std::vector<std::uint8_t> values_;
};

/*
 * Window arrangement. The training block uses D = days_per_week * weeks days:
 * in each of the most recent `weeks` weeks, the `days_per_week` most recent
 * days (the anchor's own day counts as the first day of week 0).
 */
struct WindowConfig {
    int n = 1;                // sensors
    int lag = 1;              // L: seconds of history per input column
    int horizon = 1;          // H: seconds ahead
    int per_day = 1;          // T: training columns per day
    int days_per_week = 1;    // d
    int weeks = 1;            // w
    int test_columns = 1;     // T_te
    Timestamp seconds_per_day = kSecondsPerDay;

    int days() const noexcept { return days_per_week * weeks; }
    int train_columns() const noexcept { return days() * per_day; }
    int input_rows() const noexcept { return n * lag; }

    void validate() const
    {
        auto positive = [](int v, const char* name) {
            if (v < 1) {
                throw DimensionError(std::string("window config: ") + name + " must be >= 1, got " +
                                     std::to_string(v));
            }
        };
        positive(n, "n");
        positive(lag, "lag");
        positive(horizon, "horizon");
        positive(per_day, "per_day");
        positive(days_per_week, "days_per_week");
        positive(weeks, "weeks");
        positive(test_columns, "test_columns");
        if (days_per_week > kDaysPerWeek) {
            throw DimensionError("window config: days_per_week cannot exceed 7");
        }
        if (seconds_per_day < 1) {
            throw DimensionError("window config: seconds_per_day must be positive");
        }
    }

    // Day offsets (in days before the anchor) of the training days, oldest first.
    std::vector<int> day_offsets() const
    {
        std::vector<int> offsets;
        offsets.reserve(static_cast<std::size_t>(days()));
        for (int week = weeks - 1; week >= 0; --week) {
            for (int day = days_per_week - 1; day >= 0; --day) {
                offsets.push_back(week * kDaysPerWeek + day);
            }
        }
        return offsets;
    }

    friend bool operator==(const WindowConfig&, const WindowConfig&) = default;
};

/*
 * The masked joint matrix
 *
 *     [ Y_tr  Y_te ]      Y_te unknown
 *     [ X_tr  X_te ]
 *
 * kept in block form. Input columns stack x(t-L+1) ... x(t) (sensor index
 * fastest); output columns hold x(t+H).
 */
class JointProblem {
public:
    JointProblem(WindowConfig config, Matrix y_train, Matrix x_train, Matrix x_test)
        : config_(config), y_train_(std::move(y_train)), x_train_(std::move(x_train)),
          x_test_(std::move(x_test))
    {
        config_.validate();
        const auto n = config_.n;
        const auto rows = config_.input_rows();
        const auto t1 = config_.train_columns();
        if (y_train_.rows() != n || y_train_.cols() != t1) {
            throw DimensionError("Y_tr must be " + std::to_string(n) + "x" + std::to_string(t1));
        }
        if (x_train_.rows() != rows || x_train_.cols() != t1) {
            throw DimensionError("X_tr must be " + std::to_string(rows) + "x" + std::to_string(t1));
        }
        if (x_test_.rows() != rows || x_test_.cols() != config_.test_columns) {
            throw DimensionError("X_te must be " + std::to_string(rows) + "x" +
                                 std::to_string(config_.test_columns));
        }
        if (!y_train_.allFinite() || !x_train_.allFinite() || !x_test_.allFinite()) {
            throw DataError("joint problem contains non-finite entries");
        }
    }

    const WindowConfig& config() const noexcept { return config_; }
    const Matrix& y_train() const noexcept { return y_train_; }
    const Matrix& x_train() const noexcept { return x_train_; }
    const Matrix& x_test() const noexcept { return x_test_; }

    Eigen::Index n() const noexcept { return y_train_.rows(); }
    Eigen::Index t1() const noexcept { return x_train_.cols(); }
    Eigen::Index t2() const noexcept { return x_test_.cols(); }

    // Column times t_j (the "now" of each column), set by build_windows.
    const std::vector<Timestamp>& train_times() const noexcept { return train_times_; }
    const std::vector<Timestamp>& test_times() const noexcept { return test_times_; }
    std::optional<Timestamp> anchor() const noexcept { return anchor_; }

    void set_times(Timestamp anchor, std::vector<Timestamp> train, std::vector<Timestamp> test)
    {
        if (static_cast<Eigen::Index>(train.size()) != t1() ||
            static_cast<Eigen::Index>(test.size()) != t2()) {
            throw DimensionError("column time vectors do not match block widths");
        }
        anchor_ = anchor;
        train_times_ = std::move(train);
        test_times_ = std::move(test);
    }

    // Timestamps predicted by the unknown block: test column time + H.
    std::vector<Timestamp> test_target_times() const
    {
        std::vector<Timestamp> out(test_times_);
        for (auto& t : out) t += config_.horizon;
        return out;
    }

    friend bool operator==(const JointProblem& a, const JointProblem& b)
    {
        return a.config_ == b.config_ && a.y_train_ == b.y_train_ && a.x_train_ == b.x_train_ &&
               a.x_test_ == b.x_test_ && a.anchor_ == b.anchor_ &&
               a.train_times_ == b.train_times_ && a.test_times_ == b.test_times_;
    }

private:
    WindowConfig config_;
    Matrix y_train_;
    Matrix x_train_;
    Matrix x_test_;
    std::optional<Timestamp> anchor_;
    std::vector<Timestamp> train_times_;
    std::vector<Timestamp> test_times_;
};

namespace detail {

struct Span {
    Timestamp lo;  // inclusive
    Timestamp hi;  // inclusive
};

// Column "now" times of the training block, oldest day first.
inline std::vector<Timestamp> training_column_times(const WindowConfig& cfg, Timestamp anchor)
{
    std::vector<Timestamp> times;
    times.reserve(static_cast<std::size_t>(cfg.train_columns()));
    for (int offset : cfg.day_offsets()) {
        const Timestamp reference = anchor - static_cast<Timestamp>(offset) * cfg.seconds_per_day;
        const Timestamp first = reference - cfg.test_columns - cfg.per_day + 1;
        for (int j = 0; j < cfg.per_day; ++j) times.push_back(first + j);
    }
    return times;
}

inline std::vector<Timestamp> test_column_times(const WindowConfig& cfg, Timestamp anchor)
{
    std::vector<Timestamp> times;
    times.reserve(static_cast<std::size_t>(cfg.test_columns));
    for (int j = 0; j < cfg.test_columns; ++j) times.push_back(anchor - cfg.test_columns + 1 + j);
    return times;
}

// Seconds every sensor must cover, as sorted inclusive spans.
inline std::vector<Span> required_spans(const WindowConfig& cfg, Timestamp anchor)
{
    std::vector<Span> spans;
    for (int offset : cfg.day_offsets()) {
        const Timestamp reference = anchor - static_cast<Timestamp>(offset) * cfg.seconds_per_day;
        const Timestamp first = reference - cfg.test_columns - cfg.per_day + 1;
        const Timestamp last = reference - cfg.test_columns;
        spans.push_back({first - (cfg.lag - 1), last + cfg.horizon});
    }
    spans.push_back({anchor - cfg.test_columns + 1 - (cfg.lag - 1), anchor});
    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.lo < b.lo; });
    return spans;
}

inline std::optional<Timestamp> first_missing(const OccupancySeries& s, const std::vector<Span>& spans)
{
    std::optional<Timestamp> best;
    for (const auto& span : spans) {
        std::optional<Timestamp> miss;
        if (span.lo < s.start()) {
            miss = span.lo;
        } else if (span.hi >= s.end()) {
            miss = std::max(span.lo, s.end());
        }
        if (miss && (!best || *miss < *best)) best = miss;
    }
    return best;
}

}  // namespace detail

/*
 * Arrange n sensor series into a joint problem anchored at `anchor` (the time
 * of the most recent test column). Series order defines sensor order.
 */
inline JointProblem build_windows(std::span<const OccupancySeries> series, Timestamp anchor,
                                  const WindowConfig& config)
{
    config.validate();
    if (static_cast<int>(series.size()) != config.n) {
        throw DimensionError("build_windows: config expects " + std::to_string(config.n) +
                             " sensors, got " + std::to_string(series.size()));
    }

    const auto spans = detail::required_spans(config, anchor);
    for (const auto& s : series) {
        if (auto miss = detail::first_missing(s, spans)) {
            throw CoverageError("missing coverage: sensor '" + s.sensor_id() + "' at t=" +
                                std::to_string(*miss));
        }
    }

    const int n = config.n;
    const int lag = config.lag;
    auto fill_input = [&](Matrix& x, Eigen::Index col, Timestamp t) {
        for (int l = 0; l < lag; ++l) {
            const Timestamp when = t - lag + 1 + l;
            for (int s = 0; s < n; ++s) x(l * n + s, col) = series[s].at(when);
        }
    };

    auto train_times = detail::training_column_times(config, anchor);
    auto test_times = detail::test_column_times(config, anchor);

    Matrix y_train(n, config.train_columns());
    Matrix x_train(config.input_rows(), config.train_columns());
    for (Eigen::Index j = 0; j < y_train.cols(); ++j) {
        const Timestamp t = train_times[static_cast<std::size_t>(j)];
        fill_input(x_train, j, t);
        for (int s = 0; s < n; ++s) y_train(s, j) = series[s].at(t + config.horizon);
    }
    Matrix x_test(config.input_rows(), config.test_columns);
    for (Eigen::Index j = 0; j < x_test.cols(); ++j) {
        fill_input(x_test, j, test_times[static_cast<std::size_t>(j)]);
    }

    JointProblem problem(config, std::move(y_train), std::move(x_train), std::move(x_test));
    problem.set_times(anchor, std::move(train_times), std::move(test_times));
    return problem;
}

struct JointMatrix {
    Matrix z;          // (n + nL) x (t1 + t2), unknown block zero-filled
    BoolMatrix known;  // false exactly on the Y_te block
};

inline JointMatrix flatten_joint(const JointProblem& p)
{
    const auto n = p.n();
    const auto rows = p.x_train().rows();
    const auto t1 = p.t1();
    const auto t2 = p.t2();
    JointMatrix out{Matrix::Zero(n + rows, t1 + t2), BoolMatrix::Constant(n + rows, t1 + t2, true)};
    out.z.topLeftCorner(n, t1) = p.y_train();
    out.z.bottomLeftCorner(rows, t1) = p.x_train();
    out.z.bottomRightCorner(rows, t2) = p.x_test();
    out.known.topRightCorner(n, t2).setConstant(false);
    return out;
}

// Inverse of flatten_joint; column times are not carried by the dense form.
inline JointProblem split_joint(const JointMatrix& m, const WindowConfig& config)
{
    config.validate();
    const Eigen::Index n = config.n;
    const Eigen::Index rows = config.input_rows();
    const Eigen::Index t1 = config.train_columns();
    const Eigen::Index t2 = config.test_columns;
    if (m.z.rows() != n + rows || m.z.cols() != t1 + t2) {
        throw DimensionError("split_joint: dense matrix does not match window config");
    }
    return JointProblem(config, m.z.topLeftCorner(n, t1), m.z.bottomLeftCorner(rows, t1),
                        m.z.bottomRightCorner(rows, t2));
}

}  // namespace ekmc
