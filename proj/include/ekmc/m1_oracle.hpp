#pragma once

// Reference M1 distance for short signals. Computes the continuous Frechet
// distance between the (undensified) completed graphs exactly, up to the
// bisection tolerance, using the free-space reachability test. Shares no code
// with m1_distance so it can serve as its oracle.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ekmc/errors.hpp"
#include "ekmc/metrics.hpp"

namespace ekmc {

inline constexpr std::size_t kM1OracleMaxLength = 12;

namespace oracle_detail {

struct Pt {
    double u;
    double r;
};

// Corner points of the completed graph; no interior samples.
inline std::vector<Pt> graph_vertices(const StepSignal& s)
{
    std::vector<Pt> v{{static_cast<double>(s[0]), 0.0}};
    for (std::size_t i = 1; i < s.size(); ++i) {
        const double t = static_cast<double>(i);
        if (s[i] != s[i - 1]) v.push_back({static_cast<double>(s[i - 1]), t});
        v.push_back({static_cast<double>(s[i]), t});
    }
    return v;
}

inline double dist(const Pt& a, const Pt& b) { return std::max(std::abs(a.u - b.u), std::abs(a.r - b.r)); }

struct Interval {
    double lo = 1.0;
    double hi = 0.0;
    bool empty() const { return lo > hi; }
};

constexpr double kSlack = 1e-12;

// Parameters s in [0,1] with |a + s (b - a) - p|_inf <= eps.
inline Interval free_interval(const Pt& a, const Pt& b, const Pt& p, double eps)
{
    Interval out{0.0, 1.0};
    const std::array<double, 2> start{a.u, a.r};
    const std::array<double, 2> delta{b.u - a.u, b.r - a.r};
    const std::array<double, 2> target{p.u, p.r};
    for (int c = 0; c < 2; ++c) {
        const double off = start[c] - target[c];
        if (delta[c] == 0.0) {
            if (std::abs(off) > eps + kSlack) return Interval{};
            continue;
        }
        double s1 = (-eps - off) / delta[c];
        double s2 = (eps - off) / delta[c];
        if (s1 > s2) std::swap(s1, s2);
        out.lo = std::max(out.lo, s1 - kSlack);
        out.hi = std::min(out.hi, s2 + kSlack);
    }
    out.lo = std::max(out.lo, 0.0);
    out.hi = std::min(out.hi, 1.0);
    return out;
}

// Is the continuous Frechet distance between polylines p and q <= eps?
inline bool within(const std::vector<Pt>& p, const std::vector<Pt>& q, double eps)
{
    if (dist(p.front(), q.front()) > eps + kSlack || dist(p.back(), q.back()) > eps + kSlack) return false;
    if (p.size() == 1 || q.size() == 1) {
        const Pt& point = p.size() == 1 ? p.front() : q.front();
        const auto& other = p.size() == 1 ? q : p;
        for (const auto& x : other) {
            if (dist(point, x) > eps + kSlack) return false;
        }
        return true;
    }
    const std::size_t m = p.size() - 1;  // segments of p
    const std::size_t k = q.size() - 1;  // segments of q

    // left[i][j]: reachable part of the boundary at vertex p_i, along segment q_j
    // bottom[i][j]: reachable part of the boundary at vertex q_j, along segment p_i
    std::vector<std::vector<Interval>> left(m + 1, std::vector<Interval>(k));
    std::vector<std::vector<Interval>> bottom(m, std::vector<Interval>(k + 1));

    bool open = true;
    for (std::size_t j = 0; j < k; ++j) {
        const Interval f = free_interval(q[j], q[j + 1], p[0], eps);
        if (open && !f.empty() && f.lo <= 0.0) {
            left[0][j] = f;
            open = f.hi >= 1.0;
        } else {
            open = false;
        }
    }
    open = true;
    for (std::size_t i = 0; i < m; ++i) {
        const Interval f = free_interval(p[i], p[i + 1], q[0], eps);
        if (open && !f.empty() && f.lo <= 0.0) {
            bottom[i][0] = f;
            open = f.hi >= 1.0;
        } else {
            open = false;
        }
    }

    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const Interval& in_left = left[i][j];
            const Interval& in_bottom = bottom[i][j];

            Interval right = free_interval(q[j], q[j + 1], p[i + 1], eps);
            if (in_bottom.empty()) {
                if (in_left.empty()) right = Interval{};
                else right.lo = std::max(right.lo, in_left.lo);
            }
            left[i + 1][j] = right;

            Interval top = free_interval(p[i], p[i + 1], q[j + 1], eps);
            if (in_left.empty()) {
                if (in_bottom.empty()) top = Interval{};
                else top.lo = std::max(top.lo, in_bottom.lo);
            }
            bottom[i][j + 1] = top;
        }
    }
    const Interval& last_right = left[m][k - 1];
    const Interval& last_top = bottom[m - 1][k];
    return (!last_right.empty() && last_right.hi >= 1.0) || (!last_top.empty() && last_top.hi >= 1.0);
}

}  // namespace oracle_detail

/// Exact M1 distance for signals of length <= 12 (bisection to 1e-10).
inline double m1_oracle(const StepSignal& a, const StepSignal& b)
{
    if (a.size() != b.size()) throw DimensionError("m1_oracle: signal lengths differ");
    if (a.size() > kM1OracleMaxLength) {
        throw SizeError("m1_oracle: signals longer than 12 samples are not supported");
    }
    using namespace oracle_detail;
    const auto p = graph_vertices(a);
    const auto q = graph_vertices(b);

    double lo = 0.0;
    double hi = 0.0;
    for (const auto& x : p)
        for (const auto& y : q) hi = std::max(hi, dist(x, y));
    if (within(p, q, 0.0)) return 0.0;
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (within(p, q, mid)) hi = mid;
        else lo = mid;
    }
    return hi;
}

}  // namespace ekmc
