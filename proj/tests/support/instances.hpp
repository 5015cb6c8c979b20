#pragma once

// Seeded random joint problems for solver tests. The window layout is a
// single day so t1 can be anything.

#include <random>

#include "ekmc/problem.hpp"

namespace ekmc::testing {

inline WindowConfig flat_window(int n, int lag, int t1, int t2)
{
    WindowConfig c;
    c.n = n;
    c.lag = lag;
    c.per_day = t1;
    c.days_per_week = 1;
    c.weeks = 1;
    c.test_columns = t2;
    return c;
}

inline Matrix random_binary(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double p = 0.3)
{
    std::bernoulli_distribution coin(p);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = coin(rng) ? 1.0 : 0.0;
    return m;
}

inline JointProblem random_binary_problem(int n, int lag, int t1, int t2, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const auto cfg = flat_window(n, lag, t1, t2);
    Matrix y = random_binary(n, t1, rng);
    Matrix x_tr = random_binary(n * lag, t1, rng);
    Matrix x_te = random_binary(n * lag, t2, rng);
    return JointProblem(cfg, std::move(y), std::move(x_tr), std::move(x_te));
}

struct RankOneInstance {
    JointProblem problem;
    Matrix y_test;  // the hidden block of Z = u v'
};

// Noiseless rank-1 joint matrix with n = L = 1.
inline RankOneInstance rank_one_instance(int t1, int t2, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> scale(1.0, 2.0);
    const double u_y = scale(rng) * (normal(rng) < 0 ? -1.0 : 1.0);
    const double u_x = scale(rng) * (normal(rng) < 0 ? -1.0 : 1.0);
    Vector v(t1 + t2);
    for (auto& e : v) e = normal(rng);
    Matrix z(2, t1 + t2);
    z.row(0) = u_y * v.transpose();
    z.row(1) = u_x * v.transpose();
    return {JointProblem(flat_window(1, 1, t1, t2), z.topLeftCorner(1, t1), z.bottomLeftCorner(1, t1),
                         z.bottomRightCorner(1, t2)),
            z.topRightCorner(1, t2)};
}

// Best rank-1 approximation of the fully observed joint matrix, restricted
// to the hidden block.
inline Matrix svd_completion_oracle(const RankOneInstance& inst)
{
    const auto& p = inst.problem;
    Matrix z(2, p.t1() + p.t2());
    z << p.y_train(), inst.y_test, p.x_train(), p.x_test();
    Eigen::JacobiSVD<Matrix> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Matrix best = svd.singularValues()(0) * svd.matrixU().col(0) * svd.matrixV().col(0).transpose();
    return best.topRightCorner(1, p.t2());
}

}  // namespace ekmc::testing
