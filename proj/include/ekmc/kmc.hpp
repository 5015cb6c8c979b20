#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ekmc/errors.hpp"
#include "ekmc/kernels.hpp"
#include "ekmc/problem.hpp"

namespace ekmc {

struct SolverConfig {
    int rank = 20;
    double lambda = 1.0;
    int max_sweeps = 100;
    double tol = 1e-6;  // relative objective decrease per sweep
    // When > 0, also require every block's relative change on the last sweep
    // to fall below this. The objective flattens quadratically near a
    // minimizer, so objective-only stopping leaves blocks still moving.
    double step_tol = 0.0;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (rank < 1) throw ConfigError("solver: rank must be >= 1");
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("solver: lambda must be > 0");
        if (max_sweeps < 1) throw ConfigError("solver: max_sweeps must be >= 1");
        if (!(tol >= 0.0)) throw ConfigError("solver: tol must be >= 0");
        if (!(step_tol >= 0.0)) throw ConfigError("solver: step_tol must be >= 0");
    }

    friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

/*
 * The four coordinate blocks. The feature-space factor U_te is never formed;
 * it is represented as U_te = [Phi_tr | Phi_te] * a.
 */
struct FactorState {
    Matrix u_train;  // n x r
    Matrix a;        // (t1 + t2) x r
    Matrix v_train;  // t1 x r
    Matrix v_test;   // t2 x r

    Eigen::Index rank() const noexcept { return u_train.cols(); }

    bool all_finite() const
    {
        return u_train.allFinite() && a.allFinite() && v_train.allFinite() && v_test.allFinite();
    }

    friend bool operator==(const FactorState&, const FactorState&) = default;
};

struct SolveReport {
    // objective_trace[0] is the objective at initialization; entry k follows sweep k.
    std::vector<double> objective_trace;
    int sweeps_run = 0;
    bool converged = false;
    double stationarity_residual = 0.0;
};

struct FactorDims {
    Eigen::Index n = 0;
    Eigen::Index t1 = 0;
    Eigen::Index t2 = 0;
};

inline FactorState init_factors(const SolverConfig& cfg, const FactorDims& dims)
{
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.rank));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    auto draw = [&](Eigen::Index rows) {
        Matrix m(rows, cfg.rank);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = uniform(rng);
        return m;
    };
    FactorState f;
    f.u_train = draw(dims.n);
    f.a = draw(dims.t1 + dims.t2);
    f.v_train = draw(dims.t1);
    f.v_test = draw(dims.t2);
    return f;
}

// Y~_te = U_tr V_te'
inline Matrix predict(const FactorState& f) { return f.u_train * f.v_test.transpose(); }

// Reconstruction of the known training block, U_tr V_tr'.
inline Matrix reconstruct_train(const FactorState& f) { return f.u_train * f.v_train.transpose(); }

/*
 * Closed-form block updates and the objective, all evaluated through the
 * Gram matrix. `ka` arguments are the cached product K * A for the current A.
 *
 * With column weights w (Theta = diag(w)) on the two training terms the
 * objective is
 *
 *   |(Y_tr - U_tr V_tr')Theta^1/2|^2 + |(Phi_tr - U_te V_tr')Theta^1/2|^2
 *     + |Phi_te - U_te V_te'|^2 + lambda (|U_tr|^2 + |U_te|^2 + |V_tr|^2 + |V_te|^2)
 *
 * and every update below is the exact minimizer over its block.
 */
class BlockSolver {
public:
    BlockSolver(const JointProblem& problem, const GramMatrix& g, const SolverConfig& cfg,
                std::optional<Vector> col_weights = std::nullopt)
        : problem_(problem), g_(g), cfg_(cfg)
    {
        cfg_.validate();
        const auto t1 = problem_.t1();
        if (g_.t1 != t1 || g_.t2 != problem_.t2() || g_.k.rows() != g_.size() ||
            g_.k.cols() != g_.size()) {
            throw DimensionError("kmc: Gram matrix does not match the joint problem");
        }
        if (col_weights) {
            if (col_weights->size() != t1) {
                throw DimensionError("kmc: column weights must have length t1");
            }
            if (!col_weights->allFinite() || (col_weights->array() <= 0.0).any()) {
                throw DomainError("kmc: column weights must be finite and strictly positive");
            }
            weights_ = std::move(*col_weights);
        } else {
            weights_ = Vector::Ones(t1);
        }
        uniform_weight_ = (weights_.array() == weights_(0)).all() ? std::optional<double>(weights_(0))
                                                                  : std::nullopt;
    }

    const Vector& weights() const noexcept { return weights_; }
    const SolverConfig& config() const noexcept { return cfg_; }

    FactorDims dims() const { return {problem_.n(), problem_.t1(), problem_.t2()}; }

    Matrix kernel_times_a(const FactorState& f) const { return g_.k * f.a; }

    double objective(const FactorState& f) const { return objective(f, kernel_times_a(f)); }

    double objective(const FactorState& f, const Matrix& ka) const
    {
        check_shapes(f);
        const auto t1 = problem_.t1();
        const auto t2 = problem_.t2();
        const Matrix gram_a = f.a.transpose() * ka;  // U_te' U_te

        const Matrix resid = problem_.y_train() - f.u_train * f.v_train.transpose();
        const double fit_y = resid.colwise().squaredNorm().dot(weights_);

        // |phi_i - U_te v_i|^2 = K_ii - 2 (K A)_i . v_i + v_i' G v_i
        auto feature_terms = [&](const auto& v, const auto& ka_rows, Eigen::Index offset) {
            const Vector quad = ((v * gram_a).array() * v.array()).rowwise().sum();
            const Vector cross = (ka_rows.array() * v.array()).rowwise().sum();
            return (g_.k.diagonal().segment(offset, v.rows()) - 2.0 * cross + quad).eval();
        };
        const double fit_phi_train = feature_terms(f.v_train, ka.topRows(t1), 0).dot(weights_);
        const double fit_phi_test = feature_terms(f.v_test, ka.bottomRows(t2), t1).sum();

        const double reg = cfg_.lambda * (f.u_train.squaredNorm() + gram_a.trace() +
                                          f.v_train.squaredNorm() + f.v_test.squaredNorm());
        const double value = fit_y + fit_phi_train + fit_phi_test + reg;
        if (!std::isfinite(value)) throw NumericalError("kmc: objective is not finite");
        return value;
    }

    // U_tr = Y Theta V_tr (V_tr' Theta V_tr + lambda I)^-1
    void update_u_train(FactorState& f) const
    {
        const Matrix wv = weights_.asDiagonal() * f.v_train;
        const Matrix normal = f.v_train.transpose() * wv + ridge(f.rank());
        const Matrix rhs = (problem_.y_train() * wv).transpose();
        f.u_train = normal.llt().solve(rhs).transpose();
    }

    // U_te = (Phi_tr Theta V_tr + Phi_te V_te)(V_tr' Theta V_tr + V_te' V_te + lambda I)^-1
    void update_a(FactorState& f) const
    {
        const auto t1 = problem_.t1();
        const Matrix wv = weights_.asDiagonal() * f.v_train;
        const Matrix normal =
            f.v_train.transpose() * wv + f.v_test.transpose() * f.v_test + ridge(f.rank());
        Matrix stacked(f.a.rows(), f.rank());
        stacked.topRows(t1) = wv;
        stacked.bottomRows(problem_.t2()) = f.v_test;
        f.a = normal.llt().solve(stacked.transpose()).transpose();
    }

    void update_v_train(FactorState& f) const { update_v_train(f, kernel_times_a(f)); }

    /*
     * Row i minimizes w_i (|y_i - U_tr v|^2 + |phi_i - U_te v|^2) + lambda |v|^2,
     * so v_i = (S + lambda / w_i I)^-1 b_i with S = U_tr'U_tr + A'KA and
     * b_i = U_tr' y_i + (K A)_i. Uniform weights collapse to one factorization.
     */
    void update_v_train(FactorState& f, const Matrix& ka) const
    {
        const auto t1 = problem_.t1();
        const Matrix s = f.u_train.transpose() * f.u_train + f.a.transpose() * ka;
        const Matrix rhs = problem_.y_train().transpose() * f.u_train + ka.topRows(t1);
        if (uniform_weight_) {
            const Matrix normal = s + (cfg_.lambda / *uniform_weight_) * Matrix::Identity(s.rows(), s.cols());
            f.v_train = normal.llt().solve(rhs.transpose()).transpose();
            return;
        }
        Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
        const Matrix& q = eig.eigenvectors();
        const Vector& evals = eig.eigenvalues();
        const Matrix projected = rhs * q;  // rows b_i' Q
        Matrix scaled(projected.rows(), projected.cols());
        for (Eigen::Index i = 0; i < t1; ++i) {
            const double shift = cfg_.lambda / weights_(i);
            scaled.row(i) = projected.row(i).array() / (evals.transpose().array() + shift);
        }
        f.v_train = scaled * q.transpose();
    }

    void update_v_test(FactorState& f) const { update_v_test(f, kernel_times_a(f)); }

    // V_te = Phi_te' U_te (U_te' U_te + lambda I)^-1
    void update_v_test(FactorState& f, const Matrix& ka) const
    {
        const Matrix normal = f.a.transpose() * ka + ridge(f.rank());
        f.v_test = normal.llt().solve(ka.bottomRows(problem_.t2()).transpose()).transpose();
    }

    // One full cycle of the four updates; returns K * A for the final A.
    Matrix sweep(FactorState& f) const
    {
        update_u_train(f);
        update_a(f);
        Matrix ka = kernel_times_a(f);
        update_v_train(f, ka);
        update_v_test(f, ka);
        return ka;
    }

private:
    Matrix ridge(Eigen::Index r) const { return cfg_.lambda * Matrix::Identity(r, r); }

    void check_shapes(const FactorState& f) const
    {
        const auto r = f.rank();
        if (f.u_train.rows() != problem_.n() || f.a.rows() != g_.size() || f.a.cols() != r ||
            f.v_train.rows() != problem_.t1() || f.v_train.cols() != r ||
            f.v_test.rows() != problem_.t2() || f.v_test.cols() != r) {
            throw DimensionError("kmc: factor shapes do not match the problem");
        }
    }

    const JointProblem& problem_;
    const GramMatrix& g_;
    SolverConfig cfg_;
    Vector weights_;
    std::optional<double> uniform_weight_;
};

namespace detail {

inline double relative_change(const Matrix& before, const Matrix& after)
{
    const double base = before.norm();
    const double diff = (after - before).norm();
    if (base == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / base;
}

}  // namespace detail

struct SolveResult {
    FactorState factors;
    SolveReport report;
};

inline SolveResult solve(const JointProblem& problem, const GramMatrix& g, const SolverConfig& cfg,
                         std::optional<Vector> col_weights = std::nullopt)
{
    if (problem.t1() < 1) throw DimensionError("kmc: need at least one training column");
    const BlockSolver solver(problem, g, cfg, std::move(col_weights));

    SolveResult out;
    out.factors = init_factors(cfg, solver.dims());
    auto& f = out.factors;
    auto& report = out.report;
    report.objective_trace.push_back(solver.objective(f));

    for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
        const FactorState before = f;
        const Matrix ka = solver.sweep(f);
        if (!f.all_finite()) throw NumericalError("kmc: factors diverged at sweep " + std::to_string(sweep));
        const double value = solver.objective(f, ka);
        const double previous = report.objective_trace.back();
        report.objective_trace.push_back(value);
        report.sweeps_run = sweep;
        report.stationarity_residual = std::max({detail::relative_change(before.u_train, f.u_train),
                                                 detail::relative_change(before.a, f.a),
                                                 detail::relative_change(before.v_train, f.v_train),
                                                 detail::relative_change(before.v_test, f.v_test)});
        const double scale = std::max(std::abs(previous), std::numeric_limits<double>::min());
        const bool settled = cfg.step_tol <= 0.0 || report.stationarity_residual < cfg.step_tol;
        if ((previous - value) / scale < cfg.tol && settled) {
            report.converged = true;
            break;
        }
    }
    return out;
}

}  // namespace ekmc
