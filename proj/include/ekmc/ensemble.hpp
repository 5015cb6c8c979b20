#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ekmc/errors.hpp"
#include "ekmc/kernels.hpp"
#include "ekmc/kmc.hpp"
#include "ekmc/problem.hpp"

namespace ekmc {

/// Entry is 1 iff raw strictly exceeds the threshold.
inline Matrix threshold_predictions(const Matrix& raw, double threshold)
{
    return (raw.array() > threshold).cast<double>().matrix();
}

/// Column-specific thresholds, one per column of `raw`.
inline Matrix threshold_predictions(const Matrix& raw, const Vector& per_column)
{
    if (per_column.size() != raw.cols()) {
        throw DimensionError("threshold_predictions: need one threshold per column");
    }
    Matrix out(raw.rows(), raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        out.col(j) = (raw.col(j).array() > per_column(j)).cast<double>().matrix();
    }
    return out;
}

/// 2^K * DT * prod_k sqrt(eps_k (1 - eps_k)); bound on training columns a
/// K-round weighted vote gets wrong.
inline double training_error_bound(std::span<const double> epsilons, long long dt)
{
    if (epsilons.empty()) throw DomainError("training_error_bound: empty epsilon trace");
    double bound = static_cast<double>(dt);
    for (double eps : epsilons) {
        if (!(eps > 0.0 && eps < 1.0)) {
            throw DomainError("training_error_bound: epsilon outside (0, 1)");
        }
        bound *= 2.0 * std::sqrt(eps * (1.0 - eps));
    }
    return bound;
}

/// Weighted vote sum_k (beta_k / sum beta) * predictions_k.
inline Matrix combine_rounds(std::span<const Matrix> predictions, std::span<const double> betas)
{
    if (predictions.empty() || predictions.size() != betas.size()) {
        throw DimensionError("combine_rounds: need one beta per prediction");
    }
    double total = 0.0;
    for (double b : betas) total += b;
    if (!(total > 0.0)) throw DomainError("combine_rounds: vote weights must sum to a positive value");
    Matrix out = Matrix::Zero(predictions.front().rows(), predictions.front().cols());
    for (std::size_t k = 0; k < predictions.size(); ++k) {
        if (predictions[k].rows() != out.rows() || predictions[k].cols() != out.cols()) {
            throw DimensionError("combine_rounds: prediction shapes differ");
        }
        out += (betas[k] / total) * predictions[k];
    }
    return out;
}

enum class ThresholdRule {
    fixed,       // one scalar for every entry
    per_sensor,  // each sensor's positive rate on the training block
};

struct EnsembleConfig {
    int max_rounds = 10;
    double eps_min = 1e-6;
    ThresholdRule rule = ThresholdRule::fixed;
    double threshold = 0.5;
    bool stop_on_weak = true;

    void validate() const
    {
        if (max_rounds < 1) throw ConfigError("ensemble: max_rounds must be >= 1");
        if (!(eps_min > 0.0 && eps_min < 0.5)) throw ConfigError("ensemble: eps_min must be in (0, 0.5)");
        if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("ensemble: threshold must be in (0, 1)");
    }

    friend bool operator==(const EnsembleConfig&, const EnsembleConfig&) = default;
};

// Positive rate of each sensor over the training outputs, kept inside (0, 1).
inline Vector positive_rate_thresholds(const Matrix& y_train)
{
    Vector rate = y_train.rowwise().mean();
    return rate.cwiseMax(0.01).cwiseMin(0.99);
}

inline Vector sensor_thresholds(const EnsembleConfig& cfg, const Matrix& y_train)
{
    if (cfg.rule == ThresholdRule::per_sensor) return positive_rate_thresholds(y_train);
    return Vector::Constant(y_train.rows(), cfg.threshold);
}

// Rows of `raw` are sensors; each row uses its own threshold.
inline Matrix threshold_rows(const Matrix& raw, const Vector& per_row)
{
    return threshold_predictions(raw.transpose(), per_row).transpose();
}

struct EnsembleRound {
    Matrix test_prediction;   // real n x t2
    Matrix train_prediction;  // binary n x t1
    double raw_epsilon = 0.0;
    double epsilon = 0.0;     // clamped into [eps_min, 1 - eps_min]
    double beta = 0.0;
    std::vector<bool> mispredicted;  // per training column
    SolveReport report;
};

struct EnsembleModel {
    std::vector<EnsembleRound> rounds;
    Vector final_weights;     // theta after the last retained round
    Vector thresholds;        // per sensor
    Matrix combined;          // real n x t2
    Matrix thresholded;       // binary n x t2
    Matrix train_vote;        // binary n x t1, weighted vote of the round train predictions
    long long train_errors = 0;  // training columns the vote gets wrong
    FactorState first_factors;   // round 1, i.e. the unweighted KMC fit

    std::vector<double> epsilons() const
    {
        std::vector<double> out;
        for (const auto& r : rounds) out.push_back(r.epsilon);
        return out;
    }

    std::vector<double> betas() const
    {
        std::vector<double> out;
        for (const auto& r : rounds) out.push_back(r.beta);
        return out;
    }
};

// The first round was already no better than chance; carries that round's
// plain KMC prediction so callers can fall back to it.
class DegenerateEnsembleError : public Error {
public:
    DegenerateEnsembleError(Matrix fallback, double epsilon)
        : Error("ekmc: no round beat chance (first-round epsilon " + std::to_string(epsilon) + ")"),
          fallback_(std::move(fallback)), epsilon_(epsilon) {}

    const Matrix& fallback() const noexcept { return fallback_; }
    double epsilon() const noexcept { return epsilon_; }

private:
    Matrix fallback_;
    double epsilon_;
};

namespace detail {

inline std::vector<bool> column_mismatch(const Matrix& predicted, const Matrix& truth)
{
    std::vector<bool> miss(static_cast<std::size_t>(truth.cols()));
    for (Eigen::Index i = 0; i < truth.cols(); ++i) {
        miss[static_cast<std::size_t>(i)] = (predicted.col(i).array() != truth.col(i).array()).any();
    }
    return miss;
}

}  // namespace detail

inline EnsembleModel ekmc_fit(const JointProblem& problem, const GramMatrix& g, const SolverConfig& scfg,
                              const EnsembleConfig& ecfg)
{
    ecfg.validate();
    scfg.validate();
    const auto t1 = problem.t1();
    if (t1 < 1) throw DimensionError("ekmc: need at least one training column");

    EnsembleModel model;
    model.thresholds = sensor_thresholds(ecfg, problem.y_train());
    Vector theta = Vector::Ones(t1);
    std::optional<Matrix> first_prediction;
    double first_epsilon = 0.0;

    for (int k = 1; k <= ecfg.max_rounds; ++k) {
        SolverConfig round_cfg = scfg;
        round_cfg.seed = scfg.seed + static_cast<std::uint64_t>(k - 1);
        auto fit = solve(problem, g, round_cfg, theta);

        EnsembleRound round;
        round.test_prediction = predict(fit.factors);
        round.train_prediction = threshold_rows(reconstruct_train(fit.factors), model.thresholds);
        round.mispredicted = detail::column_mismatch(round.train_prediction, problem.y_train());
        round.report = std::move(fit.report);

        double wrong = 0.0;
        for (Eigen::Index i = 0; i < t1; ++i) {
            if (round.mispredicted[static_cast<std::size_t>(i)]) wrong += theta(i);
        }
        round.raw_epsilon = wrong / theta.sum();
        if (!first_prediction) {
            first_prediction = round.test_prediction;
            first_epsilon = round.raw_epsilon;
        }

        if (round.raw_epsilon >= 0.5) {
            if (ecfg.stop_on_weak) break;
            continue;
        }
        round.epsilon = std::clamp(round.raw_epsilon, ecfg.eps_min, 1.0 - ecfg.eps_min);
        round.beta = std::log((1.0 - round.epsilon) / round.epsilon);
        for (Eigen::Index i = 0; i < t1; ++i) {
            if (round.mispredicted[static_cast<std::size_t>(i)]) theta(i) *= std::exp(round.beta);
        }
        if (model.rounds.empty()) model.first_factors = fit.factors;
        const bool perfect = round.raw_epsilon == 0.0;
        model.rounds.push_back(std::move(round));
        if (perfect) break;
    }

    if (model.rounds.empty()) {
        throw DegenerateEnsembleError(std::move(*first_prediction), first_epsilon);
    }

    std::vector<Matrix> test_preds;
    std::vector<Matrix> train_preds;
    for (const auto& r : model.rounds) {
        test_preds.push_back(r.test_prediction);
        train_preds.push_back(r.train_prediction);
    }
    const auto betas = model.betas();
    model.final_weights = theta;
    model.combined = combine_rounds(test_preds, betas);
    model.thresholded = threshold_rows(model.combined, model.thresholds);
    model.train_vote = threshold_predictions(combine_rounds(train_preds, betas), 0.5);
    const auto miss = detail::column_mismatch(model.train_vote, problem.y_train());
    model.train_errors = std::count(miss.begin(), miss.end(), true);
    return model;
}

}  // namespace ekmc
