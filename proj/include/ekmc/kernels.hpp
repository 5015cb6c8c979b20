#pragma once

#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <string>

#include "ekmc/errors.hpp"
#include "ekmc/problem.hpp"

namespace ekmc {

enum class KernelKind { linear, rbf, polynomial };

inline const char* to_string(KernelKind kind)
{
    switch (kind) {
        case KernelKind::linear: return "linear";
        case KernelKind::rbf: return "rbf";
        case KernelKind::polynomial: return "polynomial";
    }
    return "unknown";
}

inline KernelKind parse_kernel_kind(const std::string& name)
{
    if (name == "linear") return KernelKind::linear;
    if (name == "rbf") return KernelKind::rbf;
    if (name == "polynomial" || name == "poly") return KernelKind::polynomial;
    throw ConfigError("unknown kernel '" + name + "' (expected linear, rbf or polynomial)");
}

/*
 * k(x, y) for the supported families:
 *   linear      x'y
 *   rbf         exp(-gamma |x - y|^2)
 *   polynomial  (x'y + coef0)^degree
 * An unset gamma resolves to 1 / (input dimension).
 */
struct KernelSpec {
    KernelKind kind = KernelKind::rbf;
    std::optional<double> gamma;
    int degree = 2;
    double coef0 = 1.0;

    void validate() const
    {
        if (kind == KernelKind::rbf && gamma && !(*gamma > 0.0 && std::isfinite(*gamma))) {
            throw ConfigError("rbf kernel needs gamma > 0");
        }
        if (kind == KernelKind::polynomial && degree < 1) {
            throw ConfigError("polynomial kernel needs degree >= 1");
        }
    }

    double resolved_gamma(Eigen::Index input_dim) const
    {
        if (gamma) return *gamma;
        return 1.0 / static_cast<double>(std::max<Eigen::Index>(input_dim, 1));
    }

    friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

/*
 * Kernel values over all input columns [X_tr | X_te]: the only view of the
 * feature map the solver ever needs.
 */
struct GramMatrix {
    Matrix k;
    Eigen::Index t1 = 0;
    Eigen::Index t2 = 0;

    Eigen::Index size() const noexcept { return t1 + t2; }

    // Phi_tr' [Phi_tr | Phi_te]
    auto train_rows() const { return k.topRows(t1); }
    // Phi_te' [Phi_tr | Phi_te]
    auto test_rows() const { return k.bottomRows(t2); }
};

inline GramMatrix gram(const KernelSpec& spec, const Matrix& x_train, const Matrix& x_test)
{
    spec.validate();
    if (x_train.rows() != x_test.rows()) {
        throw DimensionError("gram: X_tr has " + std::to_string(x_train.rows()) + " rows, X_te has " +
                             std::to_string(x_test.rows()));
    }
    if (!x_train.allFinite() || !x_test.allFinite()) {
        throw DataError("gram: non-finite input");
    }

    const Eigen::Index t1 = x_train.cols();
    const Eigen::Index t2 = x_test.cols();
    Matrix cols(x_train.rows(), t1 + t2);
    cols << x_train, x_test;

    Matrix inner = cols.transpose() * cols;
    Matrix k;
    switch (spec.kind) {
        case KernelKind::linear:
            k = std::move(inner);
            break;
        case KernelKind::polynomial:
            k = (inner.array() + spec.coef0).pow(static_cast<double>(spec.degree)).matrix();
            break;
        case KernelKind::rbf: {
            const double gamma = spec.resolved_gamma(cols.rows());
            const Vector sq = inner.diagonal();
            k.resize(inner.rows(), inner.cols());
            for (Eigen::Index j = 0; j < k.cols(); ++j) {
                for (Eigen::Index i = 0; i < k.rows(); ++i) {
                    // |a-b|^2 via the expansion can dip below zero by rounding
                    const double d2 = std::max(0.0, sq(i) + sq(j) - 2.0 * inner(i, j));
                    k(i, j) = std::exp(-gamma * d2);
                }
                k(j, j) = 1.0;
            }
            break;
        }
    }
    Matrix sym = 0.5 * (k + k.transpose());
    return GramMatrix{std::move(sym), t1, t2};
}

inline GramMatrix gram(const KernelSpec& spec, const JointProblem& problem)
{
    return gram(spec, problem.x_train(), problem.x_test());
}

struct KernelBlocks {
    Matrix train_all;  // t1 x (t1 + t2)
    Matrix test_all;   // t2 x (t1 + t2)
};

inline KernelBlocks kernel_blocks(const GramMatrix& g)
{
    return KernelBlocks{g.k.topRows(g.t1), g.k.bottomRows(g.t2)};
}

}  // namespace ekmc
