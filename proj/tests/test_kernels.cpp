#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>
#include <random>

#include "ekmc/kernels.hpp"

using namespace ekmc;

namespace {

Matrix random_binary(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.4);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = coin(rng) ? 1.0 : 0.0;
    return m;
}

KernelSpec spec_of(KernelKind kind)
{
    KernelSpec s;
    s.kind = kind;
    return s;
}

}  // namespace

TEST(Gram, LinearOrthonormalColumns)
{
    Matrix tr(2, 1), te(2, 1);
    tr << 1, 0;
    te << 0, 1;
    const auto g = gram(spec_of(KernelKind::linear), tr, te);
    EXPECT_EQ(g.k, Matrix::Identity(2, 2));
    EXPECT_EQ(g.t1, 1);
    EXPECT_EQ(g.t2, 1);
}

TEST(Gram, RbfHandExample)
{
    KernelSpec s;
    s.kind = KernelKind::rbf;
    s.gamma = 0.5;
    Matrix tr(2, 1), te(2, 1);
    tr << 0, 0;
    te << 1, 1;
    const auto g = gram(s, tr, te);
    EXPECT_NEAR(g.k(0, 1), std::exp(-1.0), 1e-15);
    EXPECT_NEAR(g.k(0, 1), 0.367879, 1e-6);
    EXPECT_EQ(g.k(0, 0), 1.0);
    EXPECT_EQ(g.k(1, 1), 1.0);
}

TEST(Gram, RbfDefaultGammaIsInverseDimension)
{
    KernelSpec s;
    EXPECT_DOUBLE_EQ(s.resolved_gamma(15), 1.0 / 15.0);
    Matrix tr(4, 1), te(4, 1);
    tr << 0, 0, 0, 0;
    te << 1, 1, 0, 0;
    EXPECT_NEAR(gram(s, tr, te).k(0, 1), std::exp(-0.5), 1e-15);
}

TEST(Gram, PolynomialHandExample)
{
    KernelSpec s;
    s.kind = KernelKind::polynomial;
    s.degree = 3;
    s.coef0 = 1.0;
    Matrix tr(2, 1), te(2, 1);
    tr << 1, 1;
    te << 1, 0;
    const auto g = gram(s, tr, te);
    EXPECT_DOUBLE_EQ(g.k(0, 1), 8.0);
    EXPECT_DOUBLE_EQ(g.k(0, 0), 27.0);
}

TEST(Gram, LinearEqualsInnerProducts)
{
    const Matrix tr = random_binary(12, 40, 1);
    const Matrix te = random_binary(12, 9, 2);
    Matrix cols(12, 49);
    cols << tr, te;
    const auto g = gram(spec_of(KernelKind::linear), tr, te);
    EXPECT_LE((g.k - cols.transpose() * cols).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Gram, SymmetricAndPsd)
{
    for (auto kind : {KernelKind::linear, KernelKind::rbf, KernelKind::polynomial}) {
        const auto g = gram(spec_of(kind), random_binary(10, 60, 3), random_binary(10, 15, 4));
        EXPECT_LE((g.k - g.k.transpose()).cwiseAbs().maxCoeff(), 1e-12) << to_string(kind);
        const double smallest = Eigen::SelfAdjointEigenSolver<Matrix>(g.k, Eigen::EigenvaluesOnly)
                                    .eigenvalues()
                                    .minCoeff();
        EXPECT_GE(smallest, -1e-8 * g.k.norm()) << to_string(kind);
    }
}

TEST(Gram, ColumnPermutationPermutesGram)
{
    const Matrix tr = random_binary(6, 20, 5);
    const Matrix te = random_binary(6, 5, 6);
    const auto g = gram(spec_of(KernelKind::rbf), tr, te);

    std::vector<int> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(7));
    Matrix all(6, 25);
    all << tr, te;
    Matrix shuffled(6, 25);
    for (int j = 0; j < 25; ++j) shuffled.col(j) = all.col(perm[static_cast<std::size_t>(j)]);
    const auto gp = gram(spec_of(KernelKind::rbf), shuffled.leftCols(20), shuffled.rightCols(5));
    for (int i = 0; i < 25; ++i)
        for (int j = 0; j < 25; ++j)
            ASSERT_NEAR(gp.k(i, j), g.k(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]),
                        1e-14);
}

TEST(Gram, Errors)
{
    EXPECT_THROW(gram(spec_of(KernelKind::linear), Matrix::Zero(2, 3), Matrix::Zero(3, 1)), DimensionError);
    Matrix bad = Matrix::Zero(2, 2);
    bad(1, 1) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(gram(spec_of(KernelKind::linear), bad, Matrix::Zero(2, 1)), DataError);
    KernelSpec s;
    s.gamma = -1.0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = spec_of(KernelKind::polynomial);
    s.degree = 0;
    EXPECT_THROW(s.validate(), ConfigError);
    EXPECT_THROW(parse_kernel_kind("sigmoid"), ConfigError);
}

TEST(KernelBlocks, IdentitySlices)
{
    GramMatrix g{Matrix::Identity(3, 3), 2, 1};
    const auto b = kernel_blocks(g);
    EXPECT_EQ(b.train_all, Matrix::Identity(3, 3).topRows(2));
    EXPECT_EQ(b.test_all, Matrix::Identity(3, 3).bottomRows(1));
}

TEST(KernelBlocks, PartitionAndSymmetry)
{
    const auto g = gram(spec_of(KernelKind::rbf), random_binary(5, 30, 8), random_binary(5, 7, 9));
    const auto b = kernel_blocks(g);
    Matrix stacked(37, 37);
    stacked << b.train_all, b.test_all;
    EXPECT_EQ(stacked, g.k);
    EXPECT_EQ(b.train_all.rightCols(7), b.test_all.leftCols(30).transpose());
}
