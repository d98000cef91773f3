#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mspca/simulate.hpp"
#include "mspca/spectral.hpp"
#include "oracles.hpp"

using namespace mspca;
using oracle::dense_cov_eigenvalues;
using oracle::gaussian_matrix;

namespace {

double max_residual(const DataMatrix& x, const SpectrumResult& s) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < s.top_k(); ++j) {
    const double lambda = s.eigenvalues(j);
    const double r = (cov_apply(x, s.eigenvectors.col(j)) - lambda * s.eigenvectors.col(j)).norm();
    worst = std::max(worst, r / std::max(1.0, lambda));
  }
  return worst;
}

double orthonormality_error(const Eigen::MatrixXd& v) {
  return (v.transpose() * v - Eigen::MatrixXd::Identity(v.cols(), v.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(DataMatrix, Validation) {
  EXPECT_THROW(DataMatrix(Eigen::MatrixXd(0, 3)), ArgumentError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
  bad(1, 1) = std::nan("");
  EXPECT_THROW(DataMatrix{bad}, DataError);
  bad(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(DataMatrix{bad}, DataError);
  const DataMatrix x(Eigen::MatrixXd::Zero(3, 6));
  EXPECT_DOUBLE_EQ(x.aspect_ratio(), 0.5);
}

TEST(SampleCovEigs, ZeroMatrix) {
  for (auto [d, n] : {std::pair{4, 7}, std::pair{7, 4}}) {
    const DataMatrix x(Eigen::MatrixXd::Zero(d, n));
    const auto s = sample_cov_eigs(x, d);
    EXPECT_EQ(s.eigenvalues.size(), d);
    EXPECT_EQ(s.eigenvalues.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LT(orthonormality_error(s.eigenvectors), 1e-12);
  }
}

TEST(SampleCovEigs, ScaledIdentity) {
  const Eigen::Index d = 6;
  const DataMatrix x(std::sqrt(6.0) * Eigen::MatrixXd::Identity(d, d));
  const auto s = sample_cov_eigs(x, d);
  for (Eigen::Index i = 0; i < d; ++i) EXPECT_NEAR(s.eigenvalues(i), 1.0, 1e-14);
  // Degenerate spectrum: check the span, which must be the whole space, and
  // that every vector is a standard basis vector up to the sign convention.
  EXPECT_LT(orthonormality_error(s.eigenvectors), 1e-12);
  for (Eigen::Index j = 0; j < d; ++j) EXPECT_NEAR(s.eigenvectors.col(j).cwiseAbs().maxCoeff(), 1.0, 1e-12);
}

TEST(SampleCovEigs, SmallGaussianMatchesBruteForce) {
  const DataMatrix x(gaussian_matrix(5, 8, 1));
  const auto s = sample_cov_eigs(x, 5);
  const auto oracle = dense_cov_eigenvalues(x.values());
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(s.eigenvalues(i), oracle(i), 1e-10);
  EXPECT_LT(max_residual(x, s), 1e-8);
}

TEST(SampleCovEigs, Errors) {
  const DataMatrix x(gaussian_matrix(3, 4, 2));
  EXPECT_THROW(sample_cov_eigs(x, 4), ArgumentError);
  EXPECT_THROW(sample_cov_eigs(x, -1), ArgumentError);
}

TEST(SampleCovEigs, SignConvention) {
  const DataMatrix x(gaussian_matrix(12, 20, 3));
  const auto s = sample_cov_eigs(x, 12);
  for (Eigen::Index j = 0; j < s.top_k(); ++j) {
    Eigen::Index arg = 0;
    s.eigenvectors.col(j).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(s.eigenvectors(arg, j), 0.0);
  }
}

TEST(SampleCovEigs, GramTrickEquivalence) {
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> size(1, 50);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = size(gen), n = size(gen);
    const DataMatrix x(gaussian_matrix(d, n, 100 + static_cast<unsigned>(rep)));
    const auto direct = sample_cov_eigs(x, d, GramMode::direct);
    const auto gram = sample_cov_eigs(x, d, GramMode::gram);
    ASSERT_EQ(direct.eigenvalues.size(), gram.eigenvalues.size());
    const double scale = std::max(1.0, direct.eigenvalues(0));
    for (Eigen::Index i = 0; i < d; ++i) EXPECT_NEAR(direct.eigenvalues(i), gram.eigenvalues(i), 1e-9 * scale);
    EXPECT_LT(orthonormality_error(gram.eigenvectors), 1e-8);
    EXPECT_LT(max_residual(x, gram), 1e-8);
    EXPECT_LT(max_residual(x, direct), 1e-8);
    // Vectors of well separated non-zero eigenvalues agree up to sign.
    const Eigen::Index rank = std::min(d, n);
    for (Eigen::Index i = 0; i < rank; ++i) {
      const double lam = direct.eigenvalues(i);
      const double gap_lo = i + 1 < d ? lam - direct.eigenvalues(i + 1) : 1.0;
      const double gap_hi = i > 0 ? direct.eigenvalues(i - 1) - lam : 1.0;
      if (gap_lo > 1e-6 && gap_hi > 1e-6 && lam > 1e-8) {
        EXPECT_GT(std::abs(direct.eigenvectors.col(i).dot(gram.eigenvectors.col(i))), 1 - 1e-8)
            << "d=" << d << " n=" << n << " i=" << i;
      }
    }
  }
}

TEST(SampleCovEigs, TraceAndNonNegativity) {
  for (auto [d, n] : {std::pair{30, 10}, std::pair{10, 30}, std::pair{25, 25}}) {
    const DataMatrix x(gaussian_matrix(d, n, 5));
    const auto s = sample_cov_eigs(x, 0);
    const double trace = x.values().squaredNorm() / n;
    EXPECT_NEAR(s.eigenvalues.sum(), trace, 1e-8 * trace);
    EXPECT_TRUE(std::is_sorted(s.eigenvalues.data(), s.eigenvalues.data() + d, std::greater<>()));
    EXPECT_GE(s.eigenvalues.minCoeff(), -1e-10 * s.eigenvalues(0));
  }
}

TEST(CovApply, Examples) {
  const int n = 7;
  const DataMatrix x(std::sqrt(static_cast<double>(n)) * Eigen::MatrixXd::Identity(n, n));
  const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(n, 0);
  EXPECT_LT((cov_apply(x, e1) - e1).norm(), 1e-14);
  EXPECT_EQ(cov_apply(x, Eigen::VectorXd::Zero(n)).norm(), 0.0);

  const Eigen::MatrixXd m = gaussian_matrix(20, 30, 9);
  const DataMatrix y(m);
  const Eigen::VectorXd u = gaussian_matrix(20, 1, 10).col(0);
  const Eigen::VectorXd dense = (m * m.transpose() / 30.0) * u;
  EXPECT_LT((cov_apply(y, u) - dense).norm(), 1e-12 * dense.norm());
  EXPECT_THROW(cov_apply(y, Eigen::VectorXd::Zero(19)), ArgumentError);
}

TEST(LeadingSpectrum, KrylovMatchesDense) {
  SpikedCovSpec cov{{4.0, 2.0}};
  const auto in = generate_inliers(400, 500, cov, 21);
  SpectrumRequest req;
  req.value_floor = 3.0;
  req.vector_floor = 3.0;
  req.min_vectors = 3;
  req.solver = Solver::dense;
  const auto dense = leading_spectrum(in.X, req);
  req.solver = Solver::krylov;
  const auto krylov = leading_spectrum(in.X, req);
  EXPECT_FALSE(krylov.complete);
  ASSERT_GE(krylov.eigenvalues.size(), 3);
  for (Eigen::Index i = 0; i < krylov.eigenvalues.size(); ++i) {
    EXPECT_NEAR(krylov.eigenvalues(i), dense.eigenvalues(i), 1e-9);
  }
  // Every eigenvalue above the floor is present.
  Eigen::Index above = 0;
  while (dense.eigenvalues(above) > 3.0) ++above;
  EXPECT_GE(krylov.eigenvalues.size(), above);
  ASSERT_GE(krylov.top_k(), 3);
  EXPECT_LT(max_residual(in.X, krylov), 1e-8);
  EXPECT_LT(orthonormality_error(krylov.eigenvectors), 1e-8);
  for (Eigen::Index j = 0; j < 2; ++j) {
    EXPECT_GT(std::abs(krylov.eigenvectors.col(j).dot(dense.eigenvectors.col(j))), 1 - 1e-8);
  }
}

TEST(LeadingSpectrum, ExtraVectors) {
  const auto in = generate_inliers(60, 80, SpikedCovSpec{{5.0}}, 4);
  SpectrumRequest req;
  req.vector_floor = 4.0;
  req.extra_vectors = 2;
  const auto s = leading_spectrum(in.X, req);
  EXPECT_EQ(s.top_k(), 3);
}

TEST(Esd, Examples) {
  auto mu = esd_of({4.0, 1.0, 0.0});
  EXPECT_EQ(mu.atoms(), std::vector<double>({4.0, 1.0, 0.0}));
  for (double w : mu.weights()) EXPECT_NEAR(w, 1.0 / 3.0, 1e-16);
  mu = esd_of({2.0});
  EXPECT_EQ(mu.weights(), std::vector<double>({1.0}));
  EXPECT_THROW(esd_of({}), ArgumentError);
}

TEST(PureNoise, SpectrumInsideEdgeWindow) {
  const int d = 1000;
  const double slack = 3.0 * std::pow(1000.0, -2.0 / 3.0);
  int inside = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    const auto in = generate_inliers(d, d, {}, 500 + static_cast<unsigned>(s));
    const auto spec = sample_cov_eigs(in.X, 0);
    // lambda_- = 0 at c = 1; the upper edge is the binding check.
    if (spec.eigenvalues(0) <= 4.0 + slack && spec.eigenvalues(d - 1) >= -slack) ++inside;
  }
  EXPECT_GE(inside, 19);
}
