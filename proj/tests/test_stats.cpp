#include <gtest/gtest.h>

#include <cmath>

#include "ovae/stats.hpp"
#include "support/oracles.hpp"

using namespace ovae;
using namespace ovae::stats;

namespace {

RiskEstimate est(double value, double se, double t) {
  RiskEstimate e;
  e.value = value;
  e.std_error = se;
  e.wall_time_s = t;
  return e;
}

Matrix normal_points(Eigen::Index n, Eigen::Index d, Rng& rng, double shift = 0.0) {
  std::normal_distribution<double> N(0.0, 1.0);
  Matrix m(n, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < n; ++i) m(i, j) = N(rng) + shift;
  return m;
}

}  // namespace

TEST(MonteCarlo, ConstantImpacts) {
  const std::vector<double> h(10, 1.0);
  const auto e = mc_estimate(h);
  EXPECT_EQ(e.value, 1.0);
  EXPECT_EQ(e.std_error, 0.0);
  EXPECT_EQ(e.n_samples, 10);
}

TEST(MonteCarlo, HandExample) {
  // Sample SD of {0,0,0,8760} is 4380, so SE = 4380 / 2.
  const std::vector<double> h{0, 0, 0, 8760};
  const auto e = mc_estimate(h);
  EXPECT_DOUBLE_EQ(e.value, 2190.0);
  EXPECT_DOUBLE_EQ(e.std_error, 2190.0);
}

TEST(MonteCarlo, BernoulliCoverage) {
  Rng rng(1);
  std::bernoulli_distribution B(0.3);
  std::vector<double> h(100000);
  for (auto& v : h) v = B(rng) ? 1.0 : 0.0;
  const auto e = mc_estimate(h);
  EXPECT_NEAR(e.value, 0.3, 4.0 * e.std_error);
  EXPECT_NEAR(e.std_error, std::sqrt(0.21 / 1e5), 1e-4 * 0.21);
}

TEST(MonteCarlo, RejectsTinyOrNonFinite) {
  EXPECT_THROW(mc_estimate(std::vector<double>{1.0}), Error);
  EXPECT_THROW(mc_estimate(std::vector<double>{1.0, std::nan("")}), Error);
}

TEST(ImportanceSampling, UnitWeightsMatchMonteCarloBitwise) {
  Rng rng(2);
  std::uniform_real_distribution<double> U(0.0, 100.0);
  std::vector<double> h(500), w(500, 1.0);
  for (auto& v : h) v = U(rng);
  const auto a = is_estimate(h, w), b = mc_estimate(h);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(ImportanceSampling, RejectsBadWeights) {
  const std::vector<double> h{1, 2};
  EXPECT_THROW(is_estimate(h, std::vector<double>{1.0, -1.0}), Error);
  EXPECT_THROW(is_estimate(h, std::vector<double>{1.0}), Error);
}

TEST(ImportanceSampling, DiscreteEnumeration) {
  // Three states with p = (0.7, 0.2, 0.1), q = (0.2, 0.3, 0.5), h = (0, 1, 10).
  const std::vector<double> p{0.7, 0.2, 0.1}, q{0.2, 0.3, 0.5}, hv{0.0, 1.0, 10.0};
  double exact = 0.0;
  for (int k = 0; k < 3; ++k) exact += p[std::size_t(k)] * hv[std::size_t(k)];
  Rng rng(3);
  std::discrete_distribution<int> draw(q.begin(), q.end());
  const int n = 200000;
  std::vector<double> h(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < std::size_t(n); ++i) {
    const int k = draw(rng);
    h[i] = hv[std::size_t(k)];
    w[i] = p[std::size_t(k)] / q[std::size_t(k)];
  }
  const auto e = is_estimate(h, w);
  EXPECT_NEAR(e.value, exact, 4.0 * e.std_error);
}

TEST(Speedup, Identities) {
  const auto a = est(18.0, 0.4, 100.0), b = est(20.0, 0.2, 50.0);
  EXPECT_DOUBLE_EQ(speedup(a, a), 1.0);
  EXPECT_NEAR(speedup(a, b) * speedup(b, a), 1.0, 1e-14);
  EXPECT_NEAR(speedup(est(10.0, 0.5, 1.0), est(10.0, 1.0, 1.0)), 4.0, 1e-14);
  EXPECT_NEAR(speedup(est(10.0, 1.0, 1.0), est(10.0, 1.0, 2.0)), 2.0, 1e-14);
  EXPECT_THROW(speedup(est(0.0, 1.0, 1.0), a), Error);
  EXPECT_THROW(speedup(est(1.0, 0.0, 1.0), a), Error);
}

TEST(Speedup, TableOneFigures) {
  // OVAE+IS over OVAE, published estimates, SEs and wall times.
  const double lole = speedup(est(18.43, 0.20, 4666), est(18.76, 0.40, 4155));
  const double eens = speedup(est(4.137e4, 0.040e4, 4666), est(4.50e4, 0.17e4, 4155));
  EXPECT_NEAR(lole, 3.5, 0.15 * 3.5);
  EXPECT_NEAR(eens, 14.5, 0.15 * 14.5);
}

TEST(Spearman, PerfectAndAntiPerfect) {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{10, 20, 25, 100, 1000}, z{5, 4, 3, 2, 1};
  EXPECT_NEAR(spearman(x, y), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, z), -1.0, 1e-15);
}

TEST(Spearman, HandExample) {
  // Ranks (1..5) vs (2,1,4,3,5): sum d^2 = 4, rho = 1 - 6*4/(5*24) = 0.8.
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 1, 4, 3, 5};
  EXPECT_NEAR(spearman(x, y), 0.8, 1e-15);
}

TEST(Spearman, TiesUseAverageRanks) {
  // x ranks (1.5,1.5,3,4), y ranks (1,2,3,4): Pearson of the rank vectors.
  const std::vector<double> x{1, 1, 2, 3}, y{1, 2, 3, 4};
  const double mx = 2.5;
  const std::vector<double> rx{1.5, 1.5, 3, 4}, ry{1, 2, 3, 4};
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 4; ++i) {
    sxy += (rx[std::size_t(i)] - mx) * (ry[std::size_t(i)] - mx);
    sxx += (rx[std::size_t(i)] - mx) * (rx[std::size_t(i)] - mx);
    syy += (ry[std::size_t(i)] - mx) * (ry[std::size_t(i)] - mx);
  }
  EXPECT_NEAR(spearman(x, y), sxy / std::sqrt(sxx * syy), 1e-15);
}

TEST(Spearman, InvariantUnderMonotoneTransforms) {
  Rng rng(4);
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<double> x(300), y(300), fx(300), gy(300);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = N(rng);
    y[i] = x[i] + N(rng);
    fx[i] = std::exp(x[i]);
    gy[i] = y[i] * y[i] * y[i];
  }
  EXPECT_NEAR(spearman(x, y), spearman(fx, gy), 1e-14);
}

TEST(KolmogorovSmirnov, IdenticalSamples) {
  const std::vector<double> a{0.3, 1.2, -0.7, 2.2};
  const auto r = ks_test(a, a);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(KolmogorovSmirnov, DisjointSupports) {
  const std::vector<double> a{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, b{10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  const auto r = ks_test(a, b);
  EXPECT_EQ(r.statistic, 1.0);
  EXPECT_LT(r.p_value, 1e-3);
}

TEST(KolmogorovSmirnov, HandStatistic) {
  // ECDF gap is largest after the two smallest values of a: 2/3 - 0.
  const std::vector<double> a{1, 2, 5}, b{3, 4, 6};
  EXPECT_NEAR(ks_test(a, b).statistic, 2.0 / 3.0, 1e-15);
}

TEST(KolmogorovSmirnov, NullPValuesAreUniform) {
  Rng rng(5);
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<double> p;
  for (int r = 0; r < 5000; ++r) {
    std::vector<double> a(1000), b(1100);
    for (auto& v : a) v = N(rng);
    for (auto& v : b) v = N(rng);
    p.push_back(ks_test(a, b).p_value);
  }
  EXPECT_GT(oracle::chi2_uniform_p(p), 0.001);
}

TEST(KolmogorovSmirnov, SurvivalFunctionKnownValues) {
  // Standard Kolmogorov critical values: Q(1.3581) = 0.05, Q(1.6276) = 0.01.
  EXPECT_NEAR(kolmogorov_q(1.3581), 0.05, 1e-4);
  EXPECT_NEAR(kolmogorov_q(1.6276), 0.01, 1e-4);
  EXPECT_NEAR(kolmogorov_q(0.8276), 0.5, 1e-3);
  // Both series agree at the switch point.
  EXPECT_NEAR(kolmogorov_q(1.18 - 1e-9), kolmogorov_q(1.18 + 1e-9), 1e-8);
}

TEST(Energy, IdenticalMultisetsGiveZero) {
  Rng rng(6);
  const Matrix a = normal_points(20, 3, rng);
  EXPECT_EQ(energy_statistic(a, a), 0.0);
  Rng prng(7);
  const auto r = energy_test(a, a, prng, 50);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(Energy, HandExampleOneDimension) {
  // a = {0}, b = {1}: E = 2*1 - 0 - 0 = 2, scaled by 1*1/2.
  const Matrix a = Matrix::Constant(1, 1, 0.0), b = Matrix::Constant(1, 1, 1.0);
  EXPECT_NEAR(energy_statistic(a, b), 1.0, 1e-15);
}

TEST(Energy, NonNegative) {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) EXPECT_GE(energy_statistic(normal_points(7, 2, rng), normal_points(9, 2, rng)), 0.0);
}

TEST(Energy, SeparatedCloudsReachMinimumPValue) {
  Rng rng(9);
  const Matrix a = normal_points(30, 2, rng), b = normal_points(30, 2, rng, 10.0);
  const auto r = energy_test(a, b, rng, 200);
  EXPECT_LE(r.p_value, 1.0 / 201.0 + 1e-15);
}

TEST(Energy, NullPValuesAreUniform) {
  Rng rng(10);
  std::vector<double> p;
  for (int r = 0; r < 300; ++r) p.push_back(energy_test(normal_points(25, 2, rng), normal_points(25, 2, rng), rng, 99).p_value);
  EXPECT_GT(oracle::chi2_uniform_p(p), 0.001);
}

TEST(Energy, DimensionMismatch) {
  Rng rng(11);
  EXPECT_THROW(energy_statistic(normal_points(3, 2, rng), normal_points(3, 3, rng)), Error);
}

TEST(Autoencoder, OnManifoldErrorsBelowOffManifold) {
  // Training states lie on a 2-D plane in 6-D; off-manifold states are
  // uniform in the unit cube.
  Rng rng(12);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto on_plane = [&](Eigen::Index n) {
    Matrix x(6, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = U(rng), t = U(rng);
      x.col(i) << s, t, 0.5 * (s + t), 0.5 * s + 0.2, 0.8 - 0.5 * t, 0.5;
    }
    return x;
  };
  const Matrix train = on_plane(2000), held = on_plane(500);
  const Matrix train_subset = train.leftCols(500);
  Matrix off(6, 500);
  for (Eigen::Index i = 0; i < off.size(); ++i) off.data()[i] = U(rng);
  AeConfig cfg;
  cfg.hidden = {16, 16};
  cfg.latent_dim = 2;
  cfg.epochs = 40;
  cfg.seed = 3;
  const auto ae = train_autoencoder(train, cfg);
  const double m_train = median(reconstruction_errors(ae, train));
  const double m_held = median(reconstruction_errors(ae, held));
  const double m_off = median(reconstruction_errors(ae, off));
  EXPECT_LE(median(reconstruction_errors(ae, train_subset)), m_held);
  EXPECT_LT(m_held, 2.0 * m_train + 1e-6);
  EXPECT_LT(m_train, m_off);
  EXPECT_LT(m_held, m_off);
}

TEST(Autoencoder, ConstantDataReconstructsExactlyEnough) {
  const Matrix x = Matrix::Constant(3, 200, 0.4);
  AeConfig cfg;
  cfg.hidden = {8};
  cfg.latent_dim = 1;
  cfg.epochs = 200;
  cfg.seed = 4;
  const auto err = reconstruction_errors(train_autoencoder(x, cfg), x);
  EXPECT_LT(median(err), 1e-4);
}

TEST(Autoencoder, DeterministicForSeed) {
  Rng rng(13);
  const Matrix x = normal_points(4, 100, rng);
  AeConfig cfg;
  cfg.hidden = {6};
  cfg.latent_dim = 2;
  cfg.epochs = 5;
  EXPECT_EQ(reconstruction_errors(train_autoencoder(x, cfg), x), reconstruction_errors(train_autoencoder(x, cfg), x));
}

TEST(Median, EvenAndOdd) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), Error);
}

TEST(RepeatedTests, SameDistributionGivesSpreadPValues) {
  Rng rng(14);
  Matrix a(2, 3000), b(2, 3000);
  std::normal_distribution<double> N(0.0, 1.0);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = N(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = N(rng);
  const auto ks = repeated_ks(a, b, 200, 66, 15);
  ASSERT_EQ(ks.p_values.size(), 200u);
  ASSERT_EQ(ks.p_values[0].size(), 2u);
  double mean = 0.0;
  for (const auto& r : ks.p_values) mean += r[0];
  mean /= 200.0;
  EXPECT_GT(mean, 0.35);
  EXPECT_EQ(repeated_ks(a, b, 20, 66, 15, 1).p_values, repeated_ks(a, b, 20, 66, 15, 3).p_values);
  const auto en = repeated_energy(a, b, 10, 30, 50, 16);
  EXPECT_EQ(en.p_values.size(), 10u);
  EXPECT_EQ(en.p_values[0].size(), 1u);
}
