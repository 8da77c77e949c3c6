#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"

namespace dpvm {
namespace {

using test::s;
using test::Vec;

constexpr double kTol = 1e-9;

// Reference cosine distance written out independently of the library.
double ref_cosdist(const Vec& a, const Vec& b) {
  const double ab = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double aa = std::inner_product(a.begin(), a.end(), a.begin(), 0.0);
  const double bb = std::inner_product(b.begin(), b.end(), b.begin(), 0.0);
  return 1.0 - ab / std::sqrt(aa * bb);
}

Tensor2<double> mat(std::size_t n, std::vector<double> v) { return Tensor2<double>(n, n, std::move(v)); }

// ---------------------------------------------------------------------------
// Frozen example values. Each is first re-derived by the reference formulas
// above, then compared to the library.

TEST(Reconstruction, Examples) {
  const Vec v{1, 2, 3}, m{-1, 0.5};
  const Vec v_perp{2, -1, 0}, m_perp{0.5, 1};
  ASSERT_NEAR(ref_cosdist(v, v_perp) + ref_cosdist(m, m), 1.0, 1e-15);
  ASSERT_NEAR(ref_cosdist(v, v_perp) + ref_cosdist(m, m_perp), 2.0, 1e-15);

  EXPECT_NEAR(reconstruction_loss(s(v), s(v), s(m), s(m)), 0.0, kTol);
  EXPECT_NEAR(reconstruction_loss(s(v), s(v_perp), s(m), s(m)), 1.0, kTol);
  EXPECT_NEAR(reconstruction_loss(s(v), s(v_perp), s(m), s(m_perp)), 2.0, kTol);
}

TEST(Reconstruction, RangeAndZeroNorm) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto a = test::random_vec(rng, 5), b = test::random_vec(rng, 5);
    const auto c = test::random_vec(rng, 3), d = test::random_vec(rng, 3);
    const double l = reconstruction_loss(s(a), s(b), s(c), s(d));
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 4.0);
  }
  const Vec z{0, 0};
  EXPECT_THROW(reconstruction_loss(s({1, 1}), s(z), s({1, 1}), s({1, 1})), DegenerateInputError);
}

TEST(Contrastive, Examples) {
  const Vec c{0.3, -1.2, 2.0, 0.1};
  const Vec perp{1.2, 0.3, 0.0, 0.0};
  const double margin = 0.5;
  // Oracle: y=1 on identical codes is (1/2)(margin - 0)^2.
  const double identical_mismatched = 0.5 * margin * margin;
  ASSERT_DOUBLE_EQ(identical_mismatched, 0.125);
  ASSERT_NEAR(ref_cosdist(c, perp), 1.0, 1e-15);

  EXPECT_NEAR(contrastive_metric_loss(s(c), s(c), PairLabel::matched, margin), 0.0, kTol);
  EXPECT_NEAR(contrastive_metric_loss(s(c), s(c), PairLabel::mismatched, margin), 0.125, kTol);
  EXPECT_NEAR(contrastive_metric_loss(s(c), s(perp), PairLabel::mismatched, margin), 0.0, kTol);
}

TEST(Contrastive, ZeroIffProperty) {
  std::mt19937_64 rng(2);
  const double margin = 0.5;
  for (int t = 0; t < 200; ++t) {
    const auto a = test::random_vec(rng, 4), b = test::random_vec(rng, 4);
    const double d = ref_cosdist(a, b);
    const double pos = contrastive_metric_loss(s(a), s(b), PairLabel::matched, margin);
    const double neg = contrastive_metric_loss(s(a), s(b), PairLabel::mismatched, margin);
    EXPECT_GE(pos, 0.0);
    EXPECT_GE(neg, 0.0);
    EXPECT_EQ(pos == 0.0, d == 0.0);
    EXPECT_EQ(neg == 0.0, d >= margin);
    EXPECT_NEAR(pos, 0.5 * d * d, 1e-12);
  }
}

TEST(Discrimination, Examples) {
  const Vec zero{0, 0};
  const double two_ln2 = 2.0 * std::log(2.0);
  ASSERT_NEAR(two_ln2, 1.3862943611198906, 1e-15);
  EXPECT_NEAR(discrimination_loss(s(zero), s(zero), 0, 1), two_ln2, kTol);

  const Vec peaked_v{60, 0, 0}, peaked_m{0, 0, 60};
  EXPECT_LT(discrimination_loss(s(peaked_v), s(peaked_m), 0, 2), 1e-20);
  EXPECT_THROW(discrimination_loss(s(zero), s(zero), 2, 0), DataError);
}

TEST(Discrimination, StableForLargeLogits) {
  const Vec big{1000, -1000, 0};
  EXPECT_NEAR(cross_entropy(s(big), 1), 2000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(cross_entropy(s(big), 2)));
}

TEST(Intermodal, Examples) {
  const Vec a{1, 2, -1}, perp{1, 0, 1}, anti{-2, -4, 2};
  ASSERT_NEAR(-ref_cosdist(a, perp), -1.0, 1e-15);
  ASSERT_NEAR(-ref_cosdist(a, anti), -2.0, 1e-15);
  EXPECT_NEAR(intermodal_loss(s(a), s(a)), 0.0, kTol);
  EXPECT_NEAR(intermodal_loss(s(a), s(perp)), -1.0, kTol);
  EXPECT_NEAR(intermodal_loss(s(a), s(anti)), -2.0, kTol);
}

TEST(Fusion, Examples) {
  const Vec a{0.5, 0.5}, perp{-0.5, 0.5}, anti{-1, -1};
  EXPECT_NEAR(fusion_loss(s(a), s(a)), 0.0, kTol);
  EXPECT_NEAR(fusion_loss(s(a), s(perp)), 1.0, kTol);
  EXPECT_NEAR(fusion_loss(s(a), s(anti)), 2.0, kTol);
}

TEST(Composite, Examples) {
  LossConfig cfg;  // published weights
  ASSERT_EQ(cfg.lambda1, 0.8);
  ASSERT_EQ(cfg.lambda2, 1.0);
  ASSERT_EQ(cfg.mu1, 0.8);
  ASSERT_EQ(cfg.mu2, 1.0);
  ASSERT_EQ(cfg.k1, 0.5);
  ASSERT_EQ(cfg.k2, 0.5);
  ASSERT_EQ(cfg.k3, 1.0);

  LossComponents c;
  c.reconstruction = 1.0;
  c.content_metric = 0.5;
  EXPECT_NEAR(composite_losses(c, cfg).content, 0.8 * 1.0 + 1.0 * 0.5, kTol);
  EXPECT_NEAR(composite_losses(c, cfg).content, 1.3, kTol);

  const auto zero = composite_losses(LossComponents{}, cfg);
  EXPECT_EQ(zero.content, 0.0);
  EXPECT_EQ(zero.emotion, 0.0);
  EXPECT_EQ(zero.total, 0.0);

  // L_content = 1.3, L_emotion = 1.0, L_Fusion = 0.4 -> 0.5*1.3 + 0.5*1.0 + 0.4.
  LossComponents d;
  d.reconstruction = 1.0;
  d.content_metric = 0.5;
  d.discrimination = 0.0;
  d.intermodal = 1.0;
  d.fusion = 0.4;
  const auto r = composite_losses(d, cfg);
  EXPECT_NEAR(r.emotion, 1.0, kTol);
  EXPECT_NEAR(r.total, 1.55, kTol);
}

TEST(LossConfig, Validation) {
  LossConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.margin = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.margin = 2.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.k2 = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// ---------------------------------------------------------------------------

double ref_batch_metric(const Tensor2<double>& phi) {
  double sum = 0;
  for (std::size_t k = 0; k < phi.rows(); ++k)
    for (std::size_t i = 0; i < phi.cols(); ++i)
      if (i != k) sum += phi(k, i) - phi(k, k);
  return sum;
}

TEST(BatchMetric, Examples) {
  const auto a = mat(2, {0.9, 0.2, 0.1, 0.8});
  ASSERT_NEAR(ref_batch_metric(a), -1.4, 1e-15);
  EXPECT_NEAR(batch_metric_loss(a), -1.4, kTol);

  EXPECT_NEAR(batch_metric_loss(mat(3, std::vector<double>(9, 0.37))), 0.0, kTol);

  const auto eye = mat(3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  ASSERT_NEAR(ref_batch_metric(eye), -6.0, 1e-15);
  EXPECT_NEAR(batch_metric_loss(eye), -6.0, kTol);

  EXPECT_THROW(batch_metric_loss(mat(1, {1.0})), ConfigError);
}

double ref_ppml(const Tensor2<double>& phi, const std::vector<int>& pol) {
  double sum = 0;
  for (std::size_t k = 0; k < phi.rows(); ++k)
    for (std::size_t i = 0; i < phi.cols(); ++i) {
      if (i == k) continue;
      const double rho = phi(k, i) < phi(k, k) ? 0.0 : 1.0;
      const double p = std::abs(pol[k] - pol[i]);
      sum += p * rho * phi(k, i) - phi(k, k);
    }
  return sum;
}

std::vector<Polarity> pols(const std::vector<int>& v) {
  std::vector<Polarity> out;
  for (int x : v) out.push_back(static_cast<Polarity>(x));
  return out;
}

TEST(Ppml, GatingExamples) {
  const auto gated = mat(2, {0.9, 0.2, 0.1, 0.8});
  ASSERT_NEAR(ref_ppml(gated, {2, 0}), -1.7, 1e-15);
  EXPECT_NEAR(ppml<double>(gated, pols({2, 0})), -1.7, kTol);

  const auto open = mat(2, {0.2, 0.9, 0.8, 0.1});
  ASSERT_NEAR(ref_ppml(open, {2, 0}), 3.1, 1e-15);
  EXPECT_NEAR(ppml<double>(open, pols({2, 0})), 3.1, kTol);
}

TEST(Ppml, EqualPolaritiesLeaveOnlyPositiveTerms) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    Tensor2<double> phi(4, 4);
    for (auto& x : phi.values()) x = u(rng);
    double expected = 0;
    for (std::size_t k = 0; k < 4; ++k) expected -= 3 * phi(k, k);
    EXPECT_NEAR(ppml<double>(phi, pols({1, 1, 1, 1})), expected, 1e-12);
  }
}

TEST(Ppml, EqualsBatchMetricWhenEveryGateAndPenaltyIsOne) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 200; ++t) {
    // Negatives above their row's diagonal, polarities one apart.
    const double d0 = u(rng), d1 = u(rng);
    const double n01 = d0 + (1 - d0) * std::uniform_real_distribution<double>(0.01, 1)(rng);
    const double n10 = d1 + (1 - d1) * std::uniform_real_distribution<double>(0.01, 1)(rng);
    const auto phi = mat(2, {d0, n01, n10, d1});
    for (const auto& p : {std::vector<int>{0, 1}, std::vector<int>{1, 2}, std::vector<int>{2, 1}})
      EXPECT_NEAR(ppml<double>(phi, pols(p)), batch_metric_loss(phi), 1e-12);
  }
}

TEST(Ppml, GateRemovesContributionOfSubDiagonalNegatives) {
  auto phi = mat(3, {0.5, 0.4, 0.9, 0.2, 0.6, 0.1, 0.3, 0.7, 0.8});
  const auto pol = pols({0, 2, 1});
  const double base = ppml<double>(phi, pol);
  // phi(0,1) = 0.4 < phi(0,0): lowering it further changes nothing.
  for (double v : {0.3, 0.0, -0.5, -1.0}) {
    phi(0, 1) = v;
    EXPECT_EQ(ppml<double>(phi, pol), base);
  }
  Tensor2<double> d_phi;
  ppml<double>(phi, pol, &d_phi);
  EXPECT_EQ(d_phi(0, 1), 0.0);
  EXPECT_EQ(d_phi(0, 2), 1.0);  // ungated, P = |0 - 1|
  EXPECT_EQ(d_phi(0, 0), -2.0);
}

TEST(Ppml, Errors) {
  const auto phi = mat(2, {0.9, 0.2, 0.1, 0.8});
  EXPECT_THROW(ppml<double>(phi, pols({0})), DataError);
  EXPECT_THROW(ppml<double>(mat(1, {1.0}), pols({0})), ConfigError);
}

TEST(CosineLosses, ScaleInvariance) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    const auto a = test::random_vec(rng, 6), b = test::random_vec(rng, 6);
    Vec a2 = a, b2 = b;
    for (auto& x : a2) x *= 4.5;
    for (auto& x : b2) x *= 0.01;
    EXPECT_NEAR(reconstruction_loss(s(a2), s(b2), s(b), s(a2)), reconstruction_loss(s(a), s(b), s(b2), s(a)), 1e-12);
    EXPECT_NEAR(contrastive_metric_loss(s(a2), s(b2), PairLabel::mismatched, 0.5),
                contrastive_metric_loss(s(a), s(b), PairLabel::mismatched, 0.5), 1e-12);
    EXPECT_NEAR(intermodal_loss(s(a2), s(b2)), intermodal_loss(s(a), s(b)), 1e-12);
    EXPECT_NEAR(fusion_loss(s(a2), s(b2)), fusion_loss(s(a), s(b)), 1e-12);
  }
}

TEST(SimilarityMatrix, EntriesAndDiagonal) {
  const Tensor2<double> v(2, 2, {1, 0, 0, 1}), m(2, 2, {1, 1, 0, 2});
  const auto phi = similarity_matrix(v, m);
  EXPECT_NEAR(phi(0, 0), 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(phi(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(phi(1, 1), 1.0, 1e-15);
  for (double x : phi.values()) {
    EXPECT_GE(x, -1.0);
    EXPECT_LE(x, 1.0);
  }
}

}  // namespace
}  // namespace dpvm
