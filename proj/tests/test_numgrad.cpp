#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"

namespace dpvm {
namespace {

using test::s;
using test::Vec;

TEST(Cosine, BasicValues) {
  EXPECT_DOUBLE_EQ(cosine_similarity(s({1, 0}), s({1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(s({1, 0}), s({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(s({1, 0}), s({-1, 0})), -1.0);
  EXPECT_DOUBLE_EQ(cosine_distance(s({1, 0}), s({-1, 0})), 2.0);
}

TEST(Cosine, ZeroNormIsDegenerate) {
  EXPECT_THROW(cosine_similarity(s({0, 0}), s({1, 0})), DegenerateInputError);
  EXPECT_THROW(cosine_similarity(s({1, 0}), s({0, 0})), DegenerateInputError);
}

TEST(Cosine, LengthMismatchIsConfigError) {
  EXPECT_THROW(cosine_similarity(s({1, 0}), s({1, 0, 0})), ConfigError);
  EXPECT_THROW(cosine_similarity(s({}), s({})), ConfigError);
}

TEST(Cosine, SelfSymmetryAndScaleInvariance) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = test::random_vec(rng, 7), b = test::random_vec(rng, 7);
    EXPECT_NEAR(cosine_similarity(s(a), s(a)), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(cosine_similarity(s(a), s(b)), cosine_similarity(s(b), s(a)));
    Vec scaled = a;
    for (auto& x : scaled) x *= 3.7;
    EXPECT_NEAR(cosine_similarity(s(scaled), s(b)), cosine_similarity(s(a), s(b)), 1e-12);
    const double c = cosine_similarity(s(a), s(b));
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(Dense, ZeroWeightsGiveBias) {
  ParamTensor<double> w("w", 3, 2), b("b", Tensor2<double>(1, 2, {1.0, 2.0}));
  Tensor2<double> x(4, 3, 5.0);
  const auto y = dense_forward(x, w, b, Activation::identity);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(y(r, 0), 1.0);
    EXPECT_EQ(y(r, 1), 2.0);
  }
}

TEST(Dense, IdentityLayerAndRelu) {
  ParamTensor<double> w("w", Tensor2<double>(2, 2, {1, 0, 0, 1})), b("b", 1, 2);
  const Tensor2<double> x(1, 2, {-1.0, 2.0});
  EXPECT_EQ(dense_forward(x, w, b, Activation::identity), x);
  const auto y = dense_forward(x, w, b, Activation::relu);
  EXPECT_EQ(y(0, 0), 0.0);
  EXPECT_EQ(y(0, 1), 2.0);
}

TEST(Dense, ShapeMismatchNamesBothShapes) {
  ParamTensor<double> w("w", 3, 2), b("b", 1, 2);
  const Tensor2<double> x(1, 4);
  try {
    dense_forward(x, w, b, Activation::identity);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("1x4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3x2"), std::string::npos) << msg;
  }
}

TEST(Dense, DeterministicBitIdentical) {
  std::mt19937_64 rng(3);
  DenseLayer<float> layer("l", 5, 4, Activation::relu);
  layer.init(rng);
  Tensor2<float> x(3, 5);
  std::normal_distribution<float> g;
  for (auto& v : x.values()) v = g(rng);
  EXPECT_EQ(dense_forward(x, layer), dense_forward(x, layer));
}

TEST(ParamTensor, ZeroGradIsExactlyZeroAndShapesMatch) {
  ParamTensor<double> p("p", 3, 4);
  for (auto& v : p.grad.values()) v = 1.5;
  p.zero_grad();
  for (double v : p.grad.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(p.grad.rows(), p.value.rows());
  EXPECT_EQ(p.grad.cols(), p.value.cols());
}

TEST(GradCheck, QuadraticMatches) {
  std::mt19937_64 rng(5);
  ParamTensor<double> theta("theta", 2, 3);
  for (auto& v : theta.value.values()) v = std::normal_distribution<double>()(rng);
  auto f = [&](bool acc) {
    double sum = 0;
    auto vals = theta.value.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      sum += vals[i] * vals[i];
      if (acc) theta.grad.values()[i] += 2 * vals[i];
    }
    return sum;
  };
  const auto r = check_gradients<double>(f, {&theta}, 1e-5, 1);
  EXPECT_LE(r.max_relative_error, 1e-6);
  ASSERT_EQ(r.per_parameter_errors.size(), 1u);
  EXPECT_EQ(r.per_parameter_errors[0].first, "theta");
}

TEST(GradCheck, MaxIsMaximumOfPerParameter) {
  ParamTensor<double> a("a", Tensor2<double>(1, 2, {0.3, -0.7})), b("b", Tensor2<double>(1, 1, {1.1}));
  // Deliberately wrong gradient for b so the errors differ.
  auto f = [&](bool acc) {
    const double x = a.value(0, 0), y = a.value(0, 1), z = b.value(0, 0);
    if (acc) {
      a.grad(0, 0) += 2 * x;
      a.grad(0, 1) += 3 * y * y;
      b.grad(0, 0) += 0.9 * std::cos(z);
    }
    return x * x + y * y * y + std::sin(z);
  };
  const auto r = check_gradients<double>(f, {&a, &b}, 1e-5, 2);
  double mx = 0;
  for (const auto& [name, e] : r.per_parameter_errors) mx = std::max(mx, e);
  EXPECT_EQ(r.max_relative_error, mx);
  EXPECT_NEAR(r.per_parameter_errors[1].second, 0.1, 1e-6);
}

TEST(GradCheck, NonFiniteAnalyticGradientNamesParameter) {
  ParamTensor<double> p("weights.bad", 1, 2);
  auto f = [&](bool acc) {
    if (acc) p.grad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    return 0.0;
  };
  try {
    check_gradients<double>(f, {&p}, 1e-5, 0);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("weights.bad"), std::string::npos);
  }
}

TEST(GradCheck, NonFiniteNumericGradientNamesParameter) {
  ParamTensor<double> p("q", Tensor2<double>(1, 1, {0.0}));
  auto f = [&](bool) { return p.value(0, 0) > 0 ? std::numeric_limits<double>::infinity() : 0.0; };
  EXPECT_THROW(check_gradients<double>(f, {&p}, 1e-5, 0), NumericError);
  EXPECT_THROW(check_gradients<double>(f, {&p}, 0.0, 0), ConfigError);
}

// Contrastive loss on random 8-dim embeddings, both labels, 20 seeds.
TEST(GradCheck, ContrastiveOnRandomEmbeddings) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (auto y : {PairLabel::matched, PairLabel::mismatched}) {
      std::mt19937_64 rng(seed);
      ParamTensor<double> v("code_v", 1, 8), m("code_m", 1, 8);
      double margin = 0.5;
      // Stay away from the hinge so central differences are valid.
      do {
        for (auto* p : {&v, &m})
          for (auto& x : p->value.values()) x = std::normal_distribution<double>()(rng);
      } while (std::abs(cosine_distance<double>(v.value.row(0), m.value.row(0)) - margin) < 1e-3);
      auto f = [&](bool acc) {
        if (acc) contrastive_metric_loss_grad<double>(v.value.row(0), m.value.row(0), y, margin, 1.0,
                                                      v.grad.row(0), m.grad.row(0));
        return contrastive_metric_loss<double>(v.value.row(0), m.value.row(0), y, margin);
      };
      const auto r = check_gradients<double>(f, {&v, &m}, 1e-5, seed);
      EXPECT_LE(r.max_relative_error, 1e-4) << "seed " << seed;
    }
  }
}

// ppml of a random 4-pair batch, differentiated w.r.t. the embeddings.
TEST(GradCheck, PpmlOnRandomBatch) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed * 31);
    ParamTensor<double> v("video", 4, 6), m("music", 4, 6);
    std::vector<Polarity> pol(4);
    std::uniform_int_distribution<int> pd(0, 2);
    do {
      for (auto* p : {&v, &m})
        for (auto& x : p->value.values()) x = std::normal_distribution<double>()(rng);
      for (auto& p : pol) p = static_cast<Polarity>(pd(rng));
    } while (ppml_gate_distance(similarity_matrix(v.value, m.value)) < 1e-3);
    auto f = [&](bool acc) {
      const auto phi = similarity_matrix(v.value, m.value);
      Tensor2<double> d_phi;
      const double loss = ppml<double>(phi, pol, acc ? &d_phi : nullptr);
      if (acc) similarity_matrix_backward(v.value, m.value, d_phi, v.grad, m.grad);
      return loss;
    };
    const auto r = check_gradients<double>(f, {&v, &m}, 1e-5, seed);
    EXPECT_LE(r.max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(GradCheck, CoordinateSubsetIsSeeded) {
  ParamTensor<double> p("p", 10, 10);
  std::mt19937_64 rng(1);
  for (auto& x : p.value.values()) x = std::normal_distribution<double>()(rng);
  std::size_t calls = 0;
  auto f = [&](bool acc) {
    ++calls;
    double sum = 0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      sum += std::sin(p.value.values()[i]);
      if (acc) p.grad.values()[i] += std::cos(p.value.values()[i]);
    }
    return sum;
  };
  const auto r = check_gradients<double>(f, {&p}, 1e-5, 9, 7);
  EXPECT_EQ(calls, 1u + 2u * 7u);
  EXPECT_LE(r.max_relative_error, 1e-6);
}

}  // namespace
}  // namespace dpvm
