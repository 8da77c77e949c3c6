#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "dpvm/gradcheck.hpp"
#include "dpvm/objective.hpp"
#include "dpvm/synthetic.hpp"

namespace dpvm {

/// One registered objective configuration whose gradient is checked end to
/// end through the model.
struct GradCase {
  std::string name;
  Ablation ablation = Ablation::interactive;
  MetricVariant metric = MetricVariant::contrastive;
  MetricSite site = MetricSite::content;
  IntermodalPairs intermodal = IntermodalPairs::mismatched;
};

/// Together these exercise every loss term, both fusion modes and both
/// metric sites.
inline const std::vector<GradCase>& registered_grad_cases() {
  static const std::vector<GradCase> cases{
      {"content/contrastive", Ablation::content_only, MetricVariant::contrastive},
      {"content/batch", Ablation::content_only, MetricVariant::batch_metric},
      {"content/ppml", Ablation::content_only, MetricVariant::ppml},
      {"emotion/mismatched", Ablation::emotion_only},
      {"emotion/matched", Ablation::emotion_only, MetricVariant::contrastive, MetricSite::content,
       IntermodalPairs::matched},
      {"splicing/contrastive", Ablation::splicing, MetricVariant::contrastive},
      {"interactive/contrastive", Ablation::interactive, MetricVariant::contrastive},
      {"interactive/ppml@fused", Ablation::interactive, MetricVariant::ppml, MetricSite::fused},
      {"interactive/batch@fused", Ablation::interactive, MetricVariant::batch_metric,
       MetricSite::fused},
      {"splicing/contrastive@fused", Ablation::splicing, MetricVariant::contrastive,
       MetricSite::fused},
  };
  return cases;
}

struct GradSuiteOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::size_t batch_size = 4;
  // Points closer than this to a relu, hinge or gate kink are resampled.
  double min_kink_distance = 1e-3;
  // Central differences carry about this many ulps of the objective as
  // rounding noise; points with a nonzero gradient coordinate too small to
  // resolve against that noise at `tolerance` are resampled.
  double roundoff_ulps = 4.0;
  std::size_t max_attempts = 50;
  ModelDims dims = [] {
    ModelDims d;
    d.video_content_dim = 12;
    d.music_content_dim = 10;
    d.video_emotion_dim = 8;
    d.music_emotion_dim = 6;
    d.content_code_dim = 6;
    d.emotion_code_dim = 6;
    d.fused_dim = 6;
    d.num_emotion_classes = 3;
    d.hidden_width = 8;
    return d;
  }();
};

struct GradCaseResult {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t attempts = 0;
  GradCheckResult check;
};

struct GradSuiteReport {
  std::vector<GradCaseResult> cases;
  double max_relative_error = 0.0;
  bool passed(double tolerance) const { return max_relative_error <= tolerance; }
};

/// Random standard-normal batch with random classes and polarities.
inline Batch<double> random_batch(const ModelDims& d, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<std::size_t> cls(0, d.num_emotion_classes - 1), pol(0, 2);
  Batch<double> b;
  b.video_content = Tensor2<double>(n, d.video_content_dim);
  b.music_content = Tensor2<double>(n, d.music_content_dim);
  b.video_emotion = Tensor2<double>(n, d.video_emotion_dim);
  b.music_emotion = Tensor2<double>(n, d.music_emotion_dim);
  for (auto* t : {&b.video_content, &b.music_content, &b.video_emotion, &b.music_emotion})
    for (auto& v : t->values()) v = g(rng);
  for (std::size_t k = 0; k < n; ++k) {
    b.links.push_back({k, k});
    b.video_class.push_back(cls(rng));
    b.music_class.push_back(cls(rng));
    b.polarity.push_back(static_cast<Polarity>(pol(rng)));
  }
  return b;
}

/// Smallest nonzero |gradient| the check can resolve to `tolerance` when the
/// objective is near `value`.
inline double resolvable_gradient(double value, const GradSuiteOptions& opt) {
  const double ulp = std::nextafter(std::abs(value), std::numeric_limits<double>::infinity()) - std::abs(value);
  return opt.roundoff_ulps * ulp / (2.0 * opt.eps) / opt.tolerance;
}

/// Checks one case at `seed`, resampling model and batch until the point is
/// safely away from every kink, every embedding has nonzero norm and every
/// nonzero gradient coordinate is resolvable by central differences.
inline GradCaseResult check_grad_case(const GradCase& gc, std::uint64_t seed,
                                      const GradSuiteOptions& opt = {}) {
  LossConfig cfg;
  cfg.metric_variant = gc.metric;
  cfg.metric_site = gc.site;
  cfg.intermodal_pairs = gc.intermodal;
  for (std::size_t attempt = 0; attempt < opt.max_attempts; ++attempt) {
    const std::uint64_t s = detail::splitmix64(seed * 7919 + attempt);
    auto params = init_model<double>(opt.dims, s);
    const auto batch = random_batch(opt.dims, opt.batch_size, detail::splitmix64(s));
    ObjectiveResult probe;
    try {
      probe = evaluate_objective(params, batch, gc.ablation, cfg, false);
    } catch (const DegenerateInputError&) {
      continue;  // every hidden unit of some item is dead: zero embedding
    }
    if (probe.kink_distance < opt.min_kink_distance) continue;
    params.zero_grad();
    evaluate_objective(params, batch, gc.ablation, cfg, true);
    const double floor = resolvable_gradient(probe.composite.total, opt);
    bool resolvable = true;
    for (const auto* t : params.parameters())
      for (double g : t->grad.values())
        if (g != 0.0 && std::abs(g) < floor) resolvable = false;
    if (!resolvable) continue;
    auto fn = [&](bool accumulate) {
      return evaluate_objective(params, batch, gc.ablation, cfg, accumulate).composite.total;
    };
    GradCaseResult r{gc.name, seed, attempt + 1,
                     check_gradients<double>(fn, params.parameters(), opt.eps, s)};
    return r;
  }
  throw NumericError("gradcheck: case " + gc.name + " found no kink-free point in " +
                     std::to_string(opt.max_attempts) + " attempts (seed " +
                     std::to_string(seed) + ")");
}

/// Every registered case at each of the given seeds.
inline GradSuiteReport run_grad_suite(const std::vector<std::uint64_t>& seeds,
                                      const GradSuiteOptions& opt = {}) {
  GradSuiteReport rep;
  for (auto seed : seeds)
    for (const auto& gc : registered_grad_cases()) {
      rep.cases.push_back(check_grad_case(gc, seed, opt));
      rep.max_relative_error =
          std::max(rep.max_relative_error, rep.cases.back().check.max_relative_error);
    }
  return rep;
}

}  // namespace dpvm
