#pragma once

#include <limits>
#include <string>

#include "dpvm/data.hpp"
#include "dpvm/dense.hpp"
#include "dpvm/losses.hpp"
#include "dpvm/model.hpp"

namespace dpvm {

/// The four network configurations: single content path, single emotion
/// path, and both paths joined by splicing or interactive fusion.
enum class Ablation { content_only, emotion_only, splicing, interactive };

inline const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::content_only: return "content";
    case Ablation::emotion_only: return "emotion";
    case Ablation::splicing: return "splicing";
    case Ablation::interactive: return "interactive";
  }
  return "?";
}

inline bool uses_content(Ablation a) { return a != Ablation::emotion_only; }
inline bool uses_emotion(Ablation a) { return a != Ablation::content_only; }
inline bool uses_fusion(Ablation a) {
  return a == Ablation::splicing || a == Ablation::interactive;
}
inline FusionMode fusion_mode(Ablation a) {
  return a == Ablation::interactive ? FusionMode::interactive : FusionMode::splicing;
}

/// Effective weight of each component in the scalar that is optimized.
struct ComponentWeights {
  double reconstruction = 0, content_metric = 0, discrimination = 0, intermodal = 0, fusion = 0;
};

inline ComponentWeights component_weights(Ablation a, const LossConfig& cfg) {
  ComponentWeights w;
  switch (a) {
    case Ablation::content_only:
      w.reconstruction = cfg.lambda1;
      w.content_metric = cfg.lambda2;
      break;
    case Ablation::emotion_only:
      w.discrimination = cfg.mu1;
      w.intermodal = cfg.mu2;
      break;
    case Ablation::splicing:
    case Ablation::interactive:
      w.reconstruction = cfg.k1 * cfg.lambda1;
      w.content_metric = cfg.k1 * cfg.lambda2;
      w.discrimination = cfg.k2 * cfg.mu1;
      w.intermodal = cfg.k2 * cfg.mu2;
      w.fusion = cfg.k3;
      break;
  }
  return w;
}

struct ObjectiveResult {
  LossComponents components;
  CompositeLosses composite;
  // Distance of the current point to the nearest non-differentiable kink
  // (relu, contrastive hinge, ppml gate).
  double kink_distance = std::numeric_limits<double>::infinity();
};

namespace detail {

template <typename T>
Tensor2<T> zeros_like(const Tensor2<T>& t) {
  return Tensor2<T>(t.rows(), t.cols());
}

template <typename T>
void update_kink(double& best, T v) {
  best = std::min(best, static_cast<double>(v));
}

}  // namespace detail

/// Runs the forward pass for one batch and evaluates every component loss
/// that the ablation activates. With `backward`, accumulates the gradient of
/// the weighted total into `p`'s parameter grads.
///
/// Batch reduction: per-item losses are averaged over the n items; the
/// contrastive metric is the mean over the n matched pairs plus the mean
/// over the n(n-1) in-batch negatives; the summed batch metric and ppml are
/// divided by n(n-1). The inter-modal term is averaged over the n(n-1)
/// mismatched pairs unless cfg.intermodal_pairs selects the matched ones.
/// Pairwise terms vanish for n < 2.
template <typename T>
ObjectiveResult evaluate_objective(ModelParams<T>& p, const Batch<T>& b, Ablation ablation,
                                   const LossConfig& cfg, bool backward) {
  cfg.validate();
  const std::size_t n = b.size();
  if (n == 0) throw ConfigError("evaluate_objective: empty batch");
  const auto w = component_weights(ablation, cfg);
  const T inv_n = T(1) / static_cast<T>(n);
  const T inv_neg = n > 1 ? T(1) / static_cast<T>(n * (n - 1)) : T(0);
  const bool metric_on_fused = cfg.metric_site == MetricSite::fused;
  if (metric_on_fused && !uses_fusion(ablation))
    throw ConfigError(std::string("metric_site=fused requires a fusion ablation, got ") +
                      to_string(ablation));

  ObjectiveResult res;
  auto& c = res.components;

  ContentCache<T> ccv, ccm;
  ContentOutputs<T> cv, cm;
  EmotionCache<T> ecv, ecm;
  EmotionOutputs<T> ev, em;
  DenseCache<T> fcv, fcm;
  Tensor2<T> fv, fm;
  const FusionMode mode = fusion_mode(ablation);

  if (uses_content(ablation)) {
    cv = content_forward_batch(p, b.video_content, Modality::video, &ccv);
    cm = content_forward_batch(p, b.music_content, Modality::music, &ccm);
    for (const auto* cc : {&ccv, &ccm}) {
      detail::update_kink(res.kink_distance, relu_kink_distance(p.shared_encoder, cc->encoder));
      detail::update_kink(res.kink_distance, relu_kink_distance(p.shared_decoder, cc->decoder));
    }
  }
  if (uses_emotion(ablation)) {
    ev = emotion_forward_batch(p, b.video_emotion, Modality::video, &ecv);
    em = emotion_forward_batch(p, b.music_emotion, Modality::music, &ecm);
    detail::update_kink(res.kink_distance, relu_kink_distance(p.shared_emotion_mlp, ecv.mlp));
    detail::update_kink(res.kink_distance, relu_kink_distance(p.shared_emotion_mlp, ecm.mlp));
  }
  if (uses_fusion(ablation)) {
    fv = fuse_batch(p, cv.code, ev.code, mode, &fcv);
    fm = fuse_batch(p, cm.code, em.code, mode, &fcm);
  }

  // Gradient buffers (allocated only when needed).
  Tensor2<T> g_code_v, g_code_m, g_recon_v, g_recon_m;
  Tensor2<T> g_ecode_v, g_ecode_m, g_logits_v, g_logits_m, g_fv, g_fm;
  if (backward) {
    if (uses_content(ablation)) {
      g_code_v = detail::zeros_like(cv.code);
      g_code_m = detail::zeros_like(cm.code);
      g_recon_v = detail::zeros_like(cv.recon);
      g_recon_m = detail::zeros_like(cm.recon);
    }
    if (uses_emotion(ablation)) {
      g_ecode_v = detail::zeros_like(ev.code);
      g_ecode_m = detail::zeros_like(em.code);
      g_logits_v = detail::zeros_like(ev.logits);
      g_logits_m = detail::zeros_like(em.logits);
    }
    if (uses_fusion(ablation)) {
      g_fv = detail::zeros_like(fv);
      g_fm = detail::zeros_like(fm);
    }
  }

  if (uses_content(ablation)) {
    T sum(0);
    for (std::size_t k = 0; k < n; ++k) {
      sum += reconstruction_loss<T>(b.video_content.row(k), cv.recon.row(k), b.music_content.row(k),
                                    cm.recon.row(k));
      if (backward && w.reconstruction != 0)
        reconstruction_loss_grad<T>(b.video_content.row(k), cv.recon.row(k),
                                    b.music_content.row(k), cm.recon.row(k),
                                    static_cast<T>(w.reconstruction) * inv_n, g_recon_v.row(k),
                                    g_recon_m.row(k));
    }
    c.reconstruction = static_cast<double>(sum * inv_n);

    const Tensor2<T>& xv = metric_on_fused ? fv : cv.code;
    const Tensor2<T>& xm = metric_on_fused ? fm : cm.code;
    Tensor2<T>& gxv = metric_on_fused ? g_fv : g_code_v;
    Tensor2<T>& gxm = metric_on_fused ? g_fm : g_code_m;
    const T wm = static_cast<T>(w.content_metric);
    const bool grad_metric = backward && w.content_metric != 0;
    const T margin = static_cast<T>(cfg.margin);

    switch (cfg.metric_variant) {
      case MetricVariant::contrastive: {
        T pos(0), neg(0);
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t i = 0; i < n; ++i) {
            const auto y = b.label(k, i);
            const T l = contrastive_metric_loss<T>(xv.row(k), xm.row(i), y, margin);
            const T scale = y == PairLabel::matched ? inv_n : inv_neg;
            (y == PairLabel::matched ? pos : neg) += l;
            if (y == PairLabel::mismatched)
              detail::update_kink(res.kink_distance,
                                  std::abs(margin - cosine_distance<T>(xv.row(k), xm.row(i))));
            if (grad_metric && scale != T(0))
              contrastive_metric_loss_grad<T>(xv.row(k), xm.row(i), y, margin, wm * scale,
                                              gxv.row(k), gxm.row(i));
          }
        c.content_metric = static_cast<double>(pos * inv_n + neg * inv_neg);
        break;
      }
      case MetricVariant::batch_metric:
      case MetricVariant::ppml: {
        if (n < 2) break;
        const auto phi = similarity_matrix(xv, xm);
        Tensor2<T> d_phi;
        T l(0);
        if (cfg.metric_variant == MetricVariant::batch_metric) {
          l = batch_metric_loss(phi, grad_metric ? &d_phi : nullptr);
        } else {
          l = ppml<T>(phi, b.polarity, grad_metric ? &d_phi : nullptr);
          detail::update_kink(res.kink_distance, ppml_gate_distance(phi));
        }
        c.content_metric = static_cast<double>(l * inv_neg);
        if (grad_metric) {
          for (auto& v : d_phi.values()) v *= wm * inv_neg;
          similarity_matrix_backward(xv, xm, d_phi, gxv, gxm);
        }
        break;
      }
    }
  }

  if (uses_emotion(ablation)) {
    T d_sum(0), i_sum(0);
    for (std::size_t k = 0; k < n; ++k) {
      d_sum += discrimination_loss<T>(ev.logits.row(k), em.logits.row(k), b.video_class[k],
                                      b.music_class[k]);
      if (backward && w.discrimination != 0) {
        const T s = static_cast<T>(w.discrimination) * inv_n;
        cross_entropy_grad<T>(ev.logits.row(k), b.video_class[k], s, g_logits_v.row(k));
        cross_entropy_grad<T>(em.logits.row(k), b.music_class[k], s, g_logits_m.row(k));
      }
      if (cfg.intermodal_pairs == IntermodalPairs::matched) {
        i_sum += intermodal_loss<T>(ev.code.row(k), em.code.row(k));
        if (backward && w.intermodal != 0)
          intermodal_loss_grad<T>(ev.code.row(k), em.code.row(k),
                                  static_cast<T>(w.intermodal) * inv_n, g_ecode_v.row(k),
                                  g_ecode_m.row(k));
        continue;
      }
      // Mean over the n - 1 mismatched musics, then over videos.
      for (std::size_t i = 0; i < n; ++i) {
        if (i == k) continue;
        i_sum += intermodal_loss<T>(ev.code.row(k), em.code.row(i)) / static_cast<T>(n - 1);
        if (backward && w.intermodal != 0)
          intermodal_loss_grad<T>(ev.code.row(k), em.code.row(i),
                                  static_cast<T>(w.intermodal) * inv_neg, g_ecode_v.row(k),
                                  g_ecode_m.row(i));
      }
    }
    c.discrimination = static_cast<double>(d_sum * inv_n);
    c.intermodal = static_cast<double>(i_sum * inv_n);
  }

  if (uses_fusion(ablation)) {
    T sum(0);
    for (std::size_t k = 0; k < n; ++k) {
      sum += fusion_loss<T>(fv.row(k), fm.row(k));
      if (backward && w.fusion != 0)
        fusion_loss_grad<T>(fv.row(k), fm.row(k), static_cast<T>(w.fusion) * inv_n, g_fv.row(k),
                            g_fm.row(k));
    }
    c.fusion = static_cast<double>(sum * inv_n);
  }

  switch (ablation) {
    case Ablation::content_only: {
      const auto comp = composite_losses(c, cfg);
      res.composite = {comp.content, 0.0, comp.content};
      break;
    }
    case Ablation::emotion_only: {
      const auto comp = composite_losses(c, cfg);
      res.composite = {0.0, comp.emotion, comp.emotion};
      break;
    }
    default:
      res.composite = composite_losses(c, cfg);
  }
  if (!std::isfinite(res.composite.total))
    throw NumericError("evaluate_objective: non-finite total loss");

  if (backward) {
    if (uses_fusion(ablation)) {
      auto [dc_v, de_v] = fuse_backward_batch(p, fcv, mode, std::move(g_fv));
      auto [dc_m, de_m] = fuse_backward_batch(p, fcm, mode, std::move(g_fm));
      add_inplace(g_code_v, dc_v);
      add_inplace(g_code_m, dc_m);
      add_inplace(g_ecode_v, de_v);
      add_inplace(g_ecode_m, de_m);
    }
    if (uses_content(ablation)) {
      content_backward_batch(p, ccv, Modality::video, std::move(g_code_v), g_recon_v);
      content_backward_batch(p, ccm, Modality::music, std::move(g_code_m), g_recon_m);
    }
    if (uses_emotion(ablation)) {
      emotion_backward_batch(p, ecv, Modality::video, std::move(g_ecode_v), g_logits_v);
      emotion_backward_batch(p, ecm, Modality::music, std::move(g_ecode_m), g_logits_m);
    }
  }
  return res;
}

}  // namespace dpvm
