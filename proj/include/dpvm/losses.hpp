#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dpvm/cosine.hpp"
#include "dpvm/tensor.hpp"

namespace dpvm {

enum class MetricVariant { contrastive, batch_metric, ppml };

// Which embeddings the metric term compares.
enum class MetricSite { content, fused };

inline const char* to_string(MetricVariant v) {
  switch (v) {
    case MetricVariant::contrastive: return "contrastive";
    case MetricVariant::batch_metric: return "batch";
    case MetricVariant::ppml: return "ppml";
  }
  return "?";
}
inline const char* to_string(MetricSite s) { return s == MetricSite::content ? "content" : "fused"; }

// Which in-batch (video, music) pairs the inter-modal emotion term is applied to.
enum class IntermodalPairs { mismatched, matched };

inline const char* to_string(IntermodalPairs p) {
  return p == IntermodalPairs::mismatched ? "mismatched" : "matched";
}

/// Polarity of a pair: negative = 0, neutral = 1, positive = 2.
enum class Polarity : std::uint8_t { negative = 0, neutral = 1, positive = 2 };

inline int polarity_value(Polarity p) { return static_cast<int>(p); }

// 0 = matched pair, 1 = mismatched.
enum class PairLabel : std::uint8_t { matched = 0, mismatched = 1 };

struct LossConfig {
  double margin = 0.5;
  double lambda1 = 0.8, lambda2 = 1.0;
  double mu1 = 0.8, mu2 = 1.0;
  double k1 = 0.5, k2 = 0.5, k3 = 1.0;
  MetricVariant metric_variant = MetricVariant::contrastive;
  MetricSite metric_site = MetricSite::content;
  // Pushing matched emotion codes apart makes the emotion path anti-retrieve,
  // so the default separates each video from the other musics of its batch.
  IntermodalPairs intermodal_pairs = IntermodalPairs::mismatched;

  void validate() const {
    if (!(margin > 0.0 && margin <= 2.0))
      throw ConfigError("loss config: margin must lie in (0, 2], got " + std::to_string(margin));
    const std::pair<const char*, double> w[] = {{"lambda1", lambda1}, {"lambda2", lambda2},
                                                {"mu1", mu1},         {"mu2", mu2},
                                                {"k1", k1},           {"k2", k2},
                                                {"k3", k3}};
    for (const auto& [name, v] : w)
      if (!(v >= 0.0)) throw ConfigError(std::string("loss config: ") + name + " must be >= 0");
  }
};

/// phi(k, i) = cosine similarity of video k to music i.
template <typename T>
using SimilarityMatrix = Tensor2<T>;

template <typename T>
SimilarityMatrix<T> similarity_matrix(const Tensor2<T>& video, const Tensor2<T>& music) {
  if (video.rows() != music.rows() || video.cols() != music.cols())
    throw ConfigError("similarity_matrix: " + video.shape() + " vs " + music.shape());
  SimilarityMatrix<T> phi(video.rows(), music.rows());
  for (std::size_t k = 0; k < video.rows(); ++k)
    for (std::size_t i = 0; i < music.rows(); ++i)
      phi(k, i) = cosine_similarity<T>(video.row(k), music.row(i));
  return phi;
}

template <typename T>
void similarity_matrix_backward(const Tensor2<T>& video, const Tensor2<T>& music,
                                const Tensor2<T>& d_phi, Tensor2<T>& g_video, Tensor2<T>& g_music) {
  for (std::size_t k = 0; k < video.rows(); ++k)
    for (std::size_t i = 0; i < music.rows(); ++i)
      if (d_phi(k, i) != T(0))
        cosine_similarity_backward<T>(video.row(k), music.row(i), d_phi(k, i), g_video.row(k),
                                      g_music.row(i));
}

// ---------------------------------------------------------------------------
// Reconstruction: cosdist(v, recon_v) + cosdist(m, recon_m).

template <typename T>
T reconstruction_loss(std::span<const T> v, std::span<const T> recon_v, std::span<const T> m,
                      std::span<const T> recon_m) {
  return cosine_distance(v, recon_v) + cosine_distance(m, recon_m);
}

template <typename T>
void reconstruction_loss_grad(std::span<const T> v, std::span<const T> recon_v,
                              std::span<const T> m, std::span<const T> recon_m, T scale,
                              std::span<T> g_recon_v, std::span<T> g_recon_m) {
  cosine_similarity_backward<T>(v, recon_v, -scale, {}, g_recon_v);
  cosine_similarity_backward<T>(m, recon_m, -scale, {}, g_recon_m);
}

// ---------------------------------------------------------------------------
// Contrastive metric loss on cosine distance d:
//   y = 0: d^2 / 2        y = 1: max(0, margin - d)^2 / 2

template <typename T>
T contrastive_metric_loss(std::span<const T> code_v, std::span<const T> code_m, PairLabel y,
                          T margin) {
  if (!(margin > T(0))) throw ConfigError("contrastive_metric_loss: margin must be > 0");
  const T d = cosine_distance(code_v, code_m);
  if (y == PairLabel::matched) return T(0.5) * d * d;
  const T h = std::max(T(0), margin - d);
  return T(0.5) * h * h;
}

template <typename T>
void contrastive_metric_loss_grad(std::span<const T> code_v, std::span<const T> code_m,
                                  PairLabel y, T margin, T scale, std::span<T> g_v,
                                  std::span<T> g_m) {
  const T d = cosine_distance(code_v, code_m);
  // dL/dd, then dd/dcos = -1.
  T dl_dd = y == PairLabel::matched ? d : -std::max(T(0), margin - d);
  if (dl_dd == T(0)) return;
  cosine_similarity_backward<T>(code_v, code_m, -scale * dl_dd, g_v, g_m);
}

// ---------------------------------------------------------------------------
// Cross-entropy over emotion classes.

template <typename T>
T cross_entropy(std::span<const T> logits, std::size_t cls) {
  if (cls >= logits.size())
    throw DataError("cross_entropy: class index " + std::to_string(cls) + " out of range for " +
                    std::to_string(logits.size()) + " classes");
  T mx = logits[0];
  for (T l : logits) mx = std::max(mx, l);
  T s(0);
  for (T l : logits) s += std::exp(l - mx);
  return std::log(s) + mx - logits[cls];
}

template <typename T>
void cross_entropy_grad(std::span<const T> logits, std::size_t cls, T scale, std::span<T> g) {
  T mx = logits[0];
  for (T l : logits) mx = std::max(mx, l);
  T s(0);
  for (T l : logits) s += std::exp(l - mx);
  for (std::size_t j = 0; j < logits.size(); ++j)
    g[j] += scale * (std::exp(logits[j] - mx) / s - (j == cls ? T(1) : T(0)));
}

template <typename T>
T discrimination_loss(std::span<const T> logits_v, std::span<const T> logits_m,
                      std::size_t class_v, std::size_t class_m) {
  return cross_entropy(logits_v, class_v) + cross_entropy(logits_m, class_m);
}

// ---------------------------------------------------------------------------
// Inter-modal loss: -cosdist(e_v, e_m).

template <typename T>
T intermodal_loss(std::span<const T> code_v, std::span<const T> code_m) {
  return -cosine_distance(code_v, code_m);
}

template <typename T>
void intermodal_loss_grad(std::span<const T> code_v, std::span<const T> code_m, T scale,
                          std::span<T> g_v, std::span<T> g_m) {
  cosine_similarity_backward<T>(code_v, code_m, scale, g_v, g_m);
}

// ---------------------------------------------------------------------------
// Fusion loss on a matched pair: cosdist(f_v, f_m).

template <typename T>
T fusion_loss(std::span<const T> fused_v, std::span<const T> fused_m) {
  return cosine_distance(fused_v, fused_m);
}

template <typename T>
void fusion_loss_grad(std::span<const T> fused_v, std::span<const T> fused_m, T scale,
                      std::span<T> g_v, std::span<T> g_m) {
  cosine_similarity_backward<T>(fused_v, fused_m, -scale, g_v, g_m);
}

// ---------------------------------------------------------------------------

struct LossComponents {
  double reconstruction = 0.0;     // L_R
  double content_metric = 0.0;     // L_M, content path
  double discrimination = 0.0;     // L_D
  double intermodal = 0.0;         // L_M, emotion path
  double fusion = 0.0;             // L_Fusion
};

struct CompositeLosses {
  double content = 0.0;
  double emotion = 0.0;
  double total = 0.0;
};

inline CompositeLosses composite_losses(const LossComponents& c, const LossConfig& cfg) {
  for (double v : {c.reconstruction, c.content_metric, c.discrimination, c.intermodal, c.fusion})
    if (!std::isfinite(v)) throw NumericError("composite_losses: non-finite component");
  CompositeLosses out;
  out.content = cfg.lambda1 * c.reconstruction + cfg.lambda2 * c.content_metric;
  out.emotion = cfg.mu1 * c.discrimination + cfg.mu2 * c.intermodal;
  out.total = cfg.k1 * out.content + cfg.k2 * out.emotion + cfg.k3 * c.fusion;
  return out;
}

// ---------------------------------------------------------------------------
// Batch metric losses over a similarity matrix.

/// sum_k sum_{i != k} (phi[k][i] - phi[k][k]). Writes dL/dphi into d_phi when given.
template <typename T>
T batch_metric_loss(const SimilarityMatrix<T>& phi, Tensor2<T>* d_phi = nullptr) {
  const std::size_t n = phi.rows();
  if (n < 2 || phi.cols() != n)
    throw ConfigError("batch_metric_loss: need a square matrix with n >= 2, got " + phi.shape());
  T loss(0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      if (i != k) loss += phi(k, i) - phi(k, k);
  if (d_phi) {
    *d_phi = Tensor2<T>(n, n, T(1));
    for (std::size_t k = 0; k < n; ++k) (*d_phi)(k, k) = -T(n - 1);
  }
  return loss;
}

/// Polarity penalty metric loss:
///   rho[k][i] = 0 if phi[k][i] < phi[k][k] else 1
///   P[k][i]   = |polarity_k - polarity_i|
///   L = sum_k sum_{i != k} (P rho phi[k][i] - phi[k][k])
/// rho is a hard gate: no gradient flows through it.
template <typename T>
T ppml(const SimilarityMatrix<T>& phi, std::span<const Polarity> polarity,
       Tensor2<T>* d_phi = nullptr) {
  const std::size_t n = phi.rows();
  if (n < 2 || phi.cols() != n)
    throw ConfigError("ppml: need a square matrix with n >= 2, got " + phi.shape());
  if (polarity.size() != n)
    throw DataError("ppml: " + std::to_string(polarity.size()) + " polarity labels for " +
                    std::to_string(n) + " pairs");
  if (d_phi) *d_phi = Tensor2<T>(n, n);
  T loss(0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      const T rho = phi(k, i) < phi(k, k) ? T(0) : T(1);
      const T p = static_cast<T>(std::abs(polarity_value(polarity[k]) - polarity_value(polarity[i])));
      loss += p * rho * phi(k, i) - phi(k, k);
      if (d_phi) {
        (*d_phi)(k, i) += p * rho;
        (*d_phi)(k, k) -= T(1);
      }
    }
  }
  return loss;
}

/// Smallest |phi[k][i] - phi[k][k]| over off-diagonal entries: distance to the ppml gate.
template <typename T>
T ppml_gate_distance(const SimilarityMatrix<T>& phi) {
  T best = std::numeric_limits<T>::infinity();
  for (std::size_t k = 0; k < phi.rows(); ++k)
    for (std::size_t i = 0; i < phi.cols(); ++i)
      if (i != k) best = std::min(best, std::abs(phi(k, i) - phi(k, k)));
  return best;
}

}  // namespace dpvm
