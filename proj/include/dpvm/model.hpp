#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dpvm/dense.hpp"
#include "dpvm/tensor.hpp"

namespace dpvm {

enum class Modality { video, music };
enum class FusionMode { splicing, interactive };

inline const char* to_string(Modality m) { return m == Modality::video ? "video" : "music"; }
inline const char* to_string(FusionMode f) {
  return f == FusionMode::splicing ? "splicing" : "interactive";
}

struct ModelDims {
  std::size_t video_content_dim = 512;
  std::size_t music_content_dim = 256;
  std::size_t video_emotion_dim = 128;
  std::size_t music_emotion_dim = 64;
  std::size_t content_code_dim = 256;
  std::size_t emotion_code_dim = 256;
  std::size_t fused_dim = 256;
  std::size_t num_emotion_classes = 4;
  // Width of the modality projections and every hidden layer.
  std::size_t hidden_width = 256;
  std::size_t encoder_hidden_layers = 2;
  std::size_t mlp_hidden_layers = 2;
  Activation hidden_activation = Activation::relu;

  std::size_t content_dim(Modality m) const {
    return m == Modality::video ? video_content_dim : music_content_dim;
  }
  std::size_t emotion_dim(Modality m) const {
    return m == Modality::video ? video_emotion_dim : music_emotion_dim;
  }
  std::size_t splice_dim() const { return content_code_dim + emotion_code_dim; }

  void validate() const {
    const std::pair<const char*, std::size_t> all[] = {
        {"video_content_dim", video_content_dim}, {"music_content_dim", music_content_dim},
        {"video_emotion_dim", video_emotion_dim}, {"music_emotion_dim", music_emotion_dim},
        {"content_code_dim", content_code_dim},   {"emotion_code_dim", emotion_code_dim},
        {"fused_dim", fused_dim},                 {"num_emotion_classes", num_emotion_classes},
        {"hidden_width", hidden_width}};
    for (const auto& [name, v] : all)
      if (v < 1) throw ConfigError(std::string("model dims: ") + name + " must be >= 1");
    if (content_code_dim > std::min(video_content_dim, music_content_dim))
      throw ConfigError("model dims: content_code_dim " + std::to_string(content_code_dim) +
                        " exceeds min(video_content_dim, music_content_dim) = " +
                        std::to_string(std::min(video_content_dim, music_content_dim)));
  }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// All learnable weights. The encoder, decoder and emotion MLP exist once and
/// serve both modalities.
template <typename T>
struct ModelParams {
  ModelDims dims;
  DenseLayer<T> video_content_proj;
  DenseLayer<T> music_content_proj;
  LayerStack<T> shared_encoder;
  LayerStack<T> shared_decoder;
  DenseLayer<T> video_decoder_out;
  DenseLayer<T> music_decoder_out;
  DenseLayer<T> emotion_proj_v;
  DenseLayer<T> emotion_proj_m;
  LayerStack<T> shared_emotion_mlp;
  DenseLayer<T> emotion_classifier;
  DenseLayer<T> fusion_fc;

  const DenseLayer<T>& content_proj(Modality m) const {
    return m == Modality::video ? video_content_proj : music_content_proj;
  }
  DenseLayer<T>& content_proj(Modality m) {
    return m == Modality::video ? video_content_proj : music_content_proj;
  }
  const DenseLayer<T>& decoder_out(Modality m) const {
    return m == Modality::video ? video_decoder_out : music_decoder_out;
  }
  DenseLayer<T>& decoder_out(Modality m) {
    return m == Modality::video ? video_decoder_out : music_decoder_out;
  }
  const DenseLayer<T>& emotion_proj(Modality m) const {
    return m == Modality::video ? emotion_proj_v : emotion_proj_m;
  }
  DenseLayer<T>& emotion_proj(Modality m) {
    return m == Modality::video ? emotion_proj_v : emotion_proj_m;
  }

  std::vector<DenseLayer<T>*> layers() {
    std::vector<DenseLayer<T>*> out{&video_content_proj, &music_content_proj};
    for (auto& l : shared_encoder.layers) out.push_back(&l);
    for (auto& l : shared_decoder.layers) out.push_back(&l);
    out.insert(out.end(), {&video_decoder_out, &music_decoder_out, &emotion_proj_v, &emotion_proj_m});
    for (auto& l : shared_emotion_mlp.layers) out.push_back(&l);
    out.insert(out.end(), {&emotion_classifier, &fusion_fc});
    return out;
  }

  /// Every parameter tensor, in a fixed order used by the optimizer and checkpoints.
  std::vector<ParamTensor<T>*> parameters() {
    std::vector<ParamTensor<T>*> out;
    for (auto* l : layers()) {
      out.push_back(&l->weight);
      out.push_back(&l->bias);
    }
    return out;
  }
  std::vector<const ParamTensor<T>*> parameters() const {
    auto* self = const_cast<ModelParams*>(this);
    auto mut = self->parameters();
    return {mut.begin(), mut.end()};
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.dims = dims;
    out.video_content_proj = video_content_proj.template cast<U>();
    out.music_content_proj = music_content_proj.template cast<U>();
    out.shared_encoder = shared_encoder.template cast<U>();
    out.shared_decoder = shared_decoder.template cast<U>();
    out.video_decoder_out = video_decoder_out.template cast<U>();
    out.music_decoder_out = music_decoder_out.template cast<U>();
    out.emotion_proj_v = emotion_proj_v.template cast<U>();
    out.emotion_proj_m = emotion_proj_m.template cast<U>();
    out.shared_emotion_mlp = shared_emotion_mlp.template cast<U>();
    out.emotion_classifier = emotion_classifier.template cast<U>();
    out.fusion_fc = fusion_fc.template cast<U>();
    return out;
  }

  /// Same dims and bit-identical parameter values (gradients ignored).
  bool same_values(const ModelParams& other) const {
    if (!(dims == other.dims)) return false;
    const auto a = parameters(), b = other.parameters();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i]->name != b[i]->name || !(a[i]->value == b[i]->value)) return false;
    return true;
  }
};

/// Builds the architecture for `dims` and draws weights from `seed`.
template <typename T>
ModelParams<T> init_model(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  const auto hid = dims.hidden_activation;
  const auto id = Activation::identity;
  const std::size_t w = dims.hidden_width;

  ModelParams<T> p;
  p.dims = dims;
  p.video_content_proj = {"video_content_proj", dims.video_content_dim, w, id};
  p.music_content_proj = {"music_content_proj", dims.music_content_dim, w, id};

  for (std::size_t i = 0; i < dims.encoder_hidden_layers; ++i)
    p.shared_encoder.layers.emplace_back("encoder." + std::to_string(i), w, w, hid);
  p.shared_encoder.layers.emplace_back("encoder.out", w, dims.content_code_dim, id);

  const std::size_t dec_layers = std::max<std::size_t>(dims.encoder_hidden_layers, 1);
  for (std::size_t i = 0; i < dec_layers; ++i)
    p.shared_decoder.layers.emplace_back("decoder." + std::to_string(i),
                                         i == 0 ? dims.content_code_dim : w, w,
                                         dims.encoder_hidden_layers == 0 ? id : hid);
  p.video_decoder_out = {"video_decoder_out", w, dims.video_content_dim, id};
  p.music_decoder_out = {"music_decoder_out", w, dims.music_content_dim, id};

  p.emotion_proj_v = {"emotion_proj_v", dims.video_emotion_dim, w, id};
  p.emotion_proj_m = {"emotion_proj_m", dims.music_emotion_dim, w, id};
  for (std::size_t i = 0; i < dims.mlp_hidden_layers; ++i)
    p.shared_emotion_mlp.layers.emplace_back("emotion_mlp." + std::to_string(i), w, w, hid);
  p.shared_emotion_mlp.layers.emplace_back("emotion_mlp.out", w, dims.emotion_code_dim, id);
  p.emotion_classifier = {"emotion_classifier", dims.emotion_code_dim, dims.num_emotion_classes, id};
  p.fusion_fc = {"fusion_fc", dims.splice_dim(), dims.fused_dim, id};

  std::mt19937_64 rng(seed);
  for (auto* l : p.layers()) l->init(rng);
  return p;
}

// ---------------------------------------------------------------------------
// Batched forward/backward. Each row of an input matrix is one item.

template <typename T>
struct ContentCache {
  DenseCache<T> proj;
  typename LayerStack<T>::Cache encoder;
  typename LayerStack<T>::Cache decoder;
  DenseCache<T> out;
};

template <typename T>
struct ContentOutputs {
  Tensor2<T> code;
  Tensor2<T> recon;
};

template <typename T>
ContentOutputs<T> content_forward_batch(const ModelParams<T>& p, const Tensor2<T>& features,
                                        Modality m, ContentCache<T>* cache = nullptr) {
  if (features.cols() != p.dims.content_dim(m))
    throw ConfigError(std::string("content_forward: ") + to_string(m) + " feature width " +
                      std::to_string(features.cols()) + " != " +
                      std::to_string(p.dims.content_dim(m)));
  ContentOutputs<T> out;
  auto h = dense_forward(features, p.content_proj(m), cache ? &cache->proj : nullptr);
  out.code = p.shared_encoder.forward(h, cache ? &cache->encoder : nullptr);
  auto d = p.shared_decoder.forward(out.code, cache ? &cache->decoder : nullptr);
  out.recon = dense_forward(d, p.decoder_out(m), cache ? &cache->out : nullptr);
  return out;
}

/// Backward through one modality's content path. Either upstream may be empty
/// (0 rows) when that output receives no gradient.
template <typename T>
void content_backward_batch(ModelParams<T>& p, const ContentCache<T>& cache, Modality m,
                            Tensor2<T> d_code, const Tensor2<T>& d_recon) {
  if (d_recon.rows() > 0) {
    auto dd = dense_backward(p.decoder_out(m), cache.out, d_recon);
    auto dc = p.shared_decoder.backward(cache.decoder, std::move(dd));
    if (d_code.rows() == 0) d_code = std::move(dc);
    else add_inplace(d_code, dc);
  }
  if (d_code.rows() == 0) return;
  auto dh = p.shared_encoder.backward(cache.encoder, std::move(d_code));
  dense_backward(p.content_proj(m), cache.proj, std::move(dh));
}

template <typename T>
struct EmotionCache {
  DenseCache<T> proj;
  typename LayerStack<T>::Cache mlp;
  DenseCache<T> classifier;
};

template <typename T>
struct EmotionOutputs {
  Tensor2<T> code;
  Tensor2<T> logits;
};

template <typename T>
EmotionOutputs<T> emotion_forward_batch(const ModelParams<T>& p, const Tensor2<T>& features,
                                        Modality m, EmotionCache<T>* cache = nullptr) {
  if (features.cols() != p.dims.emotion_dim(m))
    throw ConfigError(std::string("emotion_forward: ") + to_string(m) + " feature width " +
                      std::to_string(features.cols()) + " != " +
                      std::to_string(p.dims.emotion_dim(m)));
  EmotionOutputs<T> out;
  auto h = dense_forward(features, p.emotion_proj(m), cache ? &cache->proj : nullptr);
  out.code = p.shared_emotion_mlp.forward(h, cache ? &cache->mlp : nullptr);
  out.logits = dense_forward(out.code, p.emotion_classifier, cache ? &cache->classifier : nullptr);
  return out;
}

template <typename T>
void emotion_backward_batch(ModelParams<T>& p, const EmotionCache<T>& cache, Modality m,
                            Tensor2<T> d_code, const Tensor2<T>& d_logits) {
  if (d_logits.rows() > 0) {
    auto dc = dense_backward(p.emotion_classifier, cache.classifier, d_logits);
    if (d_code.rows() == 0) d_code = std::move(dc);
    else add_inplace(d_code, dc);
  }
  if (d_code.rows() == 0) return;
  auto dh = p.shared_emotion_mlp.backward(cache.mlp, std::move(d_code));
  dense_backward(p.emotion_proj(m), cache.proj, std::move(dh));
}

template <typename T>
Tensor2<T> fuse_batch(const ModelParams<T>& p, const Tensor2<T>& content_code,
                      const Tensor2<T>& emotion_code, FusionMode mode,
                      DenseCache<T>* cache = nullptr) {
  if (content_code.cols() != p.dims.content_code_dim ||
      emotion_code.cols() != p.dims.emotion_code_dim)
    throw ConfigError("fuse: codes " + content_code.shape() + " and " + emotion_code.shape() +
                      " do not match content_code_dim " + std::to_string(p.dims.content_code_dim) +
                      " / emotion_code_dim " + std::to_string(p.dims.emotion_code_dim));
  auto spliced = hconcat(content_code, emotion_code);
  if (mode == FusionMode::splicing) return spliced;
  return dense_forward(spliced, p.fusion_fc, cache);
}

/// Returns (d content_code, d emotion_code).
template <typename T>
std::pair<Tensor2<T>, Tensor2<T>> fuse_backward_batch(ModelParams<T>& p, const DenseCache<T>& cache,
                                                      FusionMode mode, Tensor2<T> d_fused) {
  Tensor2<T> d_splice =
      mode == FusionMode::splicing ? std::move(d_fused) : dense_backward(p.fusion_fc, cache, d_fused);
  return {column_slice(d_splice, 0, p.dims.content_code_dim),
          column_slice(d_splice, p.dims.content_code_dim, p.dims.emotion_code_dim)};
}

// ---------------------------------------------------------------------------
// Single-item conveniences.

template <typename T>
struct ForwardOutputs {
  std::vector<T> content_code_v, content_code_m;
  std::vector<T> recon_v, recon_m;
  std::vector<T> emotion_code_v, emotion_code_m;
  std::vector<T> logits_v, logits_m;
  std::vector<T> fused_v, fused_m;
};

namespace detail {
template <typename T>
std::vector<T> row0(const Tensor2<T>& t) {
  return {t.row(0).begin(), t.row(0).end()};
}
}  // namespace detail

template <typename T>
struct ContentPair {
  std::vector<T> code_v, code_m, recon_v, recon_m;
};

template <typename T>
ContentPair<T> content_forward(const ModelParams<T>& p, std::span<const T> v_feat,
                               std::span<const T> m_feat) {
  auto v = content_forward_batch(p, Tensor2<T>::row_vector(v_feat), Modality::video);
  auto m = content_forward_batch(p, Tensor2<T>::row_vector(m_feat), Modality::music);
  return {detail::row0(v.code), detail::row0(m.code), detail::row0(v.recon),
          detail::row0(m.recon)};
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> emotion_forward(const ModelParams<T>& p,
                                                          std::span<const T> feat, Modality m) {
  auto out = emotion_forward_batch(p, Tensor2<T>::row_vector(feat), m);
  return {detail::row0(out.code), detail::row0(out.logits)};
}

template <typename T>
std::vector<T> fuse(const ModelParams<T>& p, std::span<const T> content_code,
                    std::span<const T> emotion_code, FusionMode mode) {
  return detail::row0(fuse_batch(p, Tensor2<T>::row_vector(content_code),
                                 Tensor2<T>::row_vector(emotion_code), mode));
}

template <typename T>
ForwardOutputs<T> forward_pair(const ModelParams<T>& p, std::span<const T> v_content,
                               std::span<const T> m_content, std::span<const T> v_emotion,
                               std::span<const T> m_emotion, FusionMode mode) {
  ForwardOutputs<T> o;
  auto c = content_forward(p, v_content, m_content);
  o.content_code_v = c.code_v;
  o.content_code_m = c.code_m;
  o.recon_v = c.recon_v;
  o.recon_m = c.recon_m;
  std::tie(o.emotion_code_v, o.logits_v) = emotion_forward(p, v_emotion, Modality::video);
  std::tie(o.emotion_code_m, o.logits_m) = emotion_forward(p, m_emotion, Modality::music);
  o.fused_v = fuse<T>(p, o.content_code_v, o.emotion_code_v, mode);
  o.fused_m = fuse<T>(p, o.content_code_m, o.emotion_code_m, mode);
  return o;
}

}  // namespace dpvm
