#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpvm/config.hpp"
#include "dpvm/io.hpp"
#include "dpvm/model.hpp"
#include "dpvm/trainer.hpp"

namespace dpvm {

// Layout (little-endian):
//   "DPVMCKPT" u32 version
//   dims: 12 x u32
//   u64 config digest, str config text
//   u32 final epoch, u64 history length, history entries (u32 epoch, u32 step, 6 x f64)
//   u64 tensor count, per tensor: str name, u32 rows, u32 cols, rows*cols x f32
//   u64 FNV-1a of every preceding byte
inline constexpr char kCheckpointMagic[8] = {'D', 'P', 'V', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  ModelParams<float> params;
  std::uint32_t final_epoch = 0;
  std::vector<LossLogEntry> history;
};

inline Checkpoint make_checkpoint(const RunConfig& cfg, const TrainedModel& trained) {
  Checkpoint c;
  c.config = cfg;
  c.config.train = trained.config;
  c.params = trained.params;
  c.final_epoch = trained.final_epoch;
  c.history = trained.history;
  return c;
}

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw(std::string_view(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  const auto& d = ckpt.params.dims;
  for (std::size_t v : {d.video_content_dim, d.music_content_dim, d.video_emotion_dim,
                        d.music_emotion_dim, d.content_code_dim, d.emotion_code_dim, d.fused_dim,
                        d.num_emotion_classes, d.hidden_width, d.encoder_hidden_layers,
                        d.mlp_hidden_layers})
    w.u32(static_cast<std::uint32_t>(v));
  w.u32(d.hidden_activation == Activation::relu ? 1u : 0u);
  w.u64(config_digest(ckpt.config));
  w.str(to_config_text(ckpt.config));
  w.u32(ckpt.final_epoch);
  w.u64(ckpt.history.size());
  for (const auto& e : ckpt.history) {
    w.u32(e.epoch);
    w.u32(e.step);
    for (double v : {e.reconstruction, e.content_metric, e.discrimination, e.intermodal, e.fusion, e.total})
      w.f64(v);
  }
  const auto params = ckpt.params.parameters();
  w.u64(params.size());
  for (const auto* p : params) {
    w.str(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rows()));
    w.u32(static_cast<std::uint32_t>(p->value.cols()));
    for (float v : p->value.values()) w.f32(v);
  }
  w.u64(fnv1a(w.bytes()));
  return w.bytes();
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8 + 4 + 8 || bytes.substr(0, 8) != std::string_view(kCheckpointMagic, 8))
    throw CorruptionError("checkpoint: bad magic (not a checkpoint file)");
  ByteReader head(bytes.substr(8, 4));
  const auto version = head.u32();
  if (version != kCheckpointVersion)
    throw CorruptionError("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto body = bytes.substr(0, bytes.size() - 8);
  ByteReader tail(bytes.substr(bytes.size() - 8));
  if (tail.u64() != fnv1a(body))
    throw CorruptionError("checkpoint: checksum mismatch (truncated or corrupted file)");

  ByteReader r(body);
  r.raw(12);
  ModelDims d;
  for (std::size_t* v : {&d.video_content_dim, &d.music_content_dim, &d.video_emotion_dim,
                         &d.music_emotion_dim, &d.content_code_dim, &d.emotion_code_dim,
                         &d.fused_dim, &d.num_emotion_classes, &d.hidden_width,
                         &d.encoder_hidden_layers, &d.mlp_hidden_layers})
    *v = r.u32();
  d.hidden_activation = r.u32() == 1 ? Activation::relu : Activation::identity;
  const auto digest = r.u64();
  const auto text = r.str();

  Checkpoint c;
  c.config = config_from_text(text, "checkpoint config");
  if (config_digest(c.config) != digest)
    throw CorruptionError("checkpoint: config digest mismatch");
  c.config.train.dims = d;
  c.final_epoch = r.u32();
  const auto nh = r.u64();
  if (nh > r.remaining()) throw CorruptionError("checkpoint: history length out of range");
  c.history.resize(nh);
  for (auto& e : c.history) {
    e.epoch = r.u32();
    e.step = r.u32();
    for (double* v : {&e.reconstruction, &e.content_metric, &e.discrimination, &e.intermodal,
                      &e.fusion, &e.total})
      *v = r.f64();
  }

  try {
    c.params = init_model<float>(d, 0);
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("checkpoint: invalid dims: ") + e.what());
  }
  auto params = c.params.parameters();
  if (r.u64() != params.size()) throw CorruptionError("checkpoint: parameter tensor count mismatch");
  for (auto* p : params) {
    const auto name = r.str();
    const auto rows = r.u32(), cols = r.u32();
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols())
      throw CorruptionError("checkpoint: tensor '" + name + "' " + shape_str(rows, cols) +
                            " does not match expected '" + p->name + "' " + p->value.shape());
    for (auto& v : p->value.values()) v = r.f32();
  }
  if (r.remaining() != 0) throw CorruptionError("checkpoint: trailing bytes");
  return c;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_bytes_atomic(path, serialize_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_bytes(path));
}

}  // namespace dpvm
