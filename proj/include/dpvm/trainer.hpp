#pragma once

#include <cstdint>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dpvm/adam.hpp"
#include "dpvm/data.hpp"
#include "dpvm/model.hpp"
#include "dpvm/objective.hpp"
#include "dpvm/synthetic.hpp"

namespace dpvm {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  LossConfig loss;
  // Architecture; the feature widths are taken from the data.
  ModelDims dims;
  Ablation ablation = Ablation::interactive;
  // Train on every listed pair instead of the first pair per video.
  bool all_pairs = false;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_epsilon}; }

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 2)
      throw ConfigError("batch_size must be >= 2: the metric loss needs in-batch negatives (got " +
                        std::to_string(batch_size) + ")");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
    loss.validate();
    if (loss.metric_site == MetricSite::fused && !uses_fusion(ablation))
      throw ConfigError("metric_site=fused needs ablation splicing or interactive");
  }
};

/// Copies the feature widths and class count of a table into an architecture.
inline ModelDims dims_for_table(ModelDims arch, const TableDims& t) {
  arch.video_content_dim = t.video_content;
  arch.music_content_dim = t.music_content;
  arch.video_emotion_dim = t.video_emotion;
  arch.music_emotion_dim = t.music_emotion;
  arch.num_emotion_classes = t.classes;
  return arch;
}

struct LossLogEntry {
  std::uint32_t epoch = 0;  // 1-based
  std::uint32_t step = 0;   // 1-based, global
  double reconstruction = 0, content_metric = 0, discrimination = 0, intermodal = 0, fusion = 0;
  double total = 0;

  friend bool operator==(const LossLogEntry&, const LossLogEntry&) = default;
};

inline std::string format_log_line(const LossLogEntry& e) {
  std::ostringstream os;
  os << std::setprecision(9) << e.epoch << ',' << e.step << ',' << e.reconstruction << ','
     << e.content_metric << ',' << e.discrimination << ',' << e.intermodal << ',' << e.fusion
     << ',' << e.total;
  return os.str();
}

inline const char* log_header() { return "epoch,step,L_R,L_Mcontent,L_D,L_Minter,L_Fusion,L_total"; }

/// Mean L_total over the steps of each epoch (index 0 = epoch 1).
inline std::vector<double> epoch_mean_totals(const std::vector<LossLogEntry>& log) {
  std::vector<double> sums, counts;
  for (const auto& e : log) {
    if (sums.size() < e.epoch) {
      sums.resize(e.epoch, 0.0);
      counts.resize(e.epoch, 0.0);
    }
    sums[e.epoch - 1] += e.total;
    counts[e.epoch - 1] += 1.0;
  }
  for (std::size_t i = 0; i < sums.size(); ++i)
    if (counts[i] > 0) sums[i] /= counts[i];
  return sums;
}

struct TrainedModel {
  ModelParams<float> params;
  TrainConfig config;
  std::uint32_t final_epoch = 0;
  std::vector<LossLogEntry> history;
};

namespace seeds {
// Independent streams derived from the run seed.
inline std::uint64_t model_init(std::uint64_t seed) { return detail::splitmix64(seed ^ 0x1001); }
inline std::uint64_t epoch_shuffle(std::uint64_t seed, std::size_t epoch) {
  return detail::splitmix64(seed ^ (0x2002 + (static_cast<std::uint64_t>(epoch) << 20)));
}
}  // namespace seeds

using StepCallback = std::function<void(const LossLogEntry&)>;

/// Fixed-epoch training: per batch forward, weighted objective, backward,
/// one Adam step. Aborts with NumericError on a non-finite loss or gradient.
inline TrainedModel train(const TrainConfig& cfg, const PairSet& data,
                          const StepCallback& on_step = {}) {
  cfg.validate();
  if (data.videos.empty() || data.pairs.empty()) throw DataError("train: empty training set");
  const ModelDims dims = dims_for_table(cfg.dims, data.dims);

  TrainedModel out;
  out.config = cfg;
  out.config.dims = dims;
  out.params = init_model<float>(dims, seeds::model_init(cfg.seed));
  auto params = out.params.parameters();
  AdamState<float> adam;
  const AdamConfig adam_cfg = cfg.adam();

  std::uint32_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto batches = make_batches<float>(data, cfg.batch_size, seeds::epoch_shuffle(cfg.seed, epoch),
                                       cfg.all_pairs);
    for (const auto& batch : batches) {
      ++step;
      out.params.zero_grad();
      ObjectiveResult r;
      try {
        r = evaluate_objective(out.params, batch, cfg.ablation, cfg.loss, true);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + ", batch of " + std::to_string(batch.size()) +
                           " pairs starting at video '" +
                           data.videos[batch.links.front().video].item_id + "')");
      }
      adam_step(params, adam, adam_cfg);
      LossLogEntry e{static_cast<std::uint32_t>(epoch), step, r.components.reconstruction,
                     r.components.content_metric, r.components.discrimination,
                     r.components.intermodal, r.components.fusion, r.composite.total};
      out.history.push_back(e);
      if (on_step) on_step(e);
    }
    out.final_epoch = static_cast<std::uint32_t>(epoch);
  }
  return out;
}

}  // namespace dpvm
