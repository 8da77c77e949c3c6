#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpvm/data.hpp"
#include "dpvm/synthetic.hpp"
#include "dpvm/trainer.hpp"

namespace dpvm {

/// Everything a CLI run needs. Defaults are the published training settings.
struct RunConfig {
  TrainConfig train;
  SyntheticSpec synth;
  std::size_t threads = 1;
  // Evaluate against the test split's musics ("test") or every music item ("all").
  std::string eval_corpus = "test";

  void validate() const {
    train.validate();
    synth.validate();
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (eval_corpus != "test" && eval_corpus != "all")
      throw ConfigError("eval_corpus must be 'test' or 'all', got '" + eval_corpus + "'");
  }
};

namespace detail {

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty())
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::string real_str(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct KeySpec {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define DPVM_SIZE_KEY(name, member)                                                         \
  {name, {[](RunConfig& c, const std::string& v) { c.member = parse_int<std::size_t>(name, v); }, \
          [](const RunConfig& c) { return std::to_string(c.member); }}}
#define DPVM_REAL_KEY(name, member)                                                      \
  {name, {[](RunConfig& c, const std::string& v) { c.member = parse_real(name, v); }, \
          [](const RunConfig& c) { return real_str(c.member); }}}

inline Ablation parse_ablation(const std::string& v) {
  if (v == "content" || v == "content_only") return Ablation::content_only;
  if (v == "emotion" || v == "emotion_only") return Ablation::emotion_only;
  if (v == "splicing") return Ablation::splicing;
  if (v == "interactive") return Ablation::interactive;
  throw ConfigError("config key 'ablation': expected content|emotion|splicing|interactive, got '" + v + "'");
}

inline MetricVariant parse_metric(const std::string& v) {
  if (v == "contrastive") return MetricVariant::contrastive;
  if (v == "batch" || v == "batch_metric") return MetricVariant::batch_metric;
  if (v == "ppml") return MetricVariant::ppml;
  throw ConfigError("config key 'metric': expected contrastive|batch|ppml, got '" + v + "'");
}

inline const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = {
      DPVM_SIZE_KEY("epochs", train.epochs),
      DPVM_SIZE_KEY("batch_size", train.batch_size),
      DPVM_REAL_KEY("learning_rate", train.learning_rate),
      DPVM_REAL_KEY("beta1", train.beta1),
      DPVM_REAL_KEY("beta2", train.beta2),
      DPVM_REAL_KEY("adam_epsilon", train.adam_epsilon),
      {"seed",
       {[](RunConfig& c, const std::string& v) {
          c.train.seed = parse_int<std::uint64_t>("seed", v);
          c.synth.seed = c.train.seed;
        },
        [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
      {"ablation", {[](RunConfig& c, const std::string& v) { c.train.ablation = parse_ablation(v); },
                    [](const RunConfig& c) { return std::string(to_string(c.train.ablation)); }}},
      {"metric", {[](RunConfig& c, const std::string& v) { c.train.loss.metric_variant = parse_metric(v); },
                  [](const RunConfig& c) { return std::string(to_string(c.train.loss.metric_variant)); }}},
      {"metric_site",
       {[](RunConfig& c, const std::string& v) {
          if (v == "content") c.train.loss.metric_site = MetricSite::content;
          else if (v == "fused") c.train.loss.metric_site = MetricSite::fused;
          else throw ConfigError("config key 'metric_site': expected content|fused, got '" + v + "'");
        },
        [](const RunConfig& c) { return std::string(to_string(c.train.loss.metric_site)); }}},
      {"intermodal_pairs",
       {[](RunConfig& c, const std::string& v) {
          if (v == "mismatched") c.train.loss.intermodal_pairs = IntermodalPairs::mismatched;
          else if (v == "matched") c.train.loss.intermodal_pairs = IntermodalPairs::matched;
          else throw ConfigError("config key 'intermodal_pairs': expected mismatched|matched, got '" + v + "'");
        },
        [](const RunConfig& c) { return std::string(to_string(c.train.loss.intermodal_pairs)); }}},
      DPVM_REAL_KEY("margin", train.loss.margin),
      DPVM_REAL_KEY("lambda1", train.loss.lambda1),
      DPVM_REAL_KEY("lambda2", train.loss.lambda2),
      DPVM_REAL_KEY("mu1", train.loss.mu1),
      DPVM_REAL_KEY("mu2", train.loss.mu2),
      DPVM_REAL_KEY("k1", train.loss.k1),
      DPVM_REAL_KEY("k2", train.loss.k2),
      DPVM_REAL_KEY("k3", train.loss.k3),
      {"all_pairs", {[](RunConfig& c, const std::string& v) { c.train.all_pairs = parse_bool("all_pairs", v); },
                     [](const RunConfig& c) { return std::string(c.train.all_pairs ? "true" : "false"); }}},
      DPVM_SIZE_KEY("content_code_dim", train.dims.content_code_dim),
      DPVM_SIZE_KEY("emotion_code_dim", train.dims.emotion_code_dim),
      DPVM_SIZE_KEY("fused_dim", train.dims.fused_dim),
      DPVM_SIZE_KEY("hidden_width", train.dims.hidden_width),
      DPVM_SIZE_KEY("encoder_hidden_layers", train.dims.encoder_hidden_layers),
      DPVM_SIZE_KEY("mlp_hidden_layers", train.dims.mlp_hidden_layers),
      {"hidden_activation",
       {[](RunConfig& c, const std::string& v) {
          if (v == "relu") c.train.dims.hidden_activation = Activation::relu;
          else if (v == "identity") c.train.dims.hidden_activation = Activation::identity;
          else throw ConfigError("config key 'hidden_activation': expected relu|identity, got '" + v + "'");
        },
        [](const RunConfig& c) { return std::string(to_string(c.train.dims.hidden_activation)); }}},
      DPVM_SIZE_KEY("pairs", synth.num_pairs),
      DPVM_SIZE_KEY("musics_per_video", synth.musics_per_video),
      DPVM_SIZE_KEY("latent_content_dim", synth.latent_content_dim),
      DPVM_SIZE_KEY("latent_emotion_dim", synth.latent_emotion_dim),
      DPVM_SIZE_KEY("video_content_dim", synth.video_content_dim),
      DPVM_SIZE_KEY("music_content_dim", synth.music_content_dim),
      DPVM_SIZE_KEY("video_emotion_dim", synth.video_emotion_dim),
      DPVM_SIZE_KEY("music_emotion_dim", synth.music_emotion_dim),
      DPVM_SIZE_KEY("num_classes", synth.num_classes),
      DPVM_REAL_KEY("noise_sigma", synth.noise_sigma),
      DPVM_REAL_KEY("class_spread", synth.class_spread),
      DPVM_REAL_KEY("class_separation", synth.class_separation),
      DPVM_REAL_KEY("cross_leak", synth.cross_leak),
      DPVM_SIZE_KEY("threads", threads),
      {"eval_corpus", {[](RunConfig& c, const std::string& v) { c.eval_corpus = v; },
                       [](const RunConfig& c) { return c.eval_corpus; }}},
  };
  return table;
}

#undef DPVM_SIZE_KEY
#undef DPVM_REAL_KEY

}  // namespace detail

/// Applies one `key=value` setting; unknown keys and malformed values throw ConfigError.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = detail::key_table();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

/// Parses flat `key = value` text; '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                         const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value");
    out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return out;
}

/// Defaults, then the file (if any), then `overrides`, in increasing precedence.
inline RunConfig parse_config(const std::filesystem::path& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : parse_key_values(ss.str(), path.string())) apply_setting(cfg, k, v);
  }
  for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
  cfg.validate();
  return cfg;
}

/// The effective configuration as `key=value` lines in key order; parses back to itself.
inline std::string to_config_text(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& [key, spec] : detail::key_table()) os << key << '=' << spec.get(cfg) << "\n";
  return os.str();
}

inline RunConfig config_from_text(const std::string& text, const std::string& source) {
  RunConfig cfg;
  for (const auto& [k, v] : parse_key_values(text, source)) apply_setting(cfg, k, v);
  return cfg;
}

inline std::uint64_t config_digest(const RunConfig& cfg) { return fnv1a(to_config_text(cfg)); }

/// Prefixes every line of the effective config with "# ".
inline std::string config_echo(const RunConfig& cfg) {
  std::ostringstream os;
  std::istringstream in(to_config_text(cfg));
  std::string line;
  while (std::getline(in, line)) os << "# " << line << "\n";
  return os.str();
}

}  // namespace dpvm
