#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dpvm/data.hpp"

namespace dpvm {

/// Paired video/music features generated from shared latent factors.
///
/// Each pair group draws a content latent z_c ~ N(0, I) and an emotion class
/// c, then an emotion latent z_e = centre_c + class_spread * N(0, I). Every
/// feature block is a fixed random linear image of [z_c ; z_e] plus Gaussian
/// noise. Content blocks read z_c (and z_e scaled by cross_leak); emotion
/// blocks read z_e (and z_c scaled by cross_leak). Polarity follows the class.
struct SyntheticSpec {
  std::size_t num_pairs = 100;  // pair groups, one video each
  std::size_t musics_per_video = 1;
  std::size_t latent_content_dim = 16;
  std::size_t latent_emotion_dim = 8;
  std::size_t video_content_dim = 512;
  std::size_t music_content_dim = 256;
  std::size_t video_emotion_dim = 128;
  std::size_t music_emotion_dim = 64;
  std::size_t num_classes = 4;
  double noise_sigma = 0.1;
  double class_spread = 0.5;
  double class_separation = 1.5;
  double cross_leak = 0.0;
  std::vector<double> class_weights;      // empty: uniform
  std::vector<Polarity> class_polarity;   // empty: default_class_polarity
  std::uint64_t seed = 0;

  void validate() const {
    const std::pair<const char*, std::size_t> dims[] = {
        {"num_pairs", num_pairs},
        {"musics_per_video", musics_per_video},
        {"latent_content_dim", latent_content_dim},
        {"latent_emotion_dim", latent_emotion_dim},
        {"video_content_dim", video_content_dim},
        {"music_content_dim", music_content_dim},
        {"video_emotion_dim", video_emotion_dim},
        {"music_emotion_dim", music_emotion_dim},
        {"num_classes", num_classes}};
    for (const auto& [name, v] : dims)
      if (v < 1) throw ConfigError(std::string("synthetic: ") + name + " must be >= 1");
    if (!(noise_sigma >= 0.0)) throw ConfigError("synthetic: noise_sigma must be >= 0");
    if (!(class_spread >= 0.0)) throw ConfigError("synthetic: class_spread must be >= 0");
    if (!class_weights.empty() && class_weights.size() != num_classes)
      throw ConfigError("synthetic: class_weights needs one entry per class");
    if (!class_polarity.empty() && class_polarity.size() != num_classes)
      throw ConfigError("synthetic: class_polarity needs one entry per class");
  }
};

/// sad, happy, scared, surprised -> negative, positive, negative, neutral;
/// further classes cycle through the three polarities.
inline Polarity default_class_polarity(std::size_t cls) {
  static const Polarity first[] = {Polarity::negative, Polarity::positive, Polarity::negative,
                                   Polarity::neutral};
  if (cls < 4) return first[cls];
  return static_cast<Polarity>(cls % 3);
}

struct KeyEntry {
  std::string video_id;
  std::string music_id;
  std::uint64_t latent_seed = 0;
};

struct SyntheticCorpus {
  PairSet set;
  std::vector<KeyEntry> key;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
  return buf;
}

// rows x (lc + le) map; the block named by reads_content is read at full scale, the other at `leak`.
inline std::vector<double> latent_map(std::mt19937_64& rng, std::size_t rows, std::size_t lc,
                                      std::size_t le, bool reads_content, double leak) {
  const std::size_t cols = lc + le;
  std::vector<double> a(rows * cols);
  std::normal_distribution<double> nc(0.0, 1.0 / std::sqrt(static_cast<double>(lc)));
  std::normal_distribution<double> ne(0.0, 1.0 / std::sqrt(static_cast<double>(le)));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const bool content_col = c < lc;
      const double v = content_col ? nc(rng) : ne(rng);
      a[r * cols + c] = v * (content_col == reads_content ? 1.0 : leak);
    }
  return a;
}

inline std::vector<float> apply_map(const std::vector<double>& a, std::size_t rows,
                                    const std::vector<double>& z, double sigma,
                                    std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<float> out(rows);
  const std::size_t cols = z.size();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += a[r * cols + c] * z[c];
    if (sigma > 0.0) s += sigma * noise(rng);
    out[r] = static_cast<float>(s);
  }
  return out;
}

}  // namespace detail

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t lc = spec.latent_content_dim, le = spec.latent_emotion_dim;
  std::mt19937_64 master(spec.seed);

  const auto a_vc = detail::latent_map(master, spec.video_content_dim, lc, le, true, spec.cross_leak);
  const auto a_mc = detail::latent_map(master, spec.music_content_dim, lc, le, true, spec.cross_leak);
  const auto a_ve = detail::latent_map(master, spec.video_emotion_dim, lc, le, false, spec.cross_leak);
  const auto a_me = detail::latent_map(master, spec.music_emotion_dim, lc, le, false, spec.cross_leak);

  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> centres(spec.num_classes, std::vector<double>(le));
  for (auto& c : centres)
    for (auto& x : c) x = spec.class_separation * unit(master);

  std::vector<double> weights = spec.class_weights;
  if (weights.empty()) weights.assign(spec.num_classes, 1.0);
  const std::uint64_t group_salt = master();

  SyntheticCorpus corpus;
  auto& set = corpus.set;
  set.dims = {spec.video_content_dim, spec.music_content_dim, spec.video_emotion_dim,
              spec.music_emotion_dim, spec.num_classes};

  for (std::size_t g = 0; g < spec.num_pairs; ++g) {
    const std::uint64_t latent_seed = detail::splitmix64(group_salt + g);
    std::mt19937_64 rng(latent_seed);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const std::size_t cls = pick(rng);
    const Polarity pol =
        spec.class_polarity.empty() ? default_class_polarity(cls) : spec.class_polarity[cls];

    std::vector<double> z(lc + le);
    for (std::size_t i = 0; i < lc; ++i) z[i] = unit(rng);
    for (std::size_t i = 0; i < le; ++i) z[lc + i] = centres[cls][i] + spec.class_spread * unit(rng);

    const std::string group = detail::numbered("g", g);
    ItemRecord v;
    v.item_id = detail::numbered("v", g);
    v.modality = Modality::video;
    v.pair_group = group;
    v.emotion_class = cls;
    v.polarity = pol;
    v.content_feature = detail::apply_map(a_vc, spec.video_content_dim, z, spec.noise_sigma, rng);
    v.emotion_feature = detail::apply_map(a_ve, spec.video_emotion_dim, z, spec.noise_sigma, rng);
    const std::size_t vi = set.videos.size();
    set.videos.push_back(v);

    for (std::size_t j = 0; j < spec.musics_per_video; ++j) {
      ItemRecord m;
      m.item_id = detail::numbered("m", g) + "_" + std::to_string(j);
      m.modality = Modality::music;
      m.pair_group = group;
      m.emotion_class = cls;
      m.polarity = pol;
      m.content_feature = detail::apply_map(a_mc, spec.music_content_dim, z, spec.noise_sigma, rng);
      m.emotion_feature = detail::apply_map(a_me, spec.music_emotion_dim, z, spec.noise_sigma, rng);
      set.pairs.push_back({vi, set.musics.size()});
      corpus.key.push_back({v.item_id, m.item_id, latent_seed});
      set.musics.push_back(std::move(m));
    }
  }
  return corpus;
}

/// Writes the feature table plus key.csv (`video_id,music_id,latent_seed`).
inline void write_synthetic(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  write_feature_table(dir, corpus.set);
  std::ostringstream key;
  for (const auto& k : corpus.key) key << k.video_id << ',' << k.music_id << ',' << k.latent_seed << "\n";
  write_text_atomic(dir / "key.csv", key.str());
}

}  // namespace dpvm
