#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dpvm/dpvm.hpp"

namespace dpvm::test {

using Vec = std::vector<double>;

inline std::span<const double> s(const Vec& v) { return v; }

inline Vec random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  Vec v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

/// Small synthetic spec for fast tests.
inline SyntheticSpec small_spec(std::size_t pairs, std::uint64_t seed) {
  SyntheticSpec s;
  s.num_pairs = pairs;
  s.video_content_dim = 24;
  s.music_content_dim = 20;
  s.video_emotion_dim = 12;
  s.music_emotion_dim = 10;
  s.latent_content_dim = 8;
  s.latent_emotion_dim = 4;
  s.seed = seed;
  return s;
}

/// Architecture sized for small_spec data.
inline ModelDims small_arch() {
  ModelDims d;
  d.content_code_dim = 8;
  d.emotion_code_dim = 8;
  d.fused_dim = 8;
  d.hidden_width = 16;
  return d;
}

/// Model initialised from the first seed at or after `seed` whose forward
/// pass on `b` is free of zero-norm embeddings; with `checkable`, also away
/// from kinks and without unresolvably small gradient coordinates.
inline ModelParams<double> usable_model(const ModelDims& d, const Batch<double>& b, Ablation a,
                                        const LossConfig& cfg, std::uint64_t seed,
                                        bool checkable = false) {
  const GradSuiteOptions opt;
  for (std::uint64_t s = seed;; s += 1000) {
    auto p = init_model<double>(d, s);
    try {
      const auto r = evaluate_objective(p, b, a, cfg, true);
      bool ok = true;
      if (checkable) {
        if (r.kink_distance < opt.min_kink_distance) continue;
        const double floor = resolvable_gradient(r.composite.total, opt);
        for (const auto* t : p.parameters())
          for (double g : t->grad.values()) ok = ok && (g == 0.0 || std::abs(g) >= floor);
      }
      p.zero_grad();
      if (ok) return p;
    } catch (const DegenerateInputError&) {
    }
  }
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("dpvm_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace dpvm::test
