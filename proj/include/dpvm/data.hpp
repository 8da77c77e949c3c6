#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dpvm/errors.hpp"
#include "dpvm/io.hpp"
#include "dpvm/losses.hpp"
#include "dpvm/model.hpp"
#include "dpvm/tensor.hpp"

namespace dpvm {

struct ItemRecord {
  std::string item_id;
  Modality modality = Modality::video;
  std::string pair_group;
  std::vector<float> content_feature;
  std::vector<float> emotion_feature;
  std::size_t emotion_class = 0;
  Polarity polarity = Polarity::neutral;

  friend bool operator==(const ItemRecord&, const ItemRecord&) = default;
};

/// Feature widths declared by a manifest's `#dims` header.
struct TableDims {
  std::size_t video_content = 0, music_content = 0;
  std::size_t video_emotion = 0, music_emotion = 0;
  std::size_t classes = 0;

  std::size_t content(Modality m) const { return m == Modality::video ? video_content : music_content; }
  std::size_t emotion(Modality m) const { return m == Modality::video ? video_emotion : music_emotion; }

  friend bool operator==(const TableDims&, const TableDims&) = default;
};

struct PairLink {
  std::size_t video = 0;  // index into PairSet::videos
  std::size_t music = 0;  // index into PairSet::musics
  friend bool operator==(const PairLink&, const PairLink&) = default;
};

struct PairSet {
  TableDims dims;
  std::vector<ItemRecord> videos;
  std::vector<ItemRecord> musics;
  std::vector<PairLink> pairs;

  /// Pair groups in order of first appearance among the videos.
  std::vector<std::string> groups() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& v : videos)
      if (seen.insert(v.pair_group).second) out.push_back(v.pair_group);
    return out;
  }

  friend bool operator==(const PairSet&, const PairSet&) = default;
};

inline const char* polarity_name(Polarity p) {
  switch (p) {
    case Polarity::negative: return "negative";
    case Polarity::neutral: return "neutral";
    case Polarity::positive: return "positive";
  }
  return "?";
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string where(const std::filesystem::path& file, std::size_t line) {
  return file.string() + ":" + std::to_string(line);
}

inline std::size_t parse_count(const std::string& text, const std::string& ctx) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    throw DataError(ctx + ": expected a non-negative integer, got '" + text + "'");
  }
  if (pos != text.size() || text.empty() || text[0] == '-')
    throw DataError(ctx + ": expected a non-negative integer, got '" + text + "'");
  return static_cast<std::size_t>(v);
}

inline Polarity parse_polarity(const std::string& text, const std::string& ctx) {
  if (text == "0" || text == "negative") return Polarity::negative;
  if (text == "1" || text == "neutral") return Polarity::neutral;
  if (text == "2" || text == "positive") return Polarity::positive;
  throw DataError(ctx + ": polarity must be 0/1/2 or negative/neutral/positive, got '" + text + "'");
}

inline TableDims parse_dims_header(const std::string& line, const std::string& ctx) {
  std::istringstream ss(line);
  std::string tag;
  ss >> tag;
  if (tag != "#dims") throw DataError(ctx + ": first line must be a '#dims ...' header");
  TableDims d;
  std::map<std::string, std::size_t*> slots{{"video_content", &d.video_content},
                                            {"music_content", &d.music_content},
                                            {"video_emotion", &d.video_emotion},
                                            {"music_emotion", &d.music_emotion},
                                            {"classes", &d.classes}};
  std::set<std::string> seen;
  std::string kv;
  while (ss >> kv) {
    const auto eq = kv.find('=');
    const std::string key = kv.substr(0, eq);
    auto it = slots.find(key);
    if (eq == std::string::npos || it == slots.end())
      throw DataError(ctx + ": field '" + key + "': unknown header entry");
    *it->second = parse_count(kv.substr(eq + 1), ctx + ": field '" + key + "'");
    if (*it->second == 0) throw DataError(ctx + ": field '" + key + "': must be >= 1");
    seen.insert(key);
  }
  for (const auto& [key, _] : slots)
    if (!seen.count(key)) throw DataError(ctx + ": field '" + key + "': missing from header");
  return d;
}

}  // namespace detail

/// Loads a manifest plus its pairs file and validates them against each other.
inline PairSet load_feature_table(const std::filesystem::path& manifest_path,
                                  const std::filesystem::path& pairs_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  const auto base = manifest_path.parent_path();

  PairSet set;
  std::string line;
  if (!std::getline(in, line))
    throw DataError(detail::where(manifest_path, 1) + ": empty manifest");
  set.dims = detail::parse_dims_header(detail::trim(line), detail::where(manifest_path, 1));

  std::unordered_map<std::string, std::pair<Modality, std::size_t>> index;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::string at = detail::where(manifest_path, lineno);
    auto f = detail::split_csv(line);
    if (f.size() != 6)
      throw DataError(at + ": expected 6 fields "
                           "(item_id,modality,pair_group,emotion_class,polarity,feature_file), got " +
                      std::to_string(f.size()));
    for (auto& s : f) s = detail::trim(s);

    ItemRecord r;
    r.item_id = f[0];
    if (r.item_id.empty()) throw DataError(at + ": field 'item_id': empty");
    if (f[1] == "video") r.modality = Modality::video;
    else if (f[1] == "music") r.modality = Modality::music;
    else throw DataError(at + ": field 'modality': expected video or music, got '" + f[1] + "'");
    r.pair_group = f[2];
    if (r.pair_group.empty()) throw DataError(at + ": field 'pair_group': empty");
    r.emotion_class = detail::parse_count(f[3], at + ": field 'emotion_class'");
    if (r.emotion_class >= set.dims.classes)
      throw DataError(at + ": field 'emotion_class': " + f[3] + " >= classes " +
                      std::to_string(set.dims.classes));
    r.polarity = detail::parse_polarity(f[4], at + ": field 'polarity'");

    const std::size_t nc = set.dims.content(r.modality), ne = set.dims.emotion(r.modality);
    const auto feature_path = base / f[5];
    std::vector<float> values;
    try {
      values = read_f32_file(feature_path);
    } catch (const IoError& e) {
      throw DataError(at + ": field 'feature_file': " + e.what());
    }
    if (values.size() != nc + ne)
      throw DataError(at + ": field 'feature_file': dimension mismatch, " + f[5] + " holds " +
                      std::to_string(values.size()) + " floats but header expects " +
                      std::to_string(nc) + " content + " + std::to_string(ne) + " emotion");
    r.content_feature.assign(values.begin(), values.begin() + nc);
    r.emotion_feature.assign(values.begin() + nc, values.end());

    auto& bucket = r.modality == Modality::video ? set.videos : set.musics;
    if (!index.emplace(r.item_id, std::make_pair(r.modality, bucket.size())).second)
      throw DataError(at + ": field 'item_id': duplicate id '" + r.item_id + "'");
    bucket.push_back(std::move(r));
  }

  std::ifstream pin(pairs_path);
  if (!pin) throw IoError("cannot open pairs file " + pairs_path.string());
  std::set<std::pair<std::size_t, std::size_t>> seen_pairs;
  lineno = 0;
  while (std::getline(pin, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::string at = detail::where(pairs_path, lineno);
    auto f = detail::split_csv(line);
    if (f.size() != 2) throw DataError(at + ": expected 'video_id,music_id'");
    const std::string vid = detail::trim(f[0]), mid = detail::trim(f[1]);
    auto vit = index.find(vid);
    if (vit == index.end()) throw DataError(at + ": field 'video_id': dangling reference '" + vid + "'");
    if (vit->second.first != Modality::video)
      throw DataError(at + ": field 'video_id': '" + vid + "' is not a video item");
    auto mit = index.find(mid);
    if (mit == index.end()) throw DataError(at + ": field 'music_id': dangling reference '" + mid + "'");
    if (mit->second.first != Modality::music)
      throw DataError(at + ": field 'music_id': '" + mid + "' is not a music item");
    PairLink link{vit->second.second, mit->second.second};
    if (set.videos[link.video].pair_group != set.musics[link.music].pair_group)
      throw DataError(at + ": pair '" + vid + "," + mid + "' spans pair groups '" +
                      set.videos[link.video].pair_group + "' and '" +
                      set.musics[link.music].pair_group + "'");
    if (!seen_pairs.insert({link.video, link.music}).second)
      throw DataError(at + ": duplicate pair '" + vid + "," + mid + "'");
    set.pairs.push_back(link);
  }
  return set;
}

/// Loads `<dir>/manifest.csv` and `<dir>/pairs.csv`.
inline PairSet load_dataset(const std::filesystem::path& dir) {
  return load_feature_table(dir / "manifest.csv", dir / "pairs.csv");
}

/// Writes `set` as manifest.csv, pairs.csv and features/<id>.f32 under `dir`.
/// Each file is renamed into place only once fully written.
inline void write_feature_table(const std::filesystem::path& dir, const PairSet& set) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  std::ostringstream manifest;
  manifest << "#dims video_content=" << set.dims.video_content
           << " music_content=" << set.dims.music_content
           << " video_emotion=" << set.dims.video_emotion
           << " music_emotion=" << set.dims.music_emotion << " classes=" << set.dims.classes << "\n";
  auto emit = [&](const ItemRecord& r) {
    const std::string rel = "features/" + r.item_id + ".f32";
    std::vector<float> values = r.content_feature;
    values.insert(values.end(), r.emotion_feature.begin(), r.emotion_feature.end());
    write_f32_file(dir / rel, values);
    manifest << r.item_id << ',' << to_string(r.modality) << ',' << r.pair_group << ','
             << r.emotion_class << ',' << polarity_value(r.polarity) << ',' << rel << "\n";
  };
  for (const auto& v : set.videos) emit(v);
  for (const auto& m : set.musics) emit(m);
  std::ostringstream pairs;
  for (const auto& p : set.pairs)
    pairs << set.videos[p.video].item_id << ',' << set.musics[p.music].item_id << "\n";
  write_text_atomic(dir / "pairs.csv", pairs.str());
  write_text_atomic(dir / "manifest.csv", manifest.str());
}

/// Keeps only the items of the given pair groups, preserving order.
inline PairSet subset_by_groups(const PairSet& all, const std::set<std::string>& keep) {
  PairSet out;
  out.dims = all.dims;
  std::vector<std::size_t> vmap(all.videos.size(), SIZE_MAX), mmap(all.musics.size(), SIZE_MAX);
  for (std::size_t i = 0; i < all.videos.size(); ++i)
    if (keep.count(all.videos[i].pair_group)) {
      vmap[i] = out.videos.size();
      out.videos.push_back(all.videos[i]);
    }
  for (std::size_t i = 0; i < all.musics.size(); ++i)
    if (keep.count(all.musics[i].pair_group)) {
      mmap[i] = out.musics.size();
      out.musics.push_back(all.musics[i]);
    }
  for (const auto& p : all.pairs)
    if (vmap[p.video] != SIZE_MAX && mmap[p.music] != SIZE_MAX)
      out.pairs.push_back({vmap[p.video], mmap[p.music]});
  return out;
}

struct Split {
  PairSet train;
  PairSet test;
};

/// Shuffles pair groups by seed and assigns floor(70%) of them to train.
inline Split split_dataset(const PairSet& pairs, std::uint64_t seed) {
  auto groups = pairs.groups();
  if (groups.size() < 10)
    throw ConfigError("split_dataset: need at least 10 pair groups, got " +
                      std::to_string(groups.size()));
  std::mt19937_64 rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);
  const std::size_t n_train = groups.size() * 7 / 10;
  std::set<std::string> train(groups.begin(), groups.begin() + n_train);
  std::set<std::string> test(groups.begin() + n_train, groups.end());
  return {subset_by_groups(pairs, train), subset_by_groups(pairs, test)};
}

/// Positive pairs used for training: the first listed pair per video, or all.
inline std::vector<PairLink> training_pairs(const PairSet& set, bool all_pairs) {
  if (all_pairs) return set.pairs;
  std::vector<PairLink> out;
  std::vector<bool> taken(set.videos.size(), false);
  for (const auto& p : set.pairs)
    if (!taken[p.video]) {
      taken[p.video] = true;
      out.push_back(p);
    }
  return out;
}

/// n matched pairs; every off-diagonal (k, i) combination is a mismatched pair.
template <typename T>
struct Batch {
  std::vector<PairLink> links;
  Tensor2<T> video_content, music_content;
  Tensor2<T> video_emotion, music_emotion;
  std::vector<std::size_t> video_class, music_class;
  std::vector<Polarity> polarity;

  std::size_t size() const { return links.size(); }
  PairLabel label(std::size_t k, std::size_t i) const {
    return k == i ? PairLabel::matched : PairLabel::mismatched;
  }
  std::size_t negative_count() const { return size() * (size() - 1); }
};

template <typename T>
Batch<T> materialize_batch(const PairSet& set, std::span<const PairLink> links) {
  const std::size_t n = links.size();
  Batch<T> b;
  b.links.assign(links.begin(), links.end());
  b.video_content = Tensor2<T>(n, set.dims.video_content);
  b.music_content = Tensor2<T>(n, set.dims.music_content);
  b.video_emotion = Tensor2<T>(n, set.dims.video_emotion);
  b.music_emotion = Tensor2<T>(n, set.dims.music_emotion);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& v = set.videos[links[k].video];
    const auto& m = set.musics[links[k].music];
    std::copy(v.content_feature.begin(), v.content_feature.end(), b.video_content.row(k).begin());
    std::copy(m.content_feature.begin(), m.content_feature.end(), b.music_content.row(k).begin());
    std::copy(v.emotion_feature.begin(), v.emotion_feature.end(), b.video_emotion.row(k).begin());
    std::copy(m.emotion_feature.begin(), m.emotion_feature.end(), b.music_emotion.row(k).begin());
    b.video_class.push_back(v.emotion_class);
    b.music_class.push_back(m.emotion_class);
    b.polarity.push_back(v.polarity);
  }
  return b;
}

/// One epoch of batches: the positive pairs shuffled by seed and cut into
/// consecutive chunks of batch_size (the last may be short).
template <typename T>
std::vector<Batch<T>> make_batches(const PairSet& train, std::size_t batch_size,
                                   std::uint64_t seed, bool all_pairs = false) {
  if (batch_size < 2)
    throw ConfigError("make_batches: batch_size must be >= 2 so metric losses have in-batch "
                      "negatives, got " + std::to_string(batch_size));
  auto links = training_pairs(train, all_pairs);
  std::mt19937_64 rng(seed);
  std::shuffle(links.begin(), links.end(), rng);
  std::vector<Batch<T>> out;
  for (std::size_t begin = 0; begin < links.size(); begin += batch_size) {
    const std::size_t len = std::min(batch_size, links.size() - begin);
    out.push_back(materialize_batch<T>(train, std::span<const PairLink>(links).subspan(begin, len)));
  }
  return out;
}

}  // namespace dpvm
