#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dpvm/cosine.hpp"
#include "dpvm/data.hpp"
#include "dpvm/model.hpp"
#include "dpvm/objective.hpp"

namespace dpvm {

enum class EmbeddingKind { content, emotion, splicing, interactive };

inline const char* to_string(EmbeddingKind k) {
  switch (k) {
    case EmbeddingKind::content: return "content";
    case EmbeddingKind::emotion: return "emotion";
    case EmbeddingKind::splicing: return "splicing";
    case EmbeddingKind::interactive: return "interactive";
  }
  return "?";
}

inline EmbeddingKind embedding_kind_for(Ablation a) {
  switch (a) {
    case Ablation::content_only: return EmbeddingKind::content;
    case Ablation::emotion_only: return EmbeddingKind::emotion;
    case Ablation::splicing: return EmbeddingKind::splicing;
    case Ablation::interactive: return EmbeddingKind::interactive;
  }
  return EmbeddingKind::interactive;
}

inline const std::vector<std::size_t>& default_recall_ks() {
  static const std::vector<std::size_t> ks{1, 5, 10, 15, 20, 25};
  return ks;
}

/// Unit-normalized embeddings of `items` (all of one modality) along the
/// path selected by `kind`.
template <typename T>
Tensor2<T> embed_items(const ModelParams<T>& p, const std::vector<ItemRecord>& items,
                       Modality m, EmbeddingKind kind) {
  const std::size_t n = items.size();
  Tensor2<T> content(n, p.dims.content_dim(m)), emotion(n, p.dims.emotion_dim(m));
  const bool need_content = kind != EmbeddingKind::emotion;
  const bool need_emotion = kind != EmbeddingKind::content;
  for (std::size_t r = 0; r < n; ++r) {
    if (items[r].modality != m)
      throw DataError("embed: item '" + items[r].item_id + "' is not a " + to_string(m) + " item");
    if (need_content) {
      if (items[r].content_feature.size() != content.cols())
        throw ConfigError("embed: item '" + items[r].item_id + "' content width " +
                          std::to_string(items[r].content_feature.size()) + " != model " +
                          std::to_string(content.cols()));
      std::copy(items[r].content_feature.begin(), items[r].content_feature.end(),
                content.row(r).begin());
    }
    if (need_emotion) {
      if (items[r].emotion_feature.size() != emotion.cols())
        throw ConfigError("embed: item '" + items[r].item_id + "' emotion width " +
                          std::to_string(items[r].emotion_feature.size()) + " != model " +
                          std::to_string(emotion.cols()));
      std::copy(items[r].emotion_feature.begin(), items[r].emotion_feature.end(),
                emotion.row(r).begin());
    }
  }

  Tensor2<T> emb;
  switch (kind) {
    case EmbeddingKind::content: emb = content_forward_batch(p, content, m).code; break;
    case EmbeddingKind::emotion: emb = emotion_forward_batch(p, emotion, m).code; break;
    case EmbeddingKind::splicing:
    case EmbeddingKind::interactive: {
      auto c = content_forward_batch(p, content, m).code;
      auto e = emotion_forward_batch(p, emotion, m).code;
      emb = fuse_batch(p, c, e,
                       kind == EmbeddingKind::splicing ? FusionMode::splicing : FusionMode::interactive);
      break;
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    auto row = emb.row(r);
    const T norm = l2_norm<T>(row);
    if (!(norm > T(0)))
      throw DegenerateInputError("embed: zero-norm embedding for item '" + items[r].item_id + "'");
    for (auto& v : row) v /= norm;
  }
  return emb;
}

struct EmbeddingIndex {
  std::vector<std::string> music_ids;
  Tensor2<float> embeddings;  // unit-norm rows
  EmbeddingKind kind = EmbeddingKind::interactive;
};

inline EmbeddingIndex embed_corpus(const ModelParams<float>& p, const std::vector<ItemRecord>& musics,
                                   EmbeddingKind kind) {
  EmbeddingIndex idx;
  idx.kind = kind;
  for (const auto& m : musics) idx.music_ids.push_back(m.item_id);
  idx.embeddings = embed_items(p, musics, Modality::music, kind);
  return idx;
}

struct RankedItem {
  std::string music_id;
  double similarity = 0.0;
};

struct Ranking {
  std::vector<RankedItem> items;
  bool truncated = false;  // K exceeded the corpus size
};

/// Top-K by descending cosine similarity; ties go to the smaller music id.
inline Ranking rank_for_query(const EmbeddingIndex& index, std::span<const float> query,
                              std::size_t k) {
  if (k < 1) throw ConfigError("rank_for_query: K must be >= 1");
  if (query.size() != index.embeddings.cols())
    throw ConfigError("rank_for_query: query width " + std::to_string(query.size()) +
                      " != index width " + std::to_string(index.embeddings.cols()));
  const std::size_t n = index.music_ids.size();
  Ranking out;
  if (k > n) {
    k = n;
    out.truncated = true;
  }
  double qn = 0.0;
  for (float v : query) qn += static_cast<double>(v) * v;
  qn = std::sqrt(qn);
  if (!(qn > 0.0)) throw DegenerateInputError("rank_for_query: zero-norm query");

  std::vector<std::pair<double, std::size_t>> scored(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = index.embeddings.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += static_cast<double>(row[j]) * query[j];
    scored[i] = {s / qn, i};
  }
  auto better = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return index.music_ids[a.second] < index.music_ids[b.second];
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
  for (std::size_t i = 0; i < k; ++i)
    out.items.push_back({index.music_ids[scored[i].second], scored[i].first});
  return out;
}

struct RecallReport {
  std::map<std::size_t, double> recall_at;  // K -> percentage
  std::size_t num_queries = 0;
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const RecallReport&, const RecallReport&) = default;
};

/// Recall@K = 100 * (#queries with any ground-truth id in their top K) / #queries.
inline RecallReport recall_at_k(const std::map<std::string, std::vector<std::string>>& rankings,
                                const std::map<std::string, std::set<std::string>>& truth,
                                const std::vector<std::size_t>& ks = default_recall_ks()) {
  if (truth.empty()) throw DataError("recall_at_k: no queries");
  RecallReport rep;
  rep.num_queries = truth.size();
  std::map<std::size_t, std::size_t> hits;
  for (auto k : ks) {
    if (k < 1) throw ConfigError("recall_at_k: K must be >= 1");
    hits[k] = 0;
  }
  for (const auto& [query, ids] : truth) {
    if (ids.empty()) throw DataError("recall_at_k: query '" + query + "' has no ground truth");
    auto it = rankings.find(query);
    if (it == rankings.end()) throw DataError("recall_at_k: query '" + query + "' missing from rankings");
    const auto& ranked = it->second;
    // First rank (1-based) at which a ground-truth id appears.
    std::size_t first = SIZE_MAX;
    for (std::size_t r = 0; r < ranked.size(); ++r)
      if (ids.count(ranked[r])) {
        first = r + 1;
        break;
      }
    for (auto& [k, h] : hits)
      if (first <= k) ++h;
  }
  for (const auto& [k, h] : hits)
    rep.recall_at[k] = 100.0 * static_cast<double>(h) / static_cast<double>(rep.num_queries);
  return rep;
}

struct EvalOptions {
  std::vector<std::size_t> ks = default_recall_ks();
  // Music items to search; empty means the query set's own musics.
  const std::vector<ItemRecord>* corpus = nullptr;
  // When set, evaluation refuses any query or corpus id that appears here.
  const PairSet* exclude = nullptr;
  std::size_t threads = 1;
};

/// Embeds the music corpus, ranks it for every video in `queries`, and scores
/// a hit when any music of the video's pair group is in the top K.
inline RecallReport evaluate(const ModelParams<float>& p, const PairSet& queries,
                             EmbeddingKind kind, const EvalOptions& opt = {}) {
  if (queries.videos.empty()) throw DataError("evaluate: no query videos");
  const auto& corpus = opt.corpus ? *opt.corpus : queries.musics;
  if (corpus.empty()) throw DataError("evaluate: empty music corpus");

  if (opt.exclude) {
    std::set<std::string> banned;
    for (const auto& v : opt.exclude->videos) banned.insert(v.item_id);
    for (const auto& m : opt.exclude->musics) banned.insert(m.item_id);
    for (const auto& v : queries.videos)
      if (banned.count(v.item_id))
        throw DataError("evaluate: query video '" + v.item_id + "' is a training item");
    for (const auto& m : queries.musics)
      if (banned.count(m.item_id))
        throw DataError("evaluate: music '" + m.item_id + "' is a training item");
  }

  const auto index = embed_corpus(p, corpus, kind);
  const auto query_emb = embed_items(p, queries.videos, Modality::video, kind);
  std::size_t max_k = 1;
  for (auto k : opt.ks) max_k = std::max(max_k, k);

  std::map<std::string, std::set<std::string>> truth;
  for (const auto& v : queries.videos) {
    auto& t = truth[v.item_id];
    for (const auto& m : corpus)
      if (m.pair_group == v.pair_group) t.insert(m.item_id);
  }

  const std::size_t nq = queries.videos.size();
  std::vector<std::vector<std::string>> ranked(nq);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t q = begin; q < nq; q += stride) {
      auto r = rank_for_query(index, query_emb.row(q), max_k);
      for (auto& it : r.items) ranked[q].push_back(std::move(it.music_id));
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(opt.threads, nq));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  std::map<std::string, std::vector<std::string>> rankings;
  for (std::size_t q = 0; q < nq; ++q) rankings[queries.videos[q].item_id] = std::move(ranked[q]);
  return recall_at_k(rankings, truth, opt.ks);
}

/// Table layout: one header row of Recall@K columns and one row of values.
inline std::string format_report_table(const RecallReport& r, const std::string& label) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "Method";
  for (const auto& [k, _] : r.recall_at) os << std::setw(12) << ("Recall@" + std::to_string(k));
  os << "\n" << std::setw(16) << label << std::fixed << std::setprecision(2);
  for (const auto& [_, v] : r.recall_at) os << std::setw(12) << v;
  os << "\n";
  return os.str();
}

/// Machine-readable `K=<k> recall=<pct>` lines.
inline std::string format_report_lines(const RecallReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  for (const auto& [k, v] : r.recall_at) os << "K=" << k << " recall=" << v << "\n";
  return os.str();
}

}  // namespace dpvm
