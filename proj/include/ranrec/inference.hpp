#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_set>
#include <vector>

#include "ranrec/error.hpp"
#include "ranrec/gnn.hpp"
#include "ranrec/graph.hpp"
#include "ranrec/matrix.hpp"

namespace ranrec {

struct StoreRecord {
  std::string cell_id;
  std::vector<double> z;
  std::vector<double> y;
};

/// Append-only set of (cell, embedding, config) records plus the frozen
/// encoder that produced them. Reads may run concurrently; add() takes an
/// exclusive lock.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::size_t d, std::shared_ptr<const EncoderStack> encoder = nullptr)
      : d_(d), encoder_(std::move(encoder)) {}

  EmbeddingStore(const EmbeddingStore& o) {
    std::shared_lock lock(o.mutex_);
    d_ = o.d_;
    encoder_ = o.encoder_;
    records_ = o.records_;
    ids_ = o.ids_;
  }
  EmbeddingStore& operator=(const EmbeddingStore& o) {
    if (this == &o) return *this;
    EmbeddingStore tmp(o);
    std::unique_lock lock(mutex_);
    d_ = tmp.d_;
    encoder_ = std::move(tmp.encoder_);
    records_ = std::move(tmp.records_);
    ids_ = std::move(tmp.ids_);
    return *this;
  }

  std::size_t dim() const { return d_; }
  const EncoderStack* encoder() const { return encoder_.get(); }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
  }
  bool empty() const { return size() == 0; }

  bool contains(const std::string& id) const {
    std::shared_lock lock(mutex_);
    return ids_.count(id) != 0;
  }

  /// Snapshot of the records.
  std::vector<StoreRecord> records() const {
    std::shared_lock lock(mutex_);
    return records_;
  }

  template <class Fn>
  decltype(auto) read(Fn&& fn) const {
    std::shared_lock lock(mutex_);
    return fn(records_);
  }

  void add(std::string cell_id, std::vector<double> z, std::vector<double> y) {
    std::unique_lock lock(mutex_);
    if (z.size() != d_)
      throw ValidationError("store: embedding has dimension " + std::to_string(z.size()) +
                            ", expected " + std::to_string(d_));
    if (ids_.count(cell_id)) throw ValidationError("store: duplicate cell_id '" + cell_id + "'");
    ids_.insert(cell_id);
    records_.push_back({std::move(cell_id), std::move(z), std::move(y)});
  }

 private:
  std::size_t d_ = 0;
  std::shared_ptr<const EncoderStack> encoder_;
  std::vector<StoreRecord> records_;
  std::unordered_set<std::string> ids_;
  mutable std::shared_mutex mutex_;
};

inline void add_to_store(EmbeddingStore& store, std::string cell_id, std::vector<double> z,
                         std::vector<double> y) {
  store.add(std::move(cell_id), std::move(z), std::move(y));
}

/// Center-vertex embedding of a (normalized) subgraph under the store's encoder.
inline std::vector<double> embed_new_cell(const EmbeddingStore& store, const Subgraph& sg) {
  if (!store.encoder()) throw ValidationError("store has no encoder attached");
  auto z = embed_center(*store.encoder(), sg);
  if (z.size() != store.dim())
    throw ValidationError("encoder produces " + std::to_string(z.size()) +
                          "-dim embeddings but the store holds " + std::to_string(store.dim()));
  return z;
}

struct DistanceEntry {
  std::string cell_id;
  double distance = 0.0;
  std::size_t record = 0;  ///< position in the store
};

/// Latent distances from a query to every stored record, ascending by
/// (distance, cell_id). `removed` counts pop_min() calls.
struct DistanceSet {
  std::vector<DistanceEntry> entries;
  std::size_t removed = 0;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

inline bool distance_less(const DistanceEntry& a, const DistanceEntry& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.cell_id < b.cell_id;
}

inline DistanceSet distance_set(const EmbeddingStore& store, const std::vector<double>& z) {
  return store.read([&](const std::vector<StoreRecord>& records) {
    if (records.empty()) throw ValidationError("distance_set: the store is empty");
    if (z.size() != store.dim())
      throw ValidationError("distance_set: query has dimension " + std::to_string(z.size()) +
                            ", store holds " + std::to_string(store.dim()));
    DistanceSet f;
    f.entries.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
      f.entries.push_back({records[i].cell_id, l2_distance(z, records[i].z), i});
    std::sort(f.entries.begin(), f.entries.end(), distance_less);
    return f;
  });
}

/// Removes and returns the smallest entry.
inline std::pair<DistanceEntry, DistanceSet> pop_min(DistanceSet f) {
  if (f.entries.empty()) throw ValidationError("pop_min: the distance set is empty");
  DistanceEntry head = std::move(f.entries.front());
  f.entries.erase(f.entries.begin());
  ++f.removed;
  return {std::move(head), std::move(f)};
}

enum class RecommendMode { Closest, Majority };

inline const char* to_string(RecommendMode m) {
  return m == RecommendMode::Closest ? "closest" : "majority";
}

inline RecommendMode parse_recommend_mode(const std::string& s) {
  if (s == "closest") return RecommendMode::Closest;
  if (s == "majority") return RecommendMode::Majority;
  throw ValidationError("invalid mode '" + s + "' (expected closest or majority)");
}

struct RecommendationSource {
  std::string cell_id;
  double distance = 0.0;
};

struct Recommendation {
  std::vector<double> y_hat;
  RecommendMode mode = RecommendMode::Closest;
  std::vector<RecommendationSource> sources;
  std::size_t k = 1;
};

inline Recommendation recommend_closest(const EmbeddingStore& store, const std::vector<double>& z) {
  const auto f = distance_set(store, z);
  const DistanceEntry& best = f.entries.front();
  Recommendation r;
  r.mode = RecommendMode::Closest;
  r.k = 1;
  r.sources.push_back({best.cell_id, best.distance});
  r.y_hat = store.read([&](const auto& records) { return records[best.record].y; });
  return r;
}

/// Combines one attribute's values, listed nearest neighbor first.
inline double aggregate_values(const std::vector<double>& values, Aggregation policy) {
  if (values.empty()) throw ValidationError("aggregate of no values");
  switch (policy) {
    case Aggregation::Mean: {
      double s = 0.0;
      for (double v : values) s += v;
      return s / static_cast<double>(values.size());
    }
    case Aggregation::Median: {
      std::vector<double> v = values;
      std::sort(v.begin(), v.end());
      const std::size_t mid = v.size() / 2;
      return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
    }
    case Aggregation::Mode: {
      // Ties go to the value seen first, i.e. from the nearer neighbor.
      std::map<double, std::size_t> counts;
      for (double v : values) counts[v]++;
      double best = values.front();
      std::size_t best_count = 0;
      for (double v : values)
        if (counts[v] > best_count) {
          best = v;
          best_count = counts[v];
        }
      return best;
    }
  }
  return values.front();
}

/// Aggregates the configs of the K nearest records, attribute by attribute,
/// using each config attribute's schema policy.
inline Recommendation recommend_majority(const EmbeddingStore& store, const std::vector<double>& z,
                                         std::size_t k, const AttributeSchema& schema) {
  const std::size_t n = store.size();
  if (k < 1 || k > n)
    throw ValidationError("K = " + std::to_string(k) + " is out of range for a store of " +
                          std::to_string(n) + " records");
  DistanceSet f = distance_set(store, z);
  Recommendation r;
  r.mode = RecommendMode::Majority;
  r.k = k;
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < k; ++i) {
    auto [entry, rest] = pop_min(std::move(f));
    f = std::move(rest);
    r.sources.push_back({entry.cell_id, entry.distance});
    picked.push_back(entry.record);
  }
  const auto& slots = schema.config_slots();
  store.read([&](const std::vector<StoreRecord>& records) {
    const std::size_t q = records[picked.front()].y.size();
    if (q != slots.size())
      throw ValidationError("recommend_majority: stored configs do not match the schema");
    r.y_hat.assign(q, 0.0);
    std::vector<double> column(k);
    for (std::size_t s = 0; s < q; ++s) {
      for (std::size_t i = 0; i < k; ++i) column[i] = records[picked[i]].y.at(s);
      r.y_hat[s] = aggregate_values(column, schema.at(slots[s]).aggregation);
    }
    return 0;
  });
  return r;
}

inline Recommendation recommend(const EmbeddingStore& store, const std::vector<double>& z,
                                RecommendMode mode, std::size_t k, const AttributeSchema& schema) {
  return mode == RecommendMode::Closest ? recommend_closest(store, z)
                                        : recommend_majority(store, z, k, schema);
}

}  // namespace ranrec
