#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ranrec/error.hpp"
#include "ranrec/gnn.hpp"
#include "ranrec/matrix.hpp"
#include "ranrec/rng.hpp"
#include "ranrec/sampler.hpp"
#include "ranrec/tape.hpp"

namespace ranrec {

// ---------------------------------------------------------------------------
// Objectives

/// c = 2 cos(y_a, y_b) - 1. Throws UndefinedCosine for a zero vector.
inline double config_similarity(std::span<const double> y_a, std::span<const double> y_b) {
  return 2.0 * cosine(y_a, y_b) - 1.0;
}

enum class LossForm {
  /// ((1+c)/2) D + ((1-c)/2) max(0, M - D)
  Standard,
  /// (1+c) D + (1-c) max(0, M) - D, exactly as typeset; unbounded below.
  Literal,
};

inline double contrastive_loss(double c, double distance, double margin,
                               LossForm form = LossForm::Standard) {
  if (form == LossForm::Literal)
    return (1.0 + c) * distance + (1.0 - c) * std::max(0.0, margin) - distance;
  return 0.5 * (1.0 + c) * distance + 0.5 * (1.0 - c) * std::max(0.0, margin - distance);
}

inline double contrastive_loss(double c, std::span<const double> z_a, std::span<const double> z_b,
                               double margin, LossForm form = LossForm::Standard) {
  return contrastive_loss(c, l2_distance(z_a, z_b), margin, form);
}

/// Records the per-pair contrastive loss for 1 x d embeddings.
inline Var contrastive_loss(Tape& tape, double c, Var z_a, Var z_b, double margin,
                            LossForm form = LossForm::Standard) {
  const Var dist = tape.row_norms(tape.sub(z_a, z_b));
  if (form == LossForm::Literal) {
    const Var pull = tape.scale(dist, c);
    return tape.add(pull, tape.constant(Matrix(1, 1, (1.0 - c) * std::max(0.0, margin))));
  }
  const Var pull = tape.scale(dist, 0.5 * (1.0 + c));
  const Var gap = tape.sub(tape.constant(Matrix(1, 1, margin)), dist);
  const Var push = tape.scale(tape.relu(gap), 0.5 * (1.0 - c));
  return tape.add(pull, push);
}

/// Mean over vertices of the row-wise Euclidean reconstruction error.
inline double reconstruction_loss(const Matrix& x, const Matrix& x_hat) {
  if (!x.same_shape(x_hat))
    throw ValidationError("reconstruction_loss: shape mismatch " + x.shape_string() + " vs " +
                          x_hat.shape_string());
  if (x.rows() == 0) throw ValidationError("reconstruction_loss: no vertices");
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) total += l2_distance(x.row(r), x_hat.row(r));
  return total / static_cast<double>(x.rows());
}

inline Var reconstruction_loss(Tape& tape, Var x, Var x_hat) {
  return tape.mean(tape.row_norms(tape.sub(x_hat, x)));
}

// ---------------------------------------------------------------------------
// Configuration

struct ContrastiveConfig {
  double margin = 1.0;                ///< M
  std::size_t pairs_per_epoch = 0;    ///< 0 means 10 x training-set size
  bool mining_enabled = true;
  double hard_fraction = 0.5;
  double sim_high = 0.5;              ///< tau+
  double sim_low = -0.5;              ///< tau-
  std::size_t epochs = 200;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  LossForm loss_form = LossForm::Standard;
  /// Pairs per optimizer step for S-GNN; 0 means one step per epoch.
  std::size_t batch_pairs = 0;
  /// Subgraphs per optimizer step for the auto-encoder.
  std::size_t batch_entries = 16;
  /// Upper bound on the candidate pool scanned when mining.
  std::size_t mining_pool_limit = 200000;

  void validate() const {
    if (!(margin > 0.0)) throw ValidationError("margin must be > 0");
    if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0))
      throw ValidationError("hard_fraction must lie in [0,1]");
    if (!(sim_low < sim_high)) throw ValidationError("sim_low must be < sim_high");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (batch_entries == 0) throw ValidationError("batch_entries must be >= 1");
  }
};

struct PairSample {
  std::uint32_t a = 0;  ///< positions in the training list
  std::uint32_t b = 0;
  double c = 0.0;
  friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
};

// ---------------------------------------------------------------------------
// Pair mining

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

/// Indices whose targets have a nonzero norm.
inline std::vector<std::uint32_t> usable_targets(const std::vector<std::vector<double>>& targets) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < targets.size(); ++i)
    if (l2_norm(targets[i]) > 0.0) out.push_back(i);
  return out;
}

inline PairSample random_pair(const std::vector<std::uint32_t>& usable,
                              const std::vector<std::vector<double>>& targets, Rng& rng) {
  const auto i = rng.below(usable.size());
  auto j = rng.below(usable.size() - 1);
  if (j >= i) ++j;
  const std::uint32_t a = usable[i], b = usable[j];
  return {a, b, config_similarity(targets[a], targets[b])};
}

}  // namespace detail

/// The ambiguous pairs among a candidate pool: closer than the pool's median
/// embedding distance while c < sim_low, or farther than it while c > sim_high.
/// With no pool given, every unordered pair of usable entries is a candidate.
inline std::vector<PairSample> ambiguous_pairs(
    const std::vector<std::vector<double>>& embeddings,
    const std::vector<std::vector<double>>& targets, const ContrastiveConfig& cfg,
    std::optional<std::vector<PairSample>> pool = std::nullopt) {
  if (embeddings.size() != targets.size())
    throw ValidationError("ambiguous_pairs: embeddings and targets differ in length");
  if (!pool) {
    pool.emplace();
    const auto usable = detail::usable_targets(targets);
    for (std::size_t x = 0; x < usable.size(); ++x)
      for (std::size_t y = x + 1; y < usable.size(); ++y)
        pool->push_back({usable[x], usable[y], config_similarity(targets[usable[x]], targets[usable[y]])});
  }
  std::vector<double> dist;
  dist.reserve(pool->size());
  for (const auto& p : *pool) dist.push_back(l2_distance(embeddings[p.a], embeddings[p.b]));
  const double median = detail::median_of(dist);
  std::vector<PairSample> hard;
  for (std::size_t k = 0; k < pool->size(); ++k) {
    const auto& p = (*pool)[k];
    if ((dist[k] < median && p.c < cfg.sim_low) || (dist[k] > median && p.c > cfg.sim_high))
      hard.push_back(p);
  }
  return hard;
}

/// pairs_per_epoch pairs: round(hard_fraction * total) drawn uniformly from the
/// ambiguous set (when mining is enabled and the set is non-empty), the rest
/// uniformly at random. Entries with a zero target never appear.
inline std::vector<PairSample> mine_informative_pairs(
    const std::vector<std::vector<double>>& embeddings,
    const std::vector<std::vector<double>>& targets, const ContrastiveConfig& cfg, Rng& rng) {
  const auto usable = detail::usable_targets(targets);
  if (usable.size() < 2)
    throw ValidationError("pair mining needs at least 2 training entries with nonzero targets");
  const std::size_t total = cfg.pairs_per_epoch ? cfg.pairs_per_epoch : 10 * targets.size();
  std::vector<PairSample> out;
  out.reserve(total);
  std::size_t hard_quota = 0;
  if (cfg.mining_enabled && cfg.hard_fraction > 0.0) {
    hard_quota = static_cast<std::size_t>(std::llround(cfg.hard_fraction * static_cast<double>(total)));
    std::optional<std::vector<PairSample>> pool;
    const std::size_t all_pairs = usable.size() * (usable.size() - 1) / 2;
    if (all_pairs > cfg.mining_pool_limit) {
      pool.emplace();
      for (std::size_t k = 0; k < cfg.mining_pool_limit; ++k)
        pool->push_back(detail::random_pair(usable, targets, rng));
    }
    const auto hard = ambiguous_pairs(embeddings, targets, cfg, std::move(pool));
    if (hard.empty()) {
      hard_quota = 0;
    } else {
      for (std::size_t k = 0; k < hard_quota; ++k) {
        PairSample p = hard[rng.below(hard.size())];
        if (rng.below(2)) std::swap(p.a, p.b);
        out.push_back(p);
      }
    }
  }
  while (out.size() < total) out.push_back(detail::random_pair(usable, targets, rng));
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Parameter* const> params) {
    if (first_.empty()) {
      for (Parameter* p : params) {
        first_.emplace_back(p->value.rows(), p->value.cols());
        second_.emplace_back(p->value.rows(), p->value.cols());
      }
    }
    if (first_.size() != params.size()) throw ValidationError("Adam: parameter set changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter& p = *params[k];
      Matrix& m = first_[k];
      Matrix& v = second_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
        p.value[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
      }
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

// ---------------------------------------------------------------------------
// S-GNN

/// Training view over a dataset: the subgraphs and targets used for fitting.
struct TrainingSet {
  std::vector<const Subgraph*> subgraphs;
  std::vector<std::vector<double>> targets;

  static TrainingSet from(const Dataset& ds, std::span<const std::uint32_t> indices) {
    TrainingSet t;
    for (std::uint32_t i : indices) {
      t.subgraphs.push_back(&ds.entries.at(i).subgraph);
      t.targets.push_back(ds.entries.at(i).target);
    }
    return t;
  }
  std::size_t size() const { return subgraphs.size(); }
};

namespace detail {

struct EncodedEntry {
  Tape tape;
  Var center;
};

}  // namespace detail

/// Mean contrastive loss over `pairs`, with gradients accumulated into the
/// encoder parameters when `accumulate_gradient` is set. Each involved
/// subgraph is encoded once; the pair losses are recorded on a separate tape
/// whose input gradients seed the per-subgraph backward passes.
inline double sgnn_batch_loss(EncoderStack& encoder, const TrainingSet& set,
                              std::span<const PairSample> pairs, const ContrastiveConfig& cfg,
                              bool accumulate_gradient) {
  if (pairs.empty()) return 0.0;
  std::map<std::uint32_t, std::size_t> slot;
  for (const auto& p : pairs) {
    slot.emplace(p.a, 0);
    slot.emplace(p.b, 0);
  }
  std::vector<detail::EncodedEntry> encoded(slot.size());
  std::size_t k = 0;
  for (auto& [entry, s] : slot) {
    s = k;
    auto& e = encoded[k++];
    const Var z = encode(e.tape, encoder, *set.subgraphs.at(entry));
    e.center = e.tape.slice_rows(z, 0, 1);
  }
  Tape loss_tape;
  std::vector<Var> leaves;
  leaves.reserve(encoded.size());
  for (auto& e : encoded) leaves.push_back(loss_tape.input(e.tape.value(e.center)));
  Var total = loss_tape.constant(Matrix(1, 1, 0.0));
  for (const auto& p : pairs)
    total = loss_tape.add(total, contrastive_loss(loss_tape, p.c, leaves[slot[p.a]],
                                                  leaves[slot[p.b]], cfg.margin, cfg.loss_form));
  const Var mean = loss_tape.scale(total, 1.0 / static_cast<double>(pairs.size()));
  const double value = loss_tape.scalar(mean);
  if (!std::isfinite(value)) throw NumericError("S-GNN loss is not finite");
  if (accumulate_gradient) {
    loss_tape.backward(mean);
    for (std::size_t i = 0; i < encoded.size(); ++i)
      encoded[i].tape.backward(encoded[i].center, loss_tape.grad(leaves[i]));
  }
  return value;
}

/// Center embeddings of every training subgraph.
inline std::vector<std::vector<double>> embed_all(const EncoderStack& encoder,
                                                  const std::vector<const Subgraph*>& subgraphs) {
  std::vector<std::vector<double>> out;
  out.reserve(subgraphs.size());
  for (const Subgraph* sg : subgraphs) out.push_back(embed_center(encoder, *sg));
  return out;
}

using EpochHook = std::function<void(std::size_t epoch, double loss)>;

/// Contrastive training of `encoder` in place. Each epoch refreshes the
/// embeddings, mines pairs, and applies Adam updates over pair batches.
/// `before_epoch`, when given, may re-sample subgraphs.
inline TrainReport train_sgnn(EncoderStack& encoder, const TrainingSet& set,
                              const ContrastiveConfig& cfg, const EpochHook& on_epoch = {},
                              const std::function<void(std::size_t)>& before_epoch = {}) {
  cfg.validate();
  if (detail::usable_targets(set.targets).size() < 2)
    throw ValidationError("S-GNN training needs at least 2 entries with nonzero targets");
  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  Adam adam(cfg.learning_rate);
  auto params = encoder.params();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (before_epoch) before_epoch(epoch);
    Rng rng(substream_seed(substream_seed(cfg.seed, "sgnn-epoch"), epoch));
    const auto embeddings = embed_all(encoder, set.subgraphs);
    const auto pairs = mine_informative_pairs(embeddings, set.targets, cfg, rng);
    const std::size_t batch = cfg.batch_pairs ? cfg.batch_pairs : pairs.size();
    double weighted = 0.0;
    for (std::size_t begin = 0; begin < pairs.size(); begin += batch) {
      const std::size_t end = std::min(pairs.size(), begin + batch);
      for (Parameter* p : params) p->zero_grad();
      const double loss = sgnn_batch_loss(
          encoder, set, std::span(pairs).subspan(begin, end - begin), cfg, true);
      if (!std::isfinite(loss))
        throw NumericError("non-finite S-GNN loss at epoch " + std::to_string(epoch));
      weighted += loss * static_cast<double>(end - begin);
      adam.step(params);
    }
    const double epoch_loss = weighted / static_cast<double>(pairs.size());
    report.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// Graph auto-encoder

/// Mean reconstruction loss over `entries` (positions in `subgraphs`).
inline double gae_batch_loss(EncoderStack& encoder, DecoderStack& decoder,
                             const std::vector<const Subgraph*>& subgraphs,
                             std::span<const std::uint32_t> entries, bool accumulate_gradient) {
  if (entries.empty()) return 0.0;
  double total = 0.0;
  const double weight = 1.0 / static_cast<double>(entries.size());
  for (std::uint32_t e : entries) {
    const Subgraph& sg = *subgraphs.at(e);
    Tape tape;
    const Var z = encode(tape, encoder, sg);
    const Var x_hat = decode(tape, decoder, sg, z);
    const Var loss = tape.scale(reconstruction_loss(tape, tape.constant(sg.features), x_hat), weight);
    total += tape.scalar(loss);
    if (accumulate_gradient) tape.backward(loss);
  }
  if (!std::isfinite(total)) throw NumericError("GAE loss is not finite");
  return total;
}

inline TrainReport train_gae(EncoderStack& encoder, DecoderStack& decoder,
                             const std::vector<const Subgraph*>& subgraphs,
                             const ContrastiveConfig& cfg, const EpochHook& on_epoch = {},
                             const std::function<void(std::size_t)>& before_epoch = {}) {
  cfg.validate();
  if (subgraphs.empty()) throw ValidationError("GAE training needs at least one entry");
  const auto start = std::chrono::steady_clock::now();
  TrainReport report;
  Adam adam(cfg.learning_rate);
  auto params = encoder.params();
  for (Parameter* p : decoder.params()) params.push_back(p);
  std::vector<std::uint32_t> order(subgraphs.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (before_epoch) before_epoch(epoch);
    Rng rng(substream_seed(substream_seed(cfg.seed, "gae-epoch"), epoch));
    rng.shuffle(order);
    double weighted = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_entries) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_entries);
      for (Parameter* p : params) p->zero_grad();
      const double loss = gae_batch_loss(encoder, decoder, subgraphs,
                                         std::span(order).subspan(begin, end - begin), true);
      if (!std::isfinite(loss))
        throw NumericError("non-finite GAE loss at epoch " + std::to_string(epoch));
      weighted += loss * static_cast<double>(end - begin);
      adam.step(params);
    }
    const double epoch_loss = weighted / static_cast<double>(order.size());
    report.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace ranrec
