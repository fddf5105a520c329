#ifndef SHALLOM_TRAINING_HPP
#define SHALLOM_TRAINING_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "shallom/errors.hpp"
#include "shallom/eval.hpp"
#include "shallom/kg.hpp"
#include "shallom/model.hpp"
#include "shallom/optimizer.hpp"
#include "shallom/parallel.hpp"
#include "shallom/random.hpp"

namespace shallom {

struct Hyperparams {
  std::int64_t d = 50;
  std::int64_t k = 150;
  std::int64_t epochs = 50;
  std::int64_t batch_size = 1000;
  double dropout_rate = 0.2;
  double l2_coefficient = 0.0;
  double learning_rate = 0.001;
  std::uint64_t seed = 1;

  void validate() const {
    if (d < 1 || k < 1 || epochs < 1 || batch_size < 1)
      throw ConfigError("d, k, epochs and batch_size must all be at least 1");
    check_dropout_rate(dropout_rate);
    if (!(l2_coefficient >= 0.0)) throw ConfigError("l2_coefficient must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  }

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct TrainHistory {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_seconds;
  std::vector<double> valid_hits1;  // empty unless per-epoch validation was requested
};

/// Candidate values per hyperparameter. The hidden width is given relative to
/// the embedding size (k = factor * d, rounded, at least 1).
struct GridSpec {
  std::vector<std::int64_t> d{30, 50, 100, 200};
  std::vector<std::int64_t> epochs{30, 50, 100};
  std::vector<double> k_factor{0.5, 1.0, 3.0};
  std::vector<std::int64_t> batch_size{256, 1000};
  std::vector<double> dropout_rate{0.0, 0.2, 0.5};
  std::vector<double> l2_coefficient{0.0, 0.1};
  std::vector<double> learning_rate{0.001};
  std::uint64_t seed = 1;

  std::size_t size() const {
    return d.size() * epochs.size() * k_factor.size() * batch_size.size() * dropout_rate.size() *
           l2_coefficient.size() * learning_rate.size();
  }

  /// Cartesian product, last-listed dimension varying fastest.
  std::vector<Hyperparams> enumerate() const {
    if (size() == 0) throw ConfigError("grid has an empty dimension");
    std::vector<Hyperparams> points;
    points.reserve(size());
    for (auto dim : d)
      for (auto ep : epochs)
        for (auto factor : k_factor)
          for (auto bs : batch_size)
            for (auto rate : dropout_rate)
              for (auto l2 : l2_coefficient)
                for (auto lr : learning_rate) {
                  Hyperparams h;
                  h.d = dim;
                  h.k = std::max<std::int64_t>(1, std::llround(factor * static_cast<double>(dim)));
                  h.epochs = ep;
                  h.batch_size = bs;
                  h.dropout_rate = rate;
                  h.l2_coefficient = l2;
                  h.learning_rate = lr;
                  h.seed = seed;
                  points.push_back(h);
                }
    return points;
  }
};

struct ParallelOptions {
  unsigned threads = 1;
  /// Reduce per-chunk gradients in a fixed order so results do not depend on
  /// scheduling or thread count.
  bool deterministic = false;
};

struct Batch {
  std::vector<std::size_t> pair_ids;
};

/// One seeded permutation of all pairs cut into batches of `batch_size`.
inline std::vector<Batch> make_batches(const PairLabelIndex& pairs, std::int64_t batch_size, Rng& rng) {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (pairs.empty()) throw ConfigError("no training pairs to batch");
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  const auto step = static_cast<std::size_t>(batch_size);
  for (std::size_t first = 0; first < order.size(); first += step) {
    const auto last = std::min(order.size(), first + step);
    batches.push_back({std::vector<std::size_t>(order.begin() + first, order.begin() + last)});
  }
  return batches;
}

/// Multi-hot target of pair `pair_id`.
template <typename Scalar>
Vector<Scalar> multi_hot(const PairLabelIndex& pairs, std::size_t pair_id) {
  Vector<Scalar> y = Vector<Scalar>::Zero(pairs.num_relations());
  for (auto p : pairs.labels(pair_id)) y[p] = Scalar(1);
  return y;
}

namespace detail {

template <typename Scalar>
struct DenseGrads {
  Scalar loss_sum = 0;
  Matrix<Scalar> hidden_weight;
  Vector<Scalar> hidden_bias;
  Matrix<Scalar> output_weight;
  Vector<Scalar> output_bias;

  explicit DenseGrads(const ModelParams<Scalar>& params)
      : hidden_weight(Matrix<Scalar>::Zero(params.hidden_weight.rows(), params.hidden_weight.cols())),
        hidden_bias(Vector<Scalar>::Zero(params.hidden_width())),
        output_weight(Matrix<Scalar>::Zero(params.output_weight.rows(), params.output_weight.cols())),
        output_bias(Vector<Scalar>::Zero(params.num_relations())) {}

  DenseGrads& operator+=(const DenseGrads& other) {
    loss_sum += other.loss_sum;
    hidden_weight += other.hidden_weight;
    hidden_bias += other.hidden_bias;
    output_weight += other.output_weight;
    output_bias += other.output_bias;
    return *this;
  }
};

inline constexpr Eigen::Index kChunkColumns = 128;

}  // namespace detail

/// Mean BCE over the batch plus the L2 penalty, with its exact gradient.
/// Dropout masks are drawn from `dropout_rng` on the calling thread in batch
/// order before any work fans out.
template <typename Scalar>
LossAndGradients<Scalar> batch_objective(const ModelParams<Scalar>& params, const PairLabelIndex& pairs,
                                         const Batch& batch, double dropout_rate, double l2_coefficient,
                                         Rng& dropout_rng, const ParallelOptions& parallel = {}) {
  check_dropout_rate(dropout_rate);
  const auto d = params.embedding_dim();
  const auto k = params.hidden_width();
  const auto n = static_cast<Eigen::Index>(batch.pair_ids.size());
  if (n == 0) throw ConfigError("empty batch");
  if (pairs.num_relations() != params.num_relations())
    throw ShapeError("pair labels and model disagree on the number of relations");

  Matrix<Scalar> mask = Matrix<Scalar>::Ones(k, n);
  if (dropout_rate > 0.0)
    for (Eigen::Index j = 0; j < n; ++j) mask.col(j) = draw_dropout_mask<Scalar>(k, dropout_rate, dropout_rng);
  const auto scale = static_cast<Scalar>(1.0 / (1.0 - dropout_rate));

  Matrix<Scalar> dx(2 * d, n);
  const auto chunks = static_cast<std::size_t>((n + detail::kChunkColumns - 1) / detail::kChunkColumns);
  const unsigned threads = resolve_threads(parallel.threads);
  const std::size_t slots = parallel.deterministic ? chunks : std::min<std::size_t>(threads, chunks);
  std::vector<detail::DenseGrads<Scalar>> partial(slots, detail::DenseGrads<Scalar>(params));

  parallel_for(chunks, threads, [&](std::size_t c, std::size_t worker) {
    auto& acc = partial[parallel.deterministic ? c : worker];
    const auto first = static_cast<Eigen::Index>(c) * detail::kChunkColumns;
    const auto cols = std::min(detail::kChunkColumns, n - first);

    Matrix<Scalar> x(2 * d, cols);
    Matrix<Scalar> y = Matrix<Scalar>::Zero(params.num_relations(), cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      const auto id = batch.pair_ids[static_cast<std::size_t>(first + j)];
      const auto& pr = pairs.pair(id);
      check_entity(params, pr.s);
      check_entity(params, pr.o);
      x.col(j).head(d) = params.entity.row(pr.s).transpose();
      x.col(j).tail(d) = params.entity.row(pr.o).transpose();
      for (auto p : pairs.labels(id)) y(p, j) = Scalar(1);
    }
    Matrix<Scalar> z1 = params.hidden_weight * x;
    z1.colwise() += params.hidden_bias;
    if (!z1.allFinite()) throw NumericError("non-finite pre-activation in hidden layer");
    const auto m = mask.middleCols(first, cols);
    const Matrix<Scalar> gate = (z1.array() > Scalar(0)).template cast<Scalar>().matrix().cwiseProduct(m) * scale;
    const Matrix<Scalar> a1 = z1.cwiseProduct(gate);
    Matrix<Scalar> z2 = params.output_weight * a1;
    z2.colwise() += params.output_bias;
    if (!z2.allFinite()) throw NumericError("non-finite logit in output layer");
    const Matrix<Scalar> yhat = sigmoid(z2);

    acc.loss_sum += bce_loss(yhat, y);
    const Matrix<Scalar> delta2 = yhat - y;
    acc.output_weight.noalias() += delta2 * a1.transpose();
    acc.output_bias += delta2.rowwise().sum();
    const Matrix<Scalar> delta1 = (params.output_weight.transpose() * delta2).cwiseProduct(gate);
    acc.hidden_weight.noalias() += delta1 * x.transpose();
    acc.hidden_bias += delta1.rowwise().sum();
    dx.middleCols(first, cols).noalias() = params.hidden_weight.transpose() * delta1;
  });

  detail::DenseGrads<Scalar> total = std::move(partial.front());
  for (std::size_t i = 1; i < partial.size(); ++i) total += partial[i];

  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  LossAndGradients<Scalar> out;
  auto& g = out.grads;
  g.hidden_weight = total.hidden_weight * inv_n;
  g.hidden_bias = total.hidden_bias * inv_n;
  g.output_weight = total.output_weight * inv_n;
  g.output_bias = total.output_bias * inv_n;

  // Scatter input gradients onto the distinct entity rows, first-touch order.
  std::unordered_map<EntityId, Eigen::Index> slot;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& pr = pairs.pair(batch.pair_ids[static_cast<std::size_t>(j)]);
    for (EntityId e : {pr.s, pr.o})
      if (slot.try_emplace(e, static_cast<Eigen::Index>(g.entity_rows.size())).second) g.entity_rows.push_back(e);
  }
  g.entity_grad = RowMatrix<Scalar>::Zero(static_cast<Eigen::Index>(g.entity_rows.size()), d);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& pr = pairs.pair(batch.pair_ids[static_cast<std::size_t>(j)]);
    g.entity_grad.row(slot[pr.s]) += dx.col(j).head(d).transpose() * inv_n;
    g.entity_grad.row(slot[pr.o]) += dx.col(j).tail(d).transpose() * inv_n;
  }

  out.loss = total.loss_sum * inv_n;
  if (l2_coefficient > 0.0) {
    const auto penalty = l2_penalty(params, static_cast<Scalar>(l2_coefficient), g.entity_rows);
    out.loss += penalty.penalty;
    g.hidden_weight += penalty.grads.hidden_weight;
    g.output_weight += penalty.grads.output_weight;
    g.entity_grad += penalty.grads.entity_grad;
  }
  if (!std::isfinite(static_cast<double>(out.loss)) || !g.all_finite())
    throw NumericError("non-finite loss or gradient");
  return out;
}

/// One pass over `batches`; returns the mean batch objective.
template <typename Scalar>
double train_epoch(ModelParams<Scalar>& params, Adam<Scalar>& optimizer, const std::vector<Batch>& batches,
                   const PairLabelIndex& pairs, const Hyperparams& hyper, Rng& dropout_rng,
                   const ParallelOptions& parallel = {}, std::int64_t epoch = 0) {
  if (batches.empty()) throw ConfigError("no batches to train on");
  double sum = 0.0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    try {
      auto step = batch_objective(params, pairs, batches[b], hyper.dropout_rate, hyper.l2_coefficient,
                                  dropout_rng, parallel);
      optimizer.step(params, step.grads, hyper.learning_rate);
      sum += static_cast<double>(step.loss);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " + e.what());
    }
  }
  return sum / static_cast<double>(batches.size());
}

struct FitOptions {
  ParallelOptions parallel;
  bool validate_each_epoch = false;
  /// Called after every epoch with (epoch index, mean loss, seconds).
  std::function<void(std::int64_t, double, double)> on_epoch;
};

template <typename Scalar>
struct FitResult {
  ModelParams<Scalar> params;
  TrainHistory history;
  double runtime_seconds = 0.0;
};

/// Trains from scratch for `hyper.epochs` epochs. Randomness comes from the
/// "init", "shuffle" and "dropout" streams of `hyper.seed`. The runtime covers
/// this call only; dataset loading happens before it.
template <typename Scalar>
FitResult<Scalar> fit(const DatasetSplits& splits, const Hyperparams& hyper, const FitOptions& options = {}) {
  using Clock = std::chrono::steady_clock;
  hyper.validate();
  const auto start = Clock::now();

  const auto pairs = build_pair_labels(splits.train.triples, splits.vocab.num_relations());
  FitResult<Scalar> result;
  result.params = init_params<Scalar>(
      {splits.vocab.num_entities(), splits.vocab.num_relations(), hyper.d, hyper.k}, hyper.seed);
  Adam<Scalar> optimizer(result.params);
  Rng shuffle_rng = make_stream(hyper.seed, "shuffle");
  Rng dropout_rng = make_stream(hyper.seed, "dropout");

  for (std::int64_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    const auto batches = make_batches(pairs, hyper.batch_size, shuffle_rng);
    const double loss =
        train_epoch(result.params, optimizer, batches, pairs, hyper, dropout_rng, options.parallel, epoch);
    const double seconds = std::chrono::duration<double>(Clock::now() - epoch_start).count();
    result.history.epoch_loss.push_back(loss);
    result.history.epoch_seconds.push_back(seconds);
    if (options.validate_each_epoch && !splits.valid.triples.empty())
      result.history.valid_hits1.push_back(
          hits_at_n(result.params, splits.valid.triples, 1, splits.valid.skipped, options.parallel.threads));
    if (options.on_epoch) options.on_epoch(epoch, loss, seconds);
  }
  result.runtime_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

struct GridRecord {
  Hyperparams hyper;
  std::optional<double> valid_hits1;
  double runtime_seconds = 0.0;
  std::string error;  // empty on success
};

struct GridSearchResult {
  Hyperparams best;
  double best_valid_hits1 = 0.0;
  std::size_t best_index = 0;
  std::vector<GridRecord> records;
};

/// Trains one model per grid point and keeps the one with the highest
/// validation Hits@1; ties go to the earlier point. A failing point is
/// recorded and skipped.
template <typename Scalar>
GridSearchResult grid_search(const DatasetSplits& splits, const GridSpec& grid, const FitOptions& options = {},
                             const std::function<void(const GridRecord&)>& on_record = {}) {
  const auto points = grid.enumerate();
  if (splits.valid.triples.size() + splits.valid.skipped == 0)
    throw ConfigError("grid search needs a non-empty validation split");
  GridSearchResult result;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    GridRecord record{points[i], std::nullopt, 0.0, {}};
    try {
      const auto fitted = fit<Scalar>(splits, points[i], options);
      record.runtime_seconds = fitted.runtime_seconds;
      record.valid_hits1 =
          hits_at_n(fitted.params, splits.valid.triples, 1, splits.valid.skipped, options.parallel.threads);
      if (!best || *record.valid_hits1 > result.best_valid_hits1) {
        best = i;
        result.best_valid_hits1 = *record.valid_hits1;
      }
    } catch (const Error& e) {
      record.error = std::string(e.category()) + ": " + e.what();
    }
    if (on_record) on_record(record);
    result.records.push_back(std::move(record));
  }
  if (!best) throw NumericError("every grid point failed; first error: " + result.records.front().error);
  result.best_index = *best;
  result.best = points[*best];
  return result;
}

}  // namespace shallom

#endif  // SHALLOM_TRAINING_HPP
