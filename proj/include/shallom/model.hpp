#ifndef SHALLOM_MODEL_HPP
#define SHALLOM_MODEL_HPP

// Relation scoring network
//
//   yhat(s, o) = sigmoid( W * dropout(relu( H * [e_s ; e_o] + b1 )) + b2 )
//
// with entity embeddings e_* in R^d, H in R^{k x 2d}, W in R^{|R| x k}. All
// tensors are templated on the scalar type so that gradient checks can run in
// double while training runs in float.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shallom/errors.hpp"
#include "shallom/kg.hpp"
#include "shallom/random.hpp"

namespace shallom {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Lower clamp for probabilities inside the loss.
inline constexpr double kProbabilityEpsilon = 1e-7;

struct ModelShape {
  std::int64_t num_entities = 0;
  std::int64_t num_relations = 0;
  std::int64_t embedding_dim = 0;  // d
  std::int64_t hidden_width = 0;   // k

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

template <typename Scalar>
struct ModelParams {
  RowMatrix<Scalar> entity;     // |E| x d
  Matrix<Scalar> hidden_weight; // k x 2d
  Vector<Scalar> hidden_bias;   // k
  Matrix<Scalar> output_weight; // |R| x k
  Vector<Scalar> output_bias;   // |R|

  ModelShape shape() const {
    return {entity.rows(), output_weight.rows(), entity.cols(), hidden_weight.rows()};
  }
  std::int64_t num_entities() const { return entity.rows(); }
  std::int64_t num_relations() const { return output_weight.rows(); }
  std::int64_t embedding_dim() const { return entity.cols(); }
  std::int64_t hidden_width() const { return hidden_weight.rows(); }

  bool all_finite() const {
    return entity.allFinite() && hidden_weight.allFinite() && hidden_bias.allFinite() &&
           output_weight.allFinite() && output_bias.allFinite();
  }

  /// Throws ShapeError unless all five tensors agree with each other.
  void check_consistent() const {
    const auto d = embedding_dim();
    const auto k = hidden_width();
    const auto r = num_relations();
    if (d < 1 || k < 1 || r < 1 || num_entities() < 1) throw ShapeError("model has a zero-sized dimension");
    if (hidden_weight.cols() != 2 * d || hidden_bias.size() != k || output_weight.cols() != k ||
        output_bias.size() != r)
      throw ShapeError("model tensors have inconsistent shapes");
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    return {entity.template cast<Other>(), hidden_weight.template cast<Other>(),
            hidden_bias.template cast<Other>(), output_weight.template cast<Other>(),
            output_bias.template cast<Other>()};
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.shape() == b.shape() && a.entity == b.entity && a.hidden_weight == b.hidden_weight &&
           a.hidden_bias == b.hidden_bias && a.output_weight == b.output_weight &&
           a.output_bias == b.output_bias;
  }
};

/// Glorot-style uniform for the dense layers, U(-sqrt(6/d), sqrt(6/d)) for
/// embeddings, zero biases.
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelShape& shape, std::uint64_t seed) {
  const auto [n_ent, n_rel, d, k] = shape;
  if (n_ent < 1 || n_rel < 1 || d < 1 || k < 1)
    throw ShapeError("init_params: every dimension must be at least 1");

  Rng rng = make_stream(seed, "init");
  auto fill_uniform = [&rng](auto& m, double limit) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<Scalar>(dist(rng));
  };

  ModelParams<Scalar> p;
  p.entity.resize(n_ent, d);
  p.hidden_weight.resize(k, 2 * d);
  p.output_weight.resize(n_rel, k);
  fill_uniform(p.entity, std::sqrt(6.0 / static_cast<double>(d)));
  fill_uniform(p.hidden_weight, std::sqrt(6.0 / static_cast<double>(2 * d + k)));
  fill_uniform(p.output_weight, std::sqrt(6.0 / static_cast<double>(k + n_rel)));
  p.hidden_bias = Vector<Scalar>::Zero(k);
  p.output_bias = Vector<Scalar>::Zero(n_rel);
  return p;
}

template <typename Scalar>
void check_entity(const ModelParams<Scalar>& params, EntityId e) {
  if (e < 0 || e >= params.num_entities())
    throw ShapeError("entity index " + std::to_string(e) + " out of range [0, " +
                     std::to_string(params.num_entities()) + ")");
}

/// [E[s] ; E[o]], subject first.
template <typename Scalar>
Vector<Scalar> concat_pair(const RowMatrix<Scalar>& entity, EntityId s, EntityId o) {
  if (s < 0 || o < 0 || s >= entity.rows() || o >= entity.rows())
    throw ShapeError("concat_pair: entity index out of range");
  const auto d = entity.cols();
  Vector<Scalar> x(2 * d);
  x.head(d) = entity.row(s).transpose();
  x.tail(d) = entity.row(o).transpose();
  return x;
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  return z.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
}

template <typename Scalar>
struct ForwardCache {
  EntityId s = 0;
  EntityId o = 0;
  Vector<Scalar> x;     // 2d
  Vector<Scalar> z1;    // k
  Vector<Scalar> a1;    // k
  Vector<Scalar> mask;  // k, entries 0 or 1
  Scalar dropout_scale = 1;
  Vector<Scalar> yhat;  // |R|
};

/// Forward pass with an explicit retention mask (entries 0/1) and the inverted
/// dropout scale applied to retained units.
template <typename Scalar>
ForwardCache<Scalar> forward_masked(const ModelParams<Scalar>& params, EntityId s, EntityId o,
                                    Vector<Scalar> mask, Scalar dropout_scale) {
  if (mask.size() != params.hidden_width()) throw ShapeError("dropout mask has the wrong width");
  ForwardCache<Scalar> c;
  c.s = s;
  c.o = o;
  c.x = concat_pair(params.entity, s, o);
  c.z1 = params.hidden_weight * c.x + params.hidden_bias;
  if (!c.z1.allFinite()) throw NumericError("non-finite pre-activation in hidden layer");
  c.mask = std::move(mask);
  c.dropout_scale = dropout_scale;
  c.a1 = c.z1.cwiseMax(Scalar(0)).cwiseProduct(c.mask) * dropout_scale;
  const Vector<Scalar> z2 = params.output_weight * c.a1 + params.output_bias;
  if (!z2.allFinite()) throw NumericError("non-finite logit in output layer");
  c.yhat = sigmoid(z2);
  return c;
}

/// Evaluation mode: no dropout.
template <typename Scalar>
ForwardCache<Scalar> forward(const ModelParams<Scalar>& params, EntityId s, EntityId o) {
  return forward_masked(params, s, o, Vector<Scalar>(Vector<Scalar>::Ones(params.hidden_width())), Scalar(1));
}

/// Draws a Bernoulli(1 - rate) retention mask of length `width`.
template <typename Scalar>
Vector<Scalar> draw_dropout_mask(Eigen::Index width, double rate, Rng& rng) {
  Vector<Scalar> mask = Vector<Scalar>::Ones(width);
  if (rate <= 0.0) return mask;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < width; ++i) mask[i] = u(rng) < rate ? Scalar(0) : Scalar(1);
  return mask;
}

inline void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
}

/// Training mode: inverted dropout on the hidden activation.
template <typename Scalar>
ForwardCache<Scalar> forward(const ModelParams<Scalar>& params, EntityId s, EntityId o, double dropout_rate,
                             Rng& rng) {
  check_dropout_rate(dropout_rate);
  auto mask = draw_dropout_mask<Scalar>(params.hidden_width(), dropout_rate, rng);
  return forward_masked(params, s, o, std::move(mask), static_cast<Scalar>(1.0 / (1.0 - dropout_rate)));
}

/// -sum_i [ y_i log(yhat_i) + (1 - y_i) log(1 - yhat_i) ], with yhat clamped
/// to [eps, 1 - eps].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar bce_loss(const Eigen::MatrixBase<DerivedA>& yhat, const Eigen::MatrixBase<DerivedB>& y) {
  using Scalar = typename DerivedA::Scalar;
  if (yhat.rows() != y.rows() || yhat.cols() != y.cols()) throw ShapeError("bce_loss: shape mismatch");
  const Scalar eps = static_cast<Scalar>(kProbabilityEpsilon);
  Scalar total = 0;
  for (Eigen::Index j = 0; j < yhat.cols(); ++j)
    for (Eigen::Index i = 0; i < yhat.rows(); ++i) {
      const Scalar p = std::clamp(yhat(i, j), eps, Scalar(1) - eps);
      const Scalar t = static_cast<Scalar>(y(i, j));
      total -= t * std::log(p) + (Scalar(1) - t) * std::log(Scalar(1) - p);
    }
  return total;
}

/// Gradient of a scalar objective. Only the embedding rows listed in
/// `entity_rows` carry gradient; row i of `entity_grad` belongs to entity
/// `entity_rows[i]`.
template <typename Scalar>
struct Gradients {
  std::vector<EntityId> entity_rows;
  RowMatrix<Scalar> entity_grad;
  Matrix<Scalar> hidden_weight;
  Vector<Scalar> hidden_bias;
  Matrix<Scalar> output_weight;
  Vector<Scalar> output_bias;

  static Gradients zeros_like(const ModelParams<Scalar>& params) {
    Gradients g;
    g.entity_grad.resize(0, params.embedding_dim());
    g.hidden_weight = Matrix<Scalar>::Zero(params.hidden_weight.rows(), params.hidden_weight.cols());
    g.hidden_bias = Vector<Scalar>::Zero(params.hidden_bias.size());
    g.output_weight = Matrix<Scalar>::Zero(params.output_weight.rows(), params.output_weight.cols());
    g.output_bias = Vector<Scalar>::Zero(params.output_bias.size());
    return g;
  }

  bool all_finite() const {
    return entity_grad.allFinite() && hidden_weight.allFinite() && hidden_bias.allFinite() &&
           output_weight.allFinite() && output_bias.allFinite();
  }

  /// Gradient row for entity `e`, or an empty optional if it is untouched.
  std::optional<Vector<Scalar>> entity_row(EntityId e) const {
    for (std::size_t i = 0; i < entity_rows.size(); ++i)
      if (entity_rows[i] == e) return Vector<Scalar>(entity_grad.row(static_cast<Eigen::Index>(i)).transpose());
    return std::nullopt;
  }
};

template <typename Scalar>
struct LossAndGradients {
  Scalar loss;
  Gradients<Scalar> grads;
};

/// Exact gradient of bce_loss(cache.yhat, y) with respect to every parameter
/// that influenced `cache`. The output error signal is (yhat - y); the clamp
/// inside the loss only matters once a probability saturates below eps.
template <typename Scalar, typename DerivedY>
LossAndGradients<Scalar> backward(const ModelParams<Scalar>& params, const ForwardCache<Scalar>& cache,
                                  const Eigen::MatrixBase<DerivedY>& y) {
  const auto d = params.embedding_dim();
  if (cache.yhat.size() != params.num_relations() || cache.z1.size() != params.hidden_width() ||
      cache.x.size() != 2 * d)
    throw ShapeError("backward: cache does not match the model shape");
  if (y.size() != params.num_relations()) throw ShapeError("backward: target has the wrong length");

  LossAndGradients<Scalar> out;
  out.loss = bce_loss(cache.yhat, y);
  auto& g = out.grads;

  const Vector<Scalar> delta2 = cache.yhat - y.template cast<Scalar>();
  g.output_weight = delta2 * cache.a1.transpose();
  g.output_bias = delta2;

  Vector<Scalar> delta1 = params.output_weight.transpose() * delta2;
  for (Eigen::Index i = 0; i < delta1.size(); ++i)
    delta1[i] = cache.z1[i] > Scalar(0) ? delta1[i] * cache.mask[i] * cache.dropout_scale : Scalar(0);
  g.hidden_weight = delta1 * cache.x.transpose();
  g.hidden_bias = delta1;

  const Vector<Scalar> dx = params.hidden_weight.transpose() * delta1;
  if (cache.s == cache.o) {
    g.entity_rows = {cache.s};
    g.entity_grad = (dx.head(d) + dx.tail(d)).transpose();
  } else {
    g.entity_rows = {cache.s, cache.o};
    g.entity_grad.resize(2, d);
    g.entity_grad.row(0) = dx.head(d).transpose();
    g.entity_grad.row(1) = dx.tail(d).transpose();
  }
  return out;
}

/// Evaluation-mode relation probabilities for the pair (s, o).
template <typename Scalar>
Vector<Scalar> predict_scores(const ModelParams<Scalar>& params, EntityId s, EntityId o) {
  return forward(params, s, o).yhat;
}

/// Scores a block of pairs at once; column j holds the probabilities for
/// (subjects[j], objects[j]).
template <typename Scalar>
Matrix<Scalar> predict_scores_batch(const ModelParams<Scalar>& params, std::span<const EntityId> subjects,
                                    std::span<const EntityId> objects) {
  const auto d = params.embedding_dim();
  const auto n = static_cast<Eigen::Index>(subjects.size());
  Matrix<Scalar> x(2 * d, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    check_entity(params, subjects[j]);
    check_entity(params, objects[j]);
    x.col(j).head(d) = params.entity.row(subjects[j]).transpose();
    x.col(j).tail(d) = params.entity.row(objects[j]).transpose();
  }
  Matrix<Scalar> z1 = params.hidden_weight * x;
  z1.colwise() += params.hidden_bias;
  if (!z1.allFinite()) throw NumericError("non-finite pre-activation in hidden layer");
  Matrix<Scalar> z2 = params.output_weight * z1.cwiseMax(Scalar(0));
  z2.colwise() += params.output_bias;
  if (!z2.allFinite()) throw NumericError("non-finite logit in output layer");
  return sigmoid(z2);
}

template <typename Scalar>
struct PenaltyAndGradients {
  Scalar penalty;
  Gradients<Scalar> grads;
};

/// coefficient * (|H|^2 + |W|^2 + sum over `touched_rows` of |E[i]|^2).
/// Biases are not penalised. `touched_rows` must not contain duplicates.
template <typename Scalar>
PenaltyAndGradients<Scalar> l2_penalty(const ModelParams<Scalar>& params, Scalar coefficient,
                                       std::span<const EntityId> touched_rows) {
  if (coefficient < Scalar(0)) throw ConfigError("L2 coefficient must be non-negative");
  PenaltyAndGradients<Scalar> out{Scalar(0), Gradients<Scalar>::zeros_like(params)};
  auto& g = out.grads;
  g.entity_rows.assign(touched_rows.begin(), touched_rows.end());
  g.entity_grad = RowMatrix<Scalar>::Zero(static_cast<Eigen::Index>(touched_rows.size()), params.embedding_dim());
  if (coefficient == Scalar(0)) return out;

  Scalar sum = params.hidden_weight.squaredNorm() + params.output_weight.squaredNorm();
  for (std::size_t i = 0; i < touched_rows.size(); ++i) {
    check_entity(params, touched_rows[i]);
    const auto row = params.entity.row(touched_rows[i]);
    sum += row.squaredNorm();
    g.entity_grad.row(static_cast<Eigen::Index>(i)) = Scalar(2) * coefficient * row;
  }
  out.penalty = coefficient * sum;
  g.hidden_weight = Scalar(2) * coefficient * params.hidden_weight;
  g.output_weight = Scalar(2) * coefficient * params.output_weight;
  return out;
}

}  // namespace shallom

#endif  // SHALLOM_MODEL_HPP
