#ifndef SHALLOM_TESTS_GRADIENT_CHECK_HPP
#define SHALLOM_TESTS_GRADIENT_CHECK_HPP

#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "shallom/training.hpp"

namespace shallom::oracle {

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst;  // description of the worst entry
};

namespace detail {

/// Compares `analytic` against central differences of `objective` for every
/// entry of every parameter tensor. `entity_analytic(e, j)` returns the
/// analytic gradient for embedding entry (e, j), zero for untouched rows.
template <typename EntityGrad>
void compare_all(ModelParams<double>& p, const std::function<double()>& objective, const Gradients<double>& g,
                 EntityGrad entity_analytic, const std::string& label, GradientCheckResult& result) {
  auto record = [&](double analytic, double numeric, const std::string& where) {
    const double err = relative_error(analytic, numeric);
    ++result.entries_checked;
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      std::ostringstream s;
      s << label << " " << where << ": analytic " << analytic << " numeric " << numeric;
      result.worst = s.str();
    }
  };
  for (Eigen::Index e = 0; e < p.entity.rows(); ++e)
    for (Eigen::Index j = 0; j < p.entity.cols(); ++j)
      record(entity_analytic(static_cast<EntityId>(e), j), central_difference(&p.entity(e, j), objective),
             "E(" + std::to_string(e) + "," + std::to_string(j) + ")");
  for (Eigen::Index i = 0; i < p.hidden_weight.rows(); ++i)
    for (Eigen::Index j = 0; j < p.hidden_weight.cols(); ++j)
      record(g.hidden_weight(i, j), central_difference(&p.hidden_weight(i, j), objective),
             "H(" + std::to_string(i) + "," + std::to_string(j) + ")");
  for (Eigen::Index i = 0; i < p.hidden_bias.size(); ++i)
    record(g.hidden_bias[i], central_difference(&p.hidden_bias[i], objective), "b1(" + std::to_string(i) + ")");
  for (Eigen::Index i = 0; i < p.output_weight.rows(); ++i)
    for (Eigen::Index j = 0; j < p.output_weight.cols(); ++j)
      record(g.output_weight(i, j), central_difference(&p.output_weight(i, j), objective),
             "W(" + std::to_string(i) + "," + std::to_string(j) + ")");
  for (Eigen::Index i = 0; i < p.output_bias.size(); ++i)
    record(g.output_bias[i], central_difference(&p.output_bias[i], objective), "b2(" + std::to_string(i) + ")");
}

inline auto sparse_lookup(const Gradients<double>& g) {
  return [&g](EntityId e, Eigen::Index j) {
    const auto row = g.entity_row(e);
    return row ? (*row)[j] : 0.0;
  };
}

}  // namespace detail

/// One randomized instance (|E| <= 10, |R| <= 7, d, k <= 5). Checks both the
/// single-pair backward pass under a random dropout mask and the batched
/// training objective (mean BCE + L2 penalty) against central differences.
inline GradientCheckResult check_random_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const ModelShape shape{uniform_int(2, 10), uniform_int(1, 7), uniform_int(1, 5), uniform_int(1, 5)};
  auto params = random_params(shape, rng);

  GradientCheckResult result;

  // Single pair, possibly a self-pair, with an explicit dropout mask.
  {
    const EntityId s = uniform_int(0, static_cast<int>(shape.num_entities) - 1);
    const EntityId o = uniform_int(0, 3) == 0 ? s : uniform_int(0, static_cast<int>(shape.num_entities) - 1);
    const double rate = uniform_int(0, 1) ? 0.3 : 0.0;
    Vector<double> mask(shape.hidden_width);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask[i] = uniform_int(0, 9) < 3 && rate > 0 ? 0.0 : 1.0;
    const double scale = 1.0 / (1.0 - rate);
    Vector<double> y(shape.num_relations);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = uniform_int(0, 1);

    const auto cache = forward_masked(params, s, o, mask, scale);
    const auto analytic = backward(params, cache, y);
    auto objective = [&] { return bce_loss(forward_masked(params, s, o, mask, scale).yhat, y); };
    detail::compare_all(params, objective, analytic.grads, detail::sparse_lookup(analytic.grads),
                        "pair(" + std::to_string(s) + "," + std::to_string(o) + ")", result);
  }

  // Batched objective over a few random pairs with dropout and L2.
  {
    std::vector<Triple> triples;
    const int count = uniform_int(1, 8);
    for (int i = 0; i < count; ++i)
      triples.push_back({uniform_int(0, static_cast<int>(shape.num_entities) - 1),
                         uniform_int(0, static_cast<int>(shape.num_relations) - 1),
                         uniform_int(0, static_cast<int>(shape.num_entities) - 1)});
    const auto pairs = build_pair_labels(triples, static_cast<std::int32_t>(shape.num_relations));
    Batch batch;
    for (std::size_t i = 0; i < pairs.size(); ++i) batch.pair_ids.push_back(i);
    std::shuffle(batch.pair_ids.begin(), batch.pair_ids.end(), rng);
    const double rate = uniform_int(0, 1) ? 0.25 : 0.0;
    const double l2 = uniform_int(0, 1) ? 0.1 : 0.0;
    const Rng dropout_state(seed ^ 0x5eedULL);

    Rng first = dropout_state;
    const auto analytic = batch_objective(params, pairs, batch, rate, l2, first);
    auto objective = [&] {
      Rng replay = dropout_state;
      return batch_objective(params, pairs, batch, rate, l2, replay).loss;
    };
    detail::compare_all(params, objective, analytic.grads, detail::sparse_lookup(analytic.grads), "batch", result);
  }
  return result;
}

}  // namespace shallom::oracle

#endif  // SHALLOM_TESTS_GRADIENT_CHECK_HPP
