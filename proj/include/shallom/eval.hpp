#ifndef SHALLOM_EVAL_HPP
#define SHALLOM_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shallom/errors.hpp"
#include "shallom/kg.hpp"
#include "shallom/model.hpp"
#include "shallom/parallel.hpp"

namespace shallom {

struct RankedEntry {
  RelationId relation;
  double score;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// Relations sorted by descending score; equal scores by ascending index.
using RankedRelations = std::vector<RankedEntry>;

RankedRelations rank_relations(std::span<const double> scores);

/// 1 iff `p` occupies one of the first `n` positions. Requires 1 <= n <= size.
int hit_at(const RankedRelations& ranked, RelationId p, std::int64_t n);

/// 0-based position `p` would take in rank_relations(scores), computed in
/// O(|R|) without sorting.
template <typename Scalar>
std::int64_t rank_position(std::span<const Scalar> scores, RelationId p) {
  const Scalar target = scores[static_cast<std::size_t>(p)];
  std::int64_t position = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const Scalar v = scores[i];
    if (v > target || (v == target && static_cast<RelationId>(i) < p)) ++position;
  }
  return position;
}

struct UrcResult {
  double analytic;
  double empirical;
};

/// Uniform random classifier: each of `test_size` queries gets an independent
/// uniformly random relation ranking and a uniformly random true relation.
UrcResult urc_baseline(std::int32_t num_relations, std::int64_t n, std::int64_t test_size, std::uint64_t seed);

inline const std::vector<std::int64_t> kDefaultHitsN{1, 3, 5, 10};

struct MetricsReport {
  std::map<std::int64_t, double> hits;
  std::size_t num_test_triples = 0;  // includes OOV-skipped triples
  std::size_t skipped_oov = 0;
  std::optional<double> train_runtime_seconds;
  std::vector<std::string> notes;
};

namespace detail {

/// Per-N hit counts over `triples`. Scoring runs in blocks; blocks are
/// distributed over `threads` workers and counts are integers, so the result
/// does not depend on the thread count.
template <typename Scalar>
std::vector<std::size_t> count_hits(const ModelParams<Scalar>& params, std::span<const Triple> triples,
                                    std::span<const std::int64_t> ns, unsigned threads) {
  constexpr std::size_t kBlock = 512;
  const std::size_t blocks = (triples.size() + kBlock - 1) / kBlock;
  std::vector<std::vector<std::size_t>> per_block(blocks, std::vector<std::size_t>(ns.size(), 0));
  parallel_for(blocks, threads, [&](std::size_t b, std::size_t) {
    const auto first = b * kBlock;
    const auto last = std::min(triples.size(), first + kBlock);
    std::vector<EntityId> subjects, objects;
    for (auto i = first; i < last; ++i) {
      subjects.push_back(triples[i].s);
      objects.push_back(triples[i].o);
    }
    const Matrix<Scalar> scores = predict_scores_batch(params, subjects, objects);
    for (auto i = first; i < last; ++i) {
      const auto col = static_cast<Eigen::Index>(i - first);
      const auto p = triples[i].p;
      if (p < 0 || p >= params.num_relations()) throw ShapeError("relation index out of range");
      const std::span<const Scalar> column(scores.col(col).data(), static_cast<std::size_t>(scores.rows()));
      const auto position = rank_position(column, p);
      for (std::size_t j = 0; j < ns.size(); ++j)
        if (position < ns[j]) ++per_block[b][j];
    }
  });
  std::vector<std::size_t> totals(ns.size(), 0);
  for (const auto& counts : per_block)
    for (std::size_t j = 0; j < ns.size(); ++j) totals[j] += counts[j];
  return totals;
}

}  // namespace detail

/// Hits@N with OOV-skipped triples counted as misses.
template <typename Scalar>
double hits_at_n(const ModelParams<Scalar>& params, std::span<const Triple> test, std::int64_t n,
                 std::size_t oov_skipped = 0, unsigned threads = 1) {
  const std::size_t denominator = test.size() + oov_skipped;
  if (denominator == 0) throw ConfigError("cannot evaluate on an empty split");
  if (n < 1 || n > params.num_relations())
    throw ConfigError("Hits@N requires 1 <= N <= |R| (N = " + std::to_string(n) + ")");
  const std::int64_t ns[] = {n};
  const auto hits = detail::count_hits(params, test, ns, threads)[0];
  return static_cast<double>(hits) / static_cast<double>(denominator);
}

/// Hits@N for every requested N. N larger than |R| is evaluated at N = |R|
/// (1.0 without OOV skips) and noted in the report.
template <typename Scalar>
MetricsReport evaluate(const ModelParams<Scalar>& params, const IndexedSplit& split,
                       std::span<const std::int64_t> ns = kDefaultHitsN, unsigned threads = 1) {
  MetricsReport report;
  report.num_test_triples = split.triples.size() + split.skipped;
  report.skipped_oov = split.skipped;
  if (report.num_test_triples == 0) throw ConfigError("cannot evaluate on an empty split");

  std::vector<std::int64_t> effective;
  for (auto n : ns) {
    if (n < 1) throw ConfigError("Hits@N requires N >= 1");
    if (n > params.num_relations())
      report.notes.push_back("hits@" + std::to_string(n) + " evaluated at N=|R|=" +
                             std::to_string(params.num_relations()));
    effective.push_back(std::min<std::int64_t>(n, params.num_relations()));
  }
  const auto counts = detail::count_hits(params, split.triples, effective, threads);
  for (std::size_t j = 0; j < effective.size(); ++j)
    report.hits[ns[j]] = static_cast<double>(counts[j]) / static_cast<double>(report.num_test_triples);
  if (split.skipped > 0)
    report.notes.push_back(std::to_string(split.skipped) + " out-of-vocabulary triple(s) counted as misses");
  return report;
}

}  // namespace shallom

#endif  // SHALLOM_EVAL_HPP
