#include <cmath>
#include <numeric>
#include <random>

#include "shallom/eval.hpp"
#include "shallom/random.hpp"

namespace shallom {

RankedRelations rank_relations(std::span<const double> scores) {
  RankedRelations ranked;
  ranked.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericError("non-finite score for relation " + std::to_string(i));
    ranked.push_back({static_cast<RelationId>(i), scores[i]});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedEntry& a, const RankedEntry& b) { return a.score > b.score; });
  return ranked;
}

int hit_at(const RankedRelations& ranked, RelationId p, std::int64_t n) {
  const auto limit = std::min<std::size_t>(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)), ranked.size());
  for (std::size_t i = 0; i < limit; ++i)
    if (ranked[i].relation == p) return 1;
  return 0;
}

UrcResult urc_baseline(std::int32_t num_relations, std::int64_t n, std::int64_t test_size, std::uint64_t seed) {
  if (num_relations < 1) throw ConfigError("URC needs at least one relation");
  if (n < 1 || n > num_relations) throw ConfigError("URC requires 1 <= N <= |R|");
  if (test_size < 1) throw ConfigError("URC requires a positive test size");

  Rng rng = make_stream(seed, "urc");
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::uniform_int_distribution<RelationId> truth(0, num_relations - 1);
  std::vector<double> scores(static_cast<std::size_t>(num_relations));
  std::int64_t hits = 0;
  for (std::int64_t q = 0; q < test_size; ++q) {
    for (auto& s : scores) s = score(rng);
    hits += hit_at(rank_relations(scores), truth(rng), n);
  }
  return {static_cast<double>(n) / num_relations, static_cast<double>(hits) / static_cast<double>(test_size)};
}

}  // namespace shallom
