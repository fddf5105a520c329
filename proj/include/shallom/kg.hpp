#ifndef SHALLOM_KG_HPP
#define SHALLOM_KG_HPP

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace shallom {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

struct RawTriple {
  std::string subject;
  std::string relation;
  std::string object;

  friend bool operator==(const RawTriple&, const RawTriple&) = default;
};

struct Triple {
  EntityId s = 0;
  RelationId p = 0;
  EntityId o = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Bidirectional label <-> dense index map for one symbol kind.
class LabelIndex {
 public:
  /// Returns the index of `label`, assigning the next free one on first sight.
  std::int32_t intern(std::string_view label);
  std::optional<std::int32_t> find(std::string_view label) const;
  const std::string& label(std::int32_t id) const { return labels_.at(static_cast<std::size_t>(id)); }
  std::int32_t size() const noexcept { return static_cast<std::int32_t>(labels_.size()); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  static LabelIndex from_labels(std::vector<std::string> labels);

  friend bool operator==(const LabelIndex& a, const LabelIndex& b) { return a.labels_ == b.labels_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
  };
  std::unordered_map<std::string, std::int32_t, Hash, std::equal_to<>> ids_;
  std::vector<std::string> labels_;
};

struct Vocabulary {
  LabelIndex entities;
  LabelIndex relations;

  std::int32_t num_entities() const noexcept { return entities.size(); }
  std::int32_t num_relations() const noexcept { return relations.size(); }

  /// Order-sensitive digest of every label; stored in checkpoints.
  std::uint64_t hash() const noexcept;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

enum class OovPolicy { Error, Skip };

OovPolicy parse_oov_policy(std::string_view text);
std::string_view to_string(OovPolicy policy) noexcept;

struct IndexedSplit {
  std::vector<Triple> triples;
  std::size_t skipped = 0;
};

struct DatasetSplits {
  Vocabulary vocab;
  IndexedSplit train;
  IndexedSplit valid;
  IndexedSplit test;
};

/// Multi-label targets: each distinct (s, o) pair of the training split with
/// the sorted set of relations linking it.
class PairLabelIndex {
 public:
  struct Pair {
    EntityId s;
    EntityId o;
  };

  PairLabelIndex() = default;

  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }
  std::int32_t num_relations() const noexcept { return num_relations_; }
  const Pair& pair(std::size_t i) const { return pairs_[i]; }
  std::span<const RelationId> labels(std::size_t i) const {
    return {labels_.data() + offsets_[i], labels_.data() + offsets_[i + 1]};
  }
  /// Expands back to the deduplicated, sorted triple set.
  std::vector<Triple> to_triples() const;

  friend PairLabelIndex build_pair_labels(std::span<const Triple> train, std::int32_t num_relations);

 private:
  std::vector<Pair> pairs_;
  std::vector<std::size_t> offsets_{0};
  std::vector<RelationId> labels_;
  std::int32_t num_relations_ = 0;
};

/// Reads tab-separated subject/relation/object lines. `source_name` is used
/// in error messages only.
std::vector<RawTriple> parse_triples(std::istream& in, const std::string& source_name = "<stream>");
std::vector<RawTriple> read_triples_file(const std::filesystem::path& path);

Vocabulary build_vocabulary(std::span<const RawTriple> train);

IndexedSplit index_triples(std::span<const RawTriple> raw, const Vocabulary& vocab, OovPolicy policy,
                           const std::string& split_name = "train");

PairLabelIndex build_pair_labels(std::span<const Triple> train, std::int32_t num_relations);

std::size_t count_multilabel_pairs(const PairLabelIndex& index);

/// Locates train/valid/test files in `dir`. Accepts `<split>.txt`, `<split>.tsv`
/// or `<split>` and the `valid`/`validation`/`dev` spellings of the middle split.
struct SplitFiles {
  std::filesystem::path train, valid, test;
};
SplitFiles find_split_files(const std::filesystem::path& dir);

/// Loads raw splits from `dir`, builds the vocabulary from train and indexes
/// valid/test under `policy`. Train triples are always indexed strictly.
DatasetSplits load_dataset(const std::filesystem::path& dir, OovPolicy policy);

/// Same, but indexes every split against an existing vocabulary.
DatasetSplits load_dataset(const std::filesystem::path& dir, const Vocabulary& vocab, OovPolicy policy);

/// One label per line, line number = index.
void write_labels(const std::filesystem::path& path, const LabelIndex& labels);
LabelIndex read_labels(const std::filesystem::path& path);

void write_indexed_triples(const std::filesystem::path& path, std::span<const Triple> triples);

}  // namespace shallom

#endif  // SHALLOM_KG_HPP
