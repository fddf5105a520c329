#include "shallom/kg.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include "shallom/errors.hpp"
#include "shallom/random.hpp"

namespace shallom {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view kSpace = " \t\r\n\v\f";
  const auto first = s.find_first_not_of(kSpace);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(kSpace);
  return s.substr(first, last - first + 1);
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

std::int32_t LabelIndex::intern(std::string_view label) {
  if (auto it = ids_.find(label); it != ids_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(labels_.size());
  labels_.emplace_back(label);
  ids_.emplace(labels_.back(), id);
  return id;
}

std::optional<std::int32_t> LabelIndex::find(std::string_view label) const {
  if (auto it = ids_.find(label); it != ids_.end()) return it->second;
  return std::nullopt;
}

LabelIndex LabelIndex::from_labels(std::vector<std::string> labels) {
  LabelIndex index;
  for (auto& label : labels) {
    if (index.find(label)) throw ConfigError("duplicate label '" + label + "'");
    index.intern(label);
  }
  return index;
}

std::uint64_t Vocabulary::hash() const noexcept {
  std::uint64_t h = fnv1a("entities");
  for (const auto& label : entities.labels()) h = fnv1a(std::string_view("\n", 1), fnv1a(label, h));
  h = fnv1a("relations", h);
  for (const auto& label : relations.labels()) h = fnv1a(std::string_view("\n", 1), fnv1a(label, h));
  return h;
}

OovPolicy parse_oov_policy(std::string_view text) {
  if (text == "skip") return OovPolicy::Skip;
  if (text == "error") return OovPolicy::Error;
  throw ConfigError("unknown OOV policy '" + std::string(text) + "' (expected skip|error)");
}

std::string_view to_string(OovPolicy policy) noexcept {
  return policy == OovPolicy::Skip ? "skip" : "error";
}

std::vector<RawTriple> parse_triples(std::istream& in, const std::string& source_name) {
  std::vector<RawTriple> triples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;

    std::string_view rest = line;
    std::string_view fields[3];
    std::size_t count = 0;
    while (true) {
      const auto tab = rest.find('\t');
      if (count < 3) fields[count] = rest.substr(0, tab);
      ++count;
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (count != 3)
      throw ParseError(source_name, line_no, "expected 3 tab-separated fields, found " + std::to_string(count));
    for (auto& field : fields) {
      field = trim(field);
      if (field.empty()) throw ParseError(source_name, line_no, "empty field");
    }
    triples.push_back({std::string(fields[0]), std::string(fields[1]), std::string(fields[2])});
  }
  return triples;
}

std::vector<RawTriple> read_triples_file(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  return parse_triples(in, path.string());
}

Vocabulary build_vocabulary(std::span<const RawTriple> train) {
  if (train.empty()) throw ConfigError("cannot build a vocabulary from an empty training split");
  Vocabulary vocab;
  for (const auto& t : train) {
    vocab.entities.intern(t.subject);
    vocab.relations.intern(t.relation);
    vocab.entities.intern(t.object);
  }
  return vocab;
}

IndexedSplit index_triples(std::span<const RawTriple> raw, const Vocabulary& vocab, OovPolicy policy,
                           const std::string& split_name) {
  IndexedSplit out;
  out.triples.reserve(raw.size());
  for (const auto& t : raw) {
    const auto s = vocab.entities.find(t.subject);
    const auto p = vocab.relations.find(t.relation);
    const auto o = vocab.entities.find(t.object);
    if (s && p && o) {
      out.triples.push_back({*s, *p, *o});
      continue;
    }
    if (policy == OovPolicy::Error) {
      const std::string& missing = !s ? t.subject : !p ? t.relation : t.object;
      throw OovError(missing, split_name);
    }
    ++out.skipped;
  }
  return out;
}

PairLabelIndex build_pair_labels(std::span<const Triple> train, std::int32_t num_relations) {
  std::vector<Triple> sorted(train.begin(), train.end());
  // (s, o, p) order groups each pair's relations together.
  std::sort(sorted.begin(), sorted.end(), [](const Triple& a, const Triple& b) {
    return std::tie(a.s, a.o, a.p) < std::tie(b.s, b.o, b.p);
  });
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  PairLabelIndex index;
  index.num_relations_ = num_relations;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& t = sorted[i];
    if (i == 0 || t.s != sorted[i - 1].s || t.o != sorted[i - 1].o) {
      if (i != 0) index.offsets_.push_back(index.labels_.size());
      index.pairs_.push_back({t.s, t.o});
    }
    index.labels_.push_back(t.p);
  }
  if (!sorted.empty()) index.offsets_.push_back(index.labels_.size());
  return index;
}

std::vector<Triple> PairLabelIndex::to_triples() const {
  std::vector<Triple> out;
  out.reserve(labels_.size());
  for (std::size_t i = 0; i < pairs_.size(); ++i)
    for (RelationId p : labels(i)) out.push_back({pairs_[i].s, p, pairs_[i].o});
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t count_multilabel_pairs(const PairLabelIndex& index) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < index.size(); ++i)
    if (index.labels(i).size() >= 2) ++count;
  return count;
}

SplitFiles find_split_files(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' does not exist");
  auto locate = [&](std::initializer_list<const char*> stems) -> fs::path {
    for (const char* stem : stems)
      for (const char* ext : {".txt", ".tsv", ""}) {
        auto candidate = dir / (std::string(stem) + ext);
        if (fs::is_regular_file(candidate)) return candidate;
      }
    throw IoError("no '" + std::string(*stems.begin()) + "' split file in '" + dir.string() + "'");
  };
  return {locate({"train"}), locate({"valid", "validation", "dev"}), locate({"test"})};
}

namespace {

DatasetSplits index_dataset(const SplitFiles& files, Vocabulary vocab, const std::vector<RawTriple>& train,
                            OovPolicy policy) {
  DatasetSplits splits;
  splits.vocab = std::move(vocab);
  splits.train = index_triples(train, splits.vocab, OovPolicy::Error, "train");
  const auto valid = read_triples_file(files.valid);
  const auto test = read_triples_file(files.test);
  splits.valid = index_triples(valid, splits.vocab, policy, "valid");
  splits.test = index_triples(test, splits.vocab, policy, "test");
  for (const auto* split : {&splits.valid, &splits.test})
    if (split->skipped > 0)
      std::cerr << "warning: skipped " << split->skipped << " "
                << (split == &splits.valid ? "valid" : "test")
                << " triple(s) with labels outside the training vocabulary\n";
  return splits;
}

}  // namespace

DatasetSplits load_dataset(const std::filesystem::path& dir, OovPolicy policy) {
  const auto files = find_split_files(dir);
  const auto train = read_triples_file(files.train);
  auto vocab = build_vocabulary(train);
  return index_dataset(files, std::move(vocab), train, policy);
}

DatasetSplits load_dataset(const std::filesystem::path& dir, const Vocabulary& vocab, OovPolicy policy) {
  const auto files = find_split_files(dir);
  const auto train = read_triples_file(files.train);
  auto splits = index_dataset(files, vocab, {}, policy);
  splits.train = index_triples(train, splits.vocab, policy, "train");
  return splits;
}

void write_labels(const std::filesystem::path& path, const LabelIndex& labels) {
  auto out = open_for_write(path);
  for (const auto& label : labels.labels()) out << label << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

LabelIndex read_labels(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    labels.push_back(line);
  }
  return LabelIndex::from_labels(std::move(labels));
}

void write_indexed_triples(const std::filesystem::path& path, std::span<const Triple> triples) {
  auto out = open_for_write(path);
  for (const auto& t : triples) out << t.s << '\t' << t.p << '\t' << t.o << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace shallom
