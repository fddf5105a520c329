#ifndef SHALLOM_CHECKPOINT_HPP
#define SHALLOM_CHECKPOINT_HPP

// Binary checkpoint layout (all integers little-endian as written by the host):
//
//   char[8]   magic "SHLMCKPT"
//   u32       format version (1)
//   u32       scalar size in bytes (4 = float, 8 = double)
//   u64 x 4   |E|, |R|, d, k
//   u64       vocabulary hash
//   labels    |E| entity labels then |R| relation labels, each u32 length + bytes
//   tensors   E (row-major), H, b1, W, b2 (H and W column-major), raw scalars

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "shallom/errors.hpp"
#include "shallom/kg.hpp"
#include "shallom/model.hpp"

namespace shallom {

template <typename Scalar>
struct Checkpoint {
  Vocabulary vocab;
  ModelParams<Scalar> params;
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'S', 'H', 'L', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("checkpoint is truncated");
  return value;
}

inline void write_label(std::ostream& out, const std::string& label) {
  write_pod(out, static_cast<std::uint32_t>(label.size()));
  out.write(label.data(), static_cast<std::streamsize>(label.size()));
}

inline std::string read_label(std::istream& in) {
  const auto size = read_pod<std::uint32_t>(in);
  std::string label(size, '\0');
  in.read(label.data(), size);
  if (!in) throw IoError("checkpoint is truncated");
  return label;
}

template <typename Tensor>
void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(typename Tensor::Scalar)));
}

template <typename Tensor>
void read_tensor(std::istream& in, Tensor& t) {
  in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(typename Tensor::Scalar)));
  if (!in) throw IoError("checkpoint is truncated");
}

}  // namespace detail

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab, const ModelParams<Scalar>& params) {
  params.check_consistent();
  if (vocab.num_entities() != params.num_entities() || vocab.num_relations() != params.num_relations())
    throw ShapeError("vocabulary size does not match the model");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::write_pod(out, detail::kCheckpointVersion);
  detail::write_pod(out, static_cast<std::uint32_t>(sizeof(Scalar)));
  for (auto dim : {params.num_entities(), params.num_relations(), params.embedding_dim(), params.hidden_width()})
    detail::write_pod(out, static_cast<std::uint64_t>(dim));
  detail::write_pod(out, vocab.hash());
  for (const auto& label : vocab.entities.labels()) detail::write_label(out, label);
  for (const auto& label : vocab.relations.labels()) detail::write_label(out, label);
  detail::write_tensor(out, params.entity);
  detail::write_tensor(out, params.hidden_weight);
  detail::write_tensor(out, params.hidden_bias);
  detail::write_tensor(out, params.output_weight);
  detail::write_tensor(out, params.output_bias);
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  char magic[sizeof(detail::kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
    throw IoError("'" + path.string() + "' is not a checkpoint");
  if (detail::read_pod<std::uint32_t>(in) != detail::kCheckpointVersion)
    throw IoError("unsupported checkpoint version");
  if (detail::read_pod<std::uint32_t>(in) != sizeof(Scalar))
    throw IoError("checkpoint scalar type does not match");
  const auto n_ent = static_cast<Eigen::Index>(detail::read_pod<std::uint64_t>(in));
  const auto n_rel = static_cast<Eigen::Index>(detail::read_pod<std::uint64_t>(in));
  const auto d = static_cast<Eigen::Index>(detail::read_pod<std::uint64_t>(in));
  const auto k = static_cast<Eigen::Index>(detail::read_pod<std::uint64_t>(in));
  const auto stored_hash = detail::read_pod<std::uint64_t>(in);

  Checkpoint<Scalar> ckpt;
  for (Eigen::Index i = 0; i < n_ent; ++i) ckpt.vocab.entities.intern(detail::read_label(in));
  for (Eigen::Index i = 0; i < n_rel; ++i) ckpt.vocab.relations.intern(detail::read_label(in));
  if (ckpt.vocab.num_entities() != n_ent || ckpt.vocab.num_relations() != n_rel)
    throw IoError("checkpoint vocabulary contains duplicate labels");
  if (ckpt.vocab.hash() != stored_hash) throw IoError("checkpoint vocabulary hash mismatch");

  auto& p = ckpt.params;
  p.entity.resize(n_ent, d);
  p.hidden_weight.resize(k, 2 * d);
  p.hidden_bias.resize(k);
  p.output_weight.resize(n_rel, k);
  p.output_bias.resize(n_rel);
  detail::read_tensor(in, p.entity);
  detail::read_tensor(in, p.hidden_weight);
  detail::read_tensor(in, p.hidden_bias);
  detail::read_tensor(in, p.output_weight);
  detail::read_tensor(in, p.output_bias);
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes after checkpoint tensors");
  p.check_consistent();
  return ckpt;
}

}  // namespace shallom

#endif  // SHALLOM_CHECKPOINT_HPP
