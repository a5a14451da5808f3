#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/nnet/bundle.hpp"

// Checkpoint container, little-endian throughout:
//
//   magic      8 bytes  "LUSSLCKP"
//   version    u32      kCheckpointVersion
//   meta_len   u64      length of the metadata JSON
//   meta       bytes    UTF-8 JSON: {"architecture": {...}, "metadata": {...}}
//   n_tensors  u32
//   tensor*    u32 name_len, name bytes, u32 rows, u32 cols, rows*cols float32
//   crc32      u32      zlib CRC-32 of every preceding byte
//
// A reader rejects the file before constructing anything if the size, magic,
// version or checksum is wrong.

namespace lussl::nn {

inline constexpr char kCheckpointMagic[8] = {'L', 'U', 'S', 'S', 'L', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline nlohmann::json to_json(const ArchitectureConfig& a) {
  nlohmann::json heads = nlohmann::json::object();
  for (const auto& [task, kind] : a.heads) heads[std::string(task_name(task))] = head_kind_name(kind);
  return {{"widths", a.extractor.widths},
          {"kernel", a.extractor.kernel},
          {"stride", a.extractor.stride},
          {"input_size", a.extractor.input_size},
          {"with_projector", a.with_projector},
          {"projector_hidden", a.projector_hidden},
          {"embedding_dim", a.embedding_dim},
          {"heads", heads}};
}

inline ArchitectureConfig architecture_from_json(const nlohmann::json& j) {
  ArchitectureConfig a;
  a.extractor.widths = j.at("widths").get<std::vector<int>>();
  a.extractor.kernel = j.value("kernel", 3);
  a.extractor.stride = j.value("stride", 2);
  a.extractor.input_size = j.value("input_size", kFrameSize);
  a.with_projector = j.value("with_projector", true);
  a.projector_hidden = j.value("projector_hidden", 128);
  a.embedding_dim = j.value("embedding_dim", 64);
  if (j.contains("heads"))
    for (const auto& [task, kind] : j.at("heads").items()) a.heads[parse_task(task)] = parse_head_kind(kind.get<std::string>());
  return a;
}

inline nlohmann::json to_json(const BundleMetadata& m) {
  return {{"method", m.method}, {"seed", m.seed}, {"epoch", m.epoch}, {"extra", m.extra}};
}

inline BundleMetadata metadata_from_json(const nlohmann::json& j) {
  BundleMetadata m;
  m.method = j.value("method", std::string("none"));
  m.seed = j.value("seed", std::uint64_t{0});
  m.epoch = j.value("epoch", 0);
  if (j.contains("extra")) m.extra = j.at("extra").get<std::map<std::string, std::string>>();
  return m;
}

namespace detail {

template <typename U>
void put(std::vector<unsigned char>& buf, U v) {
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  buf.insert(buf.end(), bytes, bytes + sizeof(U));
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& buf, std::size_t end) : buf_(buf), end_(end) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  const unsigned char* raw(std::size_t n) {
    need(n);
    const unsigned char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CheckpointError("checkpoint is truncated");
  }
  const std::vector<unsigned char>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<unsigned char> serialize_bundle(const ModelBundle<float>& bundle) {
  std::vector<unsigned char> buf(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  detail::put<std::uint32_t>(buf, kCheckpointVersion);
  const std::string meta = nlohmann::json{{"architecture", to_json(bundle.architecture())},
                                          {"metadata", to_json(bundle.metadata)}}
                               .dump();
  detail::put<std::uint64_t>(buf, meta.size());
  buf.insert(buf.end(), meta.begin(), meta.end());
  const auto params = bundle.params();
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(p->name.size()));
    buf.insert(buf.end(), p->name.begin(), p->name.end());
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(p->value.rows()));
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(p->value.cols()));
    const auto* data = reinterpret_cast<const unsigned char*>(p->value.data());
    buf.insert(buf.end(), data, data + p->value.size() * sizeof(float));
  }
  detail::put<std::uint32_t>(buf, detail::crc32_of(buf.data(), buf.size()));
  return buf;
}

/// Parses a container. When `expected` is given, the stored architecture
/// must match it exactly.
inline ModelBundle<float> deserialize_bundle(const std::vector<unsigned char>& buf,
                                             const ArchitectureConfig* expected = nullptr) {
  constexpr std::size_t kMinSize = sizeof(kCheckpointMagic) + 4 + 8 + 4 + 4;
  if (buf.size() < kMinSize) throw CheckpointError("checkpoint is truncated");
  if (std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw CheckpointError("not a checkpoint (bad magic)");
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  if (stored_crc != detail::crc32_of(buf.data(), buf.size() - 4))
    throw CheckpointError("checkpoint checksum mismatch (corrupt or truncated file)");

  detail::Reader in(buf, buf.size() - 4);
  in.bytes(sizeof(kCheckpointMagic));
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto meta_len = in.get<std::uint64_t>();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in.bytes(static_cast<std::size_t>(meta_len)));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const ArchitectureConfig arch = architecture_from_json(meta.at("architecture"));
  if (expected && !(arch == *expected))
    throw ShapeError("checkpoint architecture " + to_json(arch).dump() + " does not match expected " +
                     to_json(*expected).dump());

  ModelBundle<float> bundle = init_bundle<float>(arch, 0);
  bundle.metadata = metadata_from_json(meta.at("metadata"));
  auto params = bundle.params();
  std::map<std::string, Param<float>*> by_name;
  for (auto* p : params) by_name[p->name] = p;

  const auto n = in.get<std::uint32_t>();
  if (n != params.size())
    throw ShapeError("checkpoint holds " + std::to_string(n) + " tensors, architecture expects " +
                     std::to_string(params.size()));
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = in.bytes(in.get<std::uint32_t>());
    const auto rows = in.get<std::uint32_t>();
    const auto cols = in.get<std::uint32_t>();
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ShapeError("checkpoint tensor '" + name + "' is not part of the architecture");
    Param<float>& p = *it->second;
    if (rows != p.value.rows() || cols != p.value.cols())
      throw ShapeError("checkpoint tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                       std::to_string(cols) + ", expected " + std::to_string(p.value.rows()) + "x" +
                       std::to_string(p.value.cols()));
    std::memcpy(p.value.data(), in.raw(static_cast<std::size_t>(rows) * cols * sizeof(float)),
                static_cast<std::size_t>(rows) * cols * sizeof(float));
  }
  if (in.position() != buf.size() - 4) throw CheckpointError("trailing bytes after checkpoint tensors");
  return bundle;
}

inline void save_checkpoint(const ModelBundle<float>& bundle, const std::filesystem::path& path) {
  const auto buf = serialize_bundle(bundle);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline ModelBundle<float> load_checkpoint(const std::filesystem::path& path, const ArchitectureConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_bundle(buf, expected);
}

}  // namespace lussl::nn
