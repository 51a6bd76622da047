#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace pursuit {

/// One archive file: a JSON manifest followed by flat little-endian float32 arrays.
///
///   bytes 0..7    magic "PLABCKPT"
///   bytes 8..11   u32 format version
///   bytes 12..19  u64 manifest length L
///   next L bytes  manifest JSON
///   remainder     float32 arrays in manifest order
///
/// Manifest: {"format", "version", "dtype", "byte_order", "components": [{"name",
/// "kind", "shape", "count"}...], "meta": {...}}.
struct ArchiveComponent {
  std::string name;
  std::string kind;  // "mlp" | "vector"
  nlohmann::ordered_json shape;
  std::vector<float> data;
};

struct Archive {
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  std::vector<ArchiveComponent> components;

  const ArchiveComponent* find(const std::string& name) const {
    for (const auto& c : components)
      if (c.name == name) return &c;
    return nullptr;
  }
  const ArchiveComponent& at(const std::string& name) const {
    if (const auto* c = find(name)) return *c;
    throw std::runtime_error("checkpoint has no component '" + name + "'");
  }
};

class CheckpointError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr char kArchiveMagic[8] = {'P', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kArchiveVersion = 1;

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::string& in, std::size_t pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("truncated checkpoint");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_archive(const Archive& a) {
  nlohmann::ordered_json comps = nlohmann::ordered_json::array();
  for (const auto& c : a.components)
    comps.push_back({{"name", c.name}, {"kind", c.kind}, {"shape", c.shape}, {"count", c.data.size()}});
  const nlohmann::ordered_json manifest{{"format", "pursuit-lab-checkpoint"},
                                        {"version", kArchiveVersion},
                                        {"dtype", "float32"},
                                        {"byte_order", "little"},
                                        {"components", comps},
                                        {"meta", a.meta}};
  const std::string m = manifest.dump();
  std::string out(kArchiveMagic, sizeof kArchiveMagic);
  detail::put_le<std::uint32_t>(out, kArchiveVersion);
  detail::put_le<std::uint64_t>(out, m.size());
  out += m;
  for (const auto& c : a.components)
    for (float f : c.data) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

inline Archive decode_archive(const std::string& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kArchiveMagic, 8) != 0)
    throw CheckpointError("not a checkpoint archive");
  if (detail::get_le<std::uint32_t>(bytes, 8) != kArchiveVersion)
    throw CheckpointError("unsupported checkpoint version");
  const auto len = detail::get_le<std::uint64_t>(bytes, 12);
  if (20 + len > bytes.size()) throw CheckpointError("truncated checkpoint manifest");
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(bytes.substr(20, len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
  }
  Archive a;
  a.meta = manifest.value("meta", nlohmann::ordered_json::object());
  std::size_t pos = 20 + len;
  for (const auto& c : manifest.at("components")) {
    ArchiveComponent comp{c.at("name"), c.at("kind"), c.at("shape"), {}};
    const auto count = c.at("count").get<std::size_t>();
    if (pos + 4 * count > bytes.size()) throw CheckpointError("truncated checkpoint payload");
    comp.data.resize(count);
    for (std::size_t i = 0; i < count; ++i, pos += 4)
      comp.data[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, pos));
    a.components.push_back(std::move(comp));
  }
  if (pos != bytes.size()) throw CheckpointError("trailing bytes after checkpoint payload");
  return a;
}

inline void write_archive(const std::filesystem::path& path, const Archive& a) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_archive(a);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing " + path.string());
}

inline Archive read_archive(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_archive(ss.str());
}

}  // namespace pursuit
