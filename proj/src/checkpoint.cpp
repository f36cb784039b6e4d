#include "hood/checkpoint.hpp"

#include "hood/binio.hpp"

namespace hood {

static const char kMagic[9] = "HOODCKPT";

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointEntry>& entries) {
  BinWriter w(path);
  w.magic(kMagic);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xffff)
      throw ConfigError("checkpoint: entry name too long: " + e.name);
    if (shape_numel(e.shape) != e.values.size())
      throw ConfigError("checkpoint: entry " + e.name + " shape " +
                        shape_str(e.shape) + " does not match value count");
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.shape.size()));
    for (int d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32_array(e.values.data(), static_cast<std::size_t>(e.values.size()));
  }
  w.close();
}

std::vector<CheckpointEntry> load_checkpoint(
    const std::filesystem::path& path) {
  BinReader r(path);
  r.expect_magic(kMagic);
  std::uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    throw FormatError(r.path() + ": unsupported checkpoint version " +
                          std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion),
                      8);
  std::uint32_t count = r.u32();
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    std::uint16_t name_len = r.u16();
    e.name.resize(name_len);
    r.bytes(e.name.data(), name_len);
    std::uint8_t rank = r.u8();
    long numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      std::uint32_t dim = r.u32();
      e.shape.push_back(static_cast<int>(dim));
      numel *= static_cast<long>(dim);
    }
    e.values.resize(numel);
    r.f32_array(e.values.data(), static_cast<std::size_t>(numel));
    entries.push_back(std::move(e));
  }
  r.expect_eof();
  return entries;
}

std::uint64_t file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for digest");
  char buf[65536];
  std::uint64_t h = 0xcbf29ce484222325ull;
  while (in) {
    in.read(buf, sizeof(buf));
    std::streamsize n = in.gcount();
    if (n > 0) h = fnv1a64(buf, static_cast<std::size_t>(n), h);
  }
  return h;
}

}  // namespace hood
