#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ahue/activation.hpp"
#include "ahue/error.hpp"
#include "ahue/memory_index.hpp"

namespace ahue {

constexpr const char* kVersionString = "0.1.0";

// Floats in CSV/JSON-lines artifacts are written with 17 significant digits
// so a 64-bit value round-trips exactly.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

// Little-endian byte packing, independent of host order.
struct ByteWriter {
  std::vector<std::uint8_t> bytes;

  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
};

struct ByteReader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void need(std::size_t count, const char* what) {
    if (pos + count > bytes.size())
      raise(Errc::truncated, std::string("file ends at byte ") + std::to_string(bytes.size()) +
                                 " while reading " + what + " at offset " + std::to_string(pos));
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes[pos++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io_failure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::io_failure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(Errc::io_failure, "short write to " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// AHUE v1 activation tensor file: magic "AHUE", u32 version = 1, u32 N,
// u32 W, u32 H, u8 post_relu, then W*H*N float32 values in row-major
// (row, col, channel) order. All integers and floats little-endian.
// ---------------------------------------------------------------------------

inline void write_ahue(const ActivationImage& img, const std::filesystem::path& path) {
  img.validate();  // InvalidDims for zero dims, NotFinite for bad payloads
  detail::ByteWriter w;
  w.bytes.reserve(21 + img.data.size() * 4);
  w.u8('A');
  w.u8('H');
  w.u8('U');
  w.u8('E');
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(img.channels));
  w.u32(static_cast<std::uint32_t>(img.width));
  w.u32(static_cast<std::uint32_t>(img.height));
  w.u8(img.post_relu ? 1 : 0);
  for (float v : img.data) w.f32(v);
  detail::write_file(path, w.bytes);
}

inline ActivationImage read_ahue(const std::filesystem::path& path) {
  auto bytes = detail::read_file(path);
  detail::ByteReader r{bytes};
  static constexpr std::uint8_t magic[4] = {'A', 'H', 'U', 'E'};
  for (int i = 0; i < 4; ++i) {
    const std::uint8_t b = r.u8("magic");
    if (b != magic[i])
      raise(Errc::bad_magic, "bad magic byte at offset " + std::to_string(i) + " in " +
                                 path.string());
  }
  const std::uint32_t version = r.u32("version");
  if (version != 1)
    raise(Errc::bad_version,
          "unsupported version " + std::to_string(version) + " at offset 4 in " + path.string());
  const std::uint32_t n = r.u32("channel count");
  const std::uint32_t w = r.u32("width");
  const std::uint32_t h = r.u32("height");
  if (n == 0 || w == 0 || h == 0) raise(Errc::invalid_dims, "zero dimension in " + path.string());
  const std::uint8_t flag = r.u8("post_relu flag");
  if (flag > 1) raise(Errc::invalid_dims, "post_relu flag must be 0 or 1 in " + path.string());

  ActivationImage img = ActivationImage::zeros(static_cast<int>(w), static_cast<int>(h),
                                               static_cast<int>(n), flag == 1);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = r.f32("payload value");
  if (r.pos != bytes.size())
    raise(Errc::truncated, "trailing bytes after payload at offset " + std::to_string(r.pos) +
                               " in " + path.string());
  img.validate();
  return img;
}

// ---------------------------------------------------------------------------
// AHIX v1 index file: magic "AHIX", u32 version = 1, u32 N, u64 entry count,
// u8 mode (0 exact, 1 tree), then per entry N float32 values + float32 x, y +
// u32 class_id + u32 image_id. In tree mode a forest section follows:
// u32 trees, u32 leaf_size, u64 seed, u32 search_budget, then per tree a u32
// node count and nodes in array order (u8 kind: 0 internal, 1 leaf; internal:
// f32 threshold, u32 left, u32 right, N f32 direction; leaf: u32 item count,
// u32 items). Rebuilds from the same seed and insert order are byte-identical.
// ---------------------------------------------------------------------------

inline void write_ahix(const MemoryStore& store, const std::filesystem::path& path) {
  if (!store.frozen()) raise(Errc::not_frozen, "only frozen stores can be persisted");
  detail::ByteWriter w;
  w.u8('A');
  w.u8('H');
  w.u8('I');
  w.u8('X');
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(store.channels()));
  w.u64(store.size());
  w.u8(store.has_forest() ? 1 : 0);
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (float v : store.vector_of(i)) w.f32(v);
    w.f32(store.x_of(i));
    w.f32(store.y_of(i));
    w.u32(store.class_of(i));
    w.u32(store.image_of(i));
  }
  if (store.has_forest()) {
    const TreeConfig& cfg = store.tree_config();
    w.u32(static_cast<std::uint32_t>(cfg.trees));
    w.u32(static_cast<std::uint32_t>(cfg.leaf_size));
    w.u64(cfg.seed);
    w.u32(static_cast<std::uint32_t>(cfg.search_budget));
    for (const auto& tree : store.forest()) {
      w.u32(static_cast<std::uint32_t>(tree.size()));
      for (const auto& node : tree) {
        if (node.leaf()) {
          w.u8(1);
          w.u32(static_cast<std::uint32_t>(node.items.size()));
          for (std::uint32_t item : node.items) w.u32(item);
        } else {
          w.u8(0);
          w.f32(node.threshold);
          w.u32(node.left);
          w.u32(node.right);
          for (float d : node.direction) w.f32(d);
        }
      }
    }
  }
  detail::write_file(path, w.bytes);
}

inline MemoryStore read_ahix(const std::filesystem::path& path) {
  auto bytes = detail::read_file(path);
  detail::ByteReader r{bytes};
  static constexpr std::uint8_t magic[4] = {'A', 'H', 'I', 'X'};
  for (int i = 0; i < 4; ++i) {
    if (r.u8("magic") != magic[i])
      raise(Errc::bad_magic,
            "bad magic byte at offset " + std::to_string(i) + " in " + path.string());
  }
  const std::uint32_t version = r.u32("version");
  if (version != 1)
    raise(Errc::bad_version,
          "unsupported version " + std::to_string(version) + " at offset 4 in " + path.string());
  const std::uint32_t n = r.u32("channel count");
  if (n == 0) raise(Errc::invalid_dims, "zero channel count in " + path.string());
  const std::uint64_t count = r.u64("entry count");
  const std::uint8_t mode = r.u8("mode");
  if (mode > 1) raise(Errc::invalid_dims, "mode must be 0 or 1 in " + path.string());

  std::vector<float> vectors;
  vectors.reserve(count * n);
  std::vector<float> xs(count), ys(count);
  std::vector<std::uint32_t> classes(count), images(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    for (std::uint32_t c = 0; c < n; ++c) vectors.push_back(r.f32("entry vector"));
    xs[i] = r.f32("entry x");
    ys[i] = r.f32("entry y");
    classes[i] = r.u32("entry class");
    images[i] = r.u32("entry image");
  }

  std::vector<std::vector<detail::TreeNode>> trees;
  TreeConfig cfg;
  if (mode == 1) {
    cfg.trees = static_cast<int>(r.u32("tree count"));
    cfg.leaf_size = static_cast<int>(r.u32("leaf size"));
    cfg.seed = r.u64("tree seed");
    cfg.search_budget = static_cast<int>(r.u32("search budget"));
    trees.resize(cfg.trees);
    for (auto& tree : trees) {
      const std::uint32_t nodes = r.u32("node count");
      tree.resize(nodes);
      for (auto& node : tree) {
        const std::uint8_t kind = r.u8("node kind");
        if (kind == 1) {
          const std::uint32_t items = r.u32("leaf item count");
          node.items.resize(items);
          for (auto& item : node.items) item = r.u32("leaf item");
        } else if (kind == 0) {
          node.threshold = r.f32("split threshold");
          node.left = r.u32("left child");
          node.right = r.u32("right child");
          node.direction.resize(n);
          for (auto& d : node.direction) d = r.f32("split direction");
        } else {
          raise(Errc::invalid_dims,
                "bad node kind at offset " + std::to_string(r.pos - 1) + " in " + path.string());
        }
      }
    }
  }
  if (r.pos != bytes.size())
    raise(Errc::truncated, "trailing bytes after index at offset " + std::to_string(r.pos) +
                               " in " + path.string());
  return MemoryStore::from_parts(static_cast<int>(n), std::move(vectors), std::move(xs),
                                 std::move(ys), std::move(classes), std::move(images),
                                 std::move(trees), cfg);
}

// ---------------------------------------------------------------------------
// JSON-lines manifest: one {"path", "class_id", "image_id"} object per line;
// relative paths resolve against the manifest's directory.
// ---------------------------------------------------------------------------

struct ManifestRecord {
  std::filesystem::path path;
  std::uint32_t class_id = 0;
  std::uint32_t image_id = 0;
};

struct Manifest {
  std::vector<ManifestRecord> records;
  std::filesystem::path root;

  std::filesystem::path resolve(const ManifestRecord& rec) const {
    return rec.path.is_absolute() ? rec.path : root / rec.path;
  }
};

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_failure, "cannot open manifest " + path.string());
  Manifest manifest;
  manifest.root = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::uint32_t> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      raise(Errc::io_failure,
            "manifest line " + std::to_string(line_no) + " is not valid JSON: " + e.what());
    }
    if (!j.contains("path") || !j.contains("class_id") || !j.contains("image_id"))
      raise(Errc::io_failure, "manifest line " + std::to_string(line_no) +
                                  " needs path, class_id and image_id");
    const long long class_id = j["class_id"].get<long long>();
    const long long image_id = j["image_id"].get<long long>();
    if (class_id < 0 || image_id < 0)
      raise(Errc::io_failure,
            "negative id on manifest line " + std::to_string(line_no));
    ManifestRecord rec;
    rec.path = j["path"].get<std::string>();
    rec.class_id = static_cast<std::uint32_t>(class_id);
    rec.image_id = static_cast<std::uint32_t>(image_id);
    if (!std::filesystem::exists(manifest.resolve(rec)))
      raise(Errc::io_failure, "manifest line " + std::to_string(line_no) + " points to missing " +
                                  manifest.resolve(rec).string());
    seen_ids.push_back(rec.image_id);
    manifest.records.push_back(std::move(rec));
  }
  std::sort(seen_ids.begin(), seen_ids.end());
  if (std::adjacent_find(seen_ids.begin(), seen_ids.end()) != seen_ids.end())
    raise(Errc::io_failure, "duplicate image_id in manifest " + path.string());
  return manifest;
}

inline void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::io_failure, "cannot open " + path.string() + " for writing");
  for (const auto& rec : manifest.records) {
    nlohmann::json j;
    j["path"] = rec.path.generic_string();
    j["class_id"] = rec.class_id;
    j["image_id"] = rec.image_id;
    out << j.dump() << "\n";
  }
  if (!out) raise(Errc::io_failure, "short write to " + path.string());
}

}  // namespace ahue
