#include "mtmask/mtile.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mtmask {
namespace fs = std::filesystem;

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

int header_int(const ordered_json& h, const char* key) {
  if (!h.contains(key) || !h[key].is_number_integer()) throw FormatError(std::string("malformed header: missing integer '") + key + "'");
  const auto v = h[key].get<long long>();
  if (v <= 0 || v > (1 << 20)) throw FormatError(std::string("malformed header: '") + key + "' out of range");
  return static_cast<int>(v);
}

}  // namespace

void write_envelope(const fs::path& path, const ordered_json& header, std::span<const float> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  const std::string line = header.dump();
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.put('\n');
  std::vector<char> bytes(payload.size() * 4);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    const std::uint32_t le = to_le(std::bit_cast<std::uint32_t>(payload[i]));
    std::memcpy(bytes.data() + 4 * i, &le, 4);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Envelope read_envelope(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("malformed header: empty file " + path.string());
  Envelope env;
  try {
    env.header = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed header in " + path.string() + ": " + e.what());
  }
  if (!env.header.is_object()) throw FormatError("malformed header: not a JSON object in " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw FormatError("truncated payload: byte count not a multiple of 4 in " + path.string());
  env.payload.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < env.payload.size(); ++i) {
    std::uint32_t le;
    std::memcpy(&le, bytes.data() + 4 * i, 4);
    env.payload[i] = std::bit_cast<float>(to_le(le));
  }
  return env;
}

const FloatPlane* PlaneStack::find(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return &planes[i];
  return nullptr;
}

void save_planes(const fs::path& path, const PlaneStack& stack) {
  if (stack.names.size() != stack.planes.size()) throw DataError("plane names and planes differ in count");
  ordered_json h;
  h["w"] = stack.width;
  h["h"] = stack.height;
  h["pixel_size"] = stack.pixel_size;
  h["planes"] = stack.names;
  const std::size_t n = static_cast<std::size_t>(stack.width) * stack.height;
  std::vector<float> payload;
  payload.reserve(n * stack.planes.size());
  for (const auto& p : stack.planes) {
    if (p.width != stack.width || p.height != stack.height) throw DataError("dimension mismatch while saving " + path.string());
    payload.insert(payload.end(), p.values.begin(), p.values.end());
  }
  write_envelope(path, h, payload);
}

PlaneStack load_planes(const fs::path& path) {
  Envelope env = read_envelope(path);
  const auto& h = env.header;
  PlaneStack s;
  s.width = header_int(h, "w");
  s.height = header_int(h, "h");
  if (!h.contains("pixel_size") || !h["pixel_size"].is_number()) throw FormatError("malformed header: missing 'pixel_size'");
  s.pixel_size = h["pixel_size"].get<double>();
  if (!(s.pixel_size > 0.0)) throw FormatError("malformed header: 'pixel_size' must be positive");
  if (!h.contains("planes") || !h["planes"].is_array()) throw FormatError("malformed header: missing 'planes'");
  for (const auto& n : h["planes"]) {
    if (!n.is_string()) throw FormatError("malformed header: plane names must be strings");
    s.names.push_back(n.get<std::string>());
  }
  const std::size_t n = static_cast<std::size_t>(s.width) * s.height;
  const std::size_t expected = n * s.names.size();
  if (env.payload.size() < expected)
    throw FormatError("truncated payload in " + path.string() + ": expected " + std::to_string(expected) + " values, found " +
                      std::to_string(env.payload.size()));
  if (env.payload.size() > expected)
    throw FormatError("dimension mismatch in " + path.string() + ": payload longer than header declares");
  for (std::size_t k = 0; k < s.names.size(); ++k) {
    FloatPlane p(s.width, s.height);
    std::copy_n(env.payload.begin() + static_cast<std::ptrdiff_t>(k * n), n, p.values.begin());
    s.planes.push_back(std::move(p));
  }
  return s;
}

FloatPlane to_float(const MaskPlane& mask) {
  FloatPlane p(mask.width, mask.height);
  std::transform(mask.values.begin(), mask.values.end(), p.values.begin(), [](std::uint8_t v) { return v ? 1.0f : 0.0f; });
  return p;
}

MaskPlane to_mask(const FloatPlane& plane, std::string_view name) {
  MaskPlane m(plane.width, plane.height);
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const float v = plane.values[i];
    if (v != 0.0f && v != 1.0f) throw FormatError("plane '" + std::string(name) + "' is not binary");
    m.values[i] = v == 1.0f ? 1 : 0;
  }
  return m;
}

namespace {
const FloatPlane& require(const PlaneStack& s, std::string_view name, const fs::path& path) {
  const FloatPlane* p = s.find(name);
  if (!p) throw FormatError("missing plane '" + std::string(name) + "' in " + path.string());
  return *p;
}
}  // namespace

void save_tile(const TileStack& tile, const fs::path& path) {
  tile.check();
  PlaneStack s{tile.width, tile.height, tile.pixel_size, {}, {}};
  for (int b = 0; b < kBandCount; ++b) {
    s.names.emplace_back(kBandNames[b]);
    s.planes.push_back(tile.bands[b]);
  }
  s.names.emplace_back("valid");
  s.planes.push_back(to_float(tile.valid));
  save_planes(path, s);
}

TileStack load_tile(const fs::path& path) {
  const PlaneStack s = load_planes(path);
  TileStack t(s.width, s.height, s.pixel_size);
  for (int b = 0; b < kBandCount; ++b) t.bands[b] = require(s, kBandNames[b], path);
  t.valid = to_mask(require(s, "valid", path), "valid");
  t.check();
  return t;
}

void save_masks(const MaskSet& masks, const fs::path& path, double pixel_size) {
  masks.check();
  PlaneStack s{masks.width(), masks.height(), pixel_size, {}, {}};
  for (int m = 0; m < kMaskCount; ++m) {
    s.names.emplace_back(kMaskNames[m]);
    s.planes.push_back(to_float(masks.planes[m]));
  }
  save_planes(path, s);
}

MaskSet load_masks(const fs::path& path) {
  const PlaneStack s = load_planes(path);
  MaskSet masks;
  for (int m = 0; m < kMaskCount; ++m) masks.planes[m] = to_mask(require(s, kMaskNames[m], path), kMaskNames[m]);
  return masks;
}

void save_mask(const MaskPlane& mask, std::string_view name, const fs::path& path, double pixel_size) {
  save_planes(path, PlaneStack{mask.width, mask.height, pixel_size, {std::string(name)}, {to_float(mask)}});
}

MaskPlane load_mask(const fs::path& path, std::string_view name) {
  const PlaneStack s = load_planes(path);
  return to_mask(require(s, name, path), name);
}

void save_dem(const Dem& dem, const fs::path& path) {
  dem.check();
  save_planes(path, PlaneStack{dem.width(), dem.height(), dem.pixel_size, {"elevation"}, {dem.elevation}});
}

Dem load_dem(const fs::path& path) {
  const PlaneStack s = load_planes(path);
  Dem dem{s.pixel_size, require(s, "elevation", path)};
  dem.check();
  return dem;
}

}  // namespace mtmask
