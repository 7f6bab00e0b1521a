#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <cstring>

#include "affcode/datamodel.hpp"
#include "affcode/error.hpp"

namespace affcode {
namespace {

constexpr std::uint32_t kMaxStringBytes = 1u << 20;

class ByteWriter {
 public:
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v & 0xff));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  void reserve(std::size_t n) { out_.reserve(n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string_view what)
      : bytes_(bytes), what_(what) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void magic(std::string_view expected) {
    if (remaining() < expected.size() ||
        std::memcmp(bytes_.data(), expected.data(), expected.size()) != 0) {
      throw ParseError(fmt::format("{}: bad magic, expected \"{}\"", what_, expected), 0);
    }
    pos_ += expected.size();
  }

  void version() {
    const std::size_t at = pos_;
    const auto v = u16("version");
    if (v != kFormatVersion) {
      throw ParseError(fmt::format("{}: unsupported version {}", what_, v), at);
    }
  }

  std::uint16_t u16(std::string_view field) {
    need(2, field);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  std::uint32_t u32(std::string_view field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  std::string string(std::string_view field) {
    const std::size_t at = pos_;
    const auto len = u32(field);
    if (len > kMaxStringBytes) {
      throw ParseError(fmt::format("{}: {} length {} is implausible", what_, field, len), at);
    }
    need(len, field);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }

  /// Reads `count` f32 values. A short payload is reported as truncated.
  std::vector<float> f32_payload(std::size_t count) {
    if (remaining() / 4 < count) {
      throw ParseError(fmt::format("{}: truncated payload ({} of {} bytes)", what_, remaining(),
                                   count * 4),
                       bytes_.size());
    }
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t at = pos_;
      const auto bits = u32("payload");
      values[i] = std::bit_cast<float>(bits);
      if (!std::isfinite(values[i])) {
        throw ParseError(fmt::format("{}: non-finite value", what_), at);
      }
    }
    return values;
  }

  void finish() {
    if (remaining() != 0) {
      throw ParseError(fmt::format("{}: {} trailing bytes after payload", what_, remaining()), pos_);
    }
  }

 private:
  void need(std::size_t n, std::string_view field) {
    if (remaining() < n) {
      throw ParseError(fmt::format("{}: truncated header while reading {}", what_, field), pos_);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::string_view what_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_filtermap(const FilterMap& map) {
  if (map.channels() == 0 || map.height() == 0 || map.width() == 0) {
    throw InputError("write_filtermap: filter map has a zero dimension");
  }
  ByteWriter w;
  w.reserve(32 + map.instance_id().size() + map.layer().size() + map.data().size() * 4);
  w.bytes("GGFM");
  w.u16(kFormatVersion);
  w.string(map.instance_id());
  w.string(map.layer());
  w.u32(map.channels());
  w.u32(map.height());
  w.u32(map.width());
  for (float v : map.data()) w.f32(v);
  return w.take();
}

FilterMap decode_filtermap(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "filter map");
  r.magic("GGFM");
  r.version();
  auto instance_id = r.string("instance_id");
  auto layer = r.string("layer");
  const std::size_t dims_at = r.offset();
  const auto c = r.u32("C");
  const auto h = r.u32("H");
  const auto w = r.u32("W");
  if (c == 0 || h == 0 || w == 0) {
    throw ParseError(fmt::format("filter map: zero dimension {}x{}x{}", c, h, w), dims_at);
  }
  if (static_cast<double>(c) * h * w * 4.0 > static_cast<double>(r.remaining()) + 0.5) {
    throw ParseError(fmt::format("filter map: truncated payload ({} bytes for shape {}x{}x{})",
                                 r.remaining(), c, h, w),
                     bytes.size());
  }
  auto data = r.f32_payload(static_cast<std::size_t>(c) * h * w);
  r.finish();
  return FilterMap(std::move(instance_id), std::move(layer), c, h, w, std::move(data));
}

FilterMap read_filtermap(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_filtermap(bytes);
  } catch (const ParseError& e) {
    throw e.with_context(path.string());
  }
}

void write_filtermap(const FilterMap& map, const std::filesystem::path& path) {
  write_file_bytes(path, encode_filtermap(map));
}

std::vector<std::uint8_t> encode_affinity(const AffinityMatrix& matrix) {
  ByteWriter w;
  w.reserve(18 + matrix.scores().data().size() * 4);
  w.bytes("GGAM");
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(matrix.num_instances()));
  w.u32(static_cast<std::uint32_t>(matrix.num_functions()));
  for (const auto& d : matrix.descriptors()) {
    w.string(d.layer);
    w.u32(d.prototype_rank);
  }
  for (float v : matrix.scores().data()) w.f32(v);
  return w.take();
}

AffinityMatrix decode_affinity(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "affinity matrix");
  r.magic("GGAM");
  r.version();
  const std::size_t shape_at = r.offset();
  const std::size_t n = r.u32("N");
  const std::size_t alpha = r.u32("alpha");
  if (n == 0 || alpha == 0) {
    throw ParseError(fmt::format("affinity matrix: empty shape N={} alpha={}", n, alpha), shape_at);
  }
  if (alpha > r.remaining() / 8) {  // each descriptor takes at least 8 bytes
    throw ParseError(fmt::format("affinity matrix: truncated header, {} descriptors declared", alpha),
                     shape_at);
  }
  std::vector<AffinityFunctionDescriptor> descriptors;
  descriptors.reserve(alpha);
  for (std::size_t f = 0; f < alpha; ++f) {
    auto layer = r.string("descriptor layer");
    const auto z = r.u32("descriptor z");
    descriptors.push_back({std::move(layer), z});
  }
  const std::size_t payload_at = r.offset();
  // Header values come from the file; size the payload in floating point
  // first so an absurd N or alpha cannot wrap the byte count.
  if (static_cast<double>(n) * static_cast<double>(alpha) * static_cast<double>(n) * 4.0 >
      static_cast<double>(r.remaining()) + 0.5) {
    throw ParseError(fmt::format("affinity matrix: truncated payload, header N={} alpha={} needs "
                                 "more than the {} bytes present",
                                 n, alpha, r.remaining()),
                     payload_at);
  }
  const std::size_t count = n * alpha * n;
  if (r.remaining() != count * 4) {
    if (r.remaining() < count * 4) {
      throw ParseError(fmt::format("affinity matrix: truncated payload, header N={} alpha={} needs "
                                   "{} bytes, found {}",
                                   n, alpha, count * 4, r.remaining()),
                       payload_at);
    }
    throw ParseError(fmt::format("affinity matrix: shape mismatch, header N={} alpha={} needs {} "
                                 "payload bytes, found {}",
                                 n, alpha, count * 4, r.remaining()),
                     payload_at);
  }
  auto values = r.f32_payload(count);
  r.finish();
  return AffinityMatrix(n, std::move(descriptors), MatrixF(n, alpha * n, std::move(values)));
}

void save_affinity(const AffinityMatrix& matrix, const std::filesystem::path& path) {
  write_file_bytes(path, encode_affinity(matrix));
}

AffinityMatrix load_affinity(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_affinity(bytes);
  } catch (const ParseError& e) {
    throw e.with_context(path.string());
  }
}

}  // namespace affcode
