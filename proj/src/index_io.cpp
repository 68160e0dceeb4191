#include "hymor/index_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hymor/errors.hpp"

namespace hymor {

namespace {


class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f32s(const std::vector<double>& v) {
    for (double x : v) f32(x);
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw IndexFormatError(IndexFormatFault::truncated,
                             std::string("payload ends while reading ") + what);
    }
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return take(1, what)[0]; }
  std::uint16_t u16(const char* what) {
    auto s = take(2, what);
    return static_cast<std::uint16_t>(s[0] | (s[1] << 8));
  }
  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    return static_cast<std::uint32_t>(s[0]) | (static_cast<std::uint32_t>(s[1]) << 8) |
           (static_cast<std::uint32_t>(s[2]) << 16) | (static_cast<std::uint32_t>(s[3]) << 24);
  }
  std::vector<double> f32s(std::size_t n, const char* what) {
    if (remaining() / 4 < n) {
      throw IndexFormatError(IndexFormatFault::truncated,
                             std::string("payload ends while reading ") + what);
    }
    std::vector<double> out(n);
    for (auto& x : out) {
      const float f = std::bit_cast<float>(u32(what));
      if (!std::isfinite(f)) throw IndexFormatError(IndexFormatFault::malformed, std::string("non-finite value in ") + what);
      x = static_cast<double>(f);
    }
    return out;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large indexes.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(bytes.size() - offset, std::numeric_limits<uInt>::max()));
    crc = crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> serialize_index(const CentroidIndex& index) {
  if (index.size() > std::numeric_limits<std::uint32_t>::max() ||
      index.dim() > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError("index too large for the u32 header fields");
  }
  ByteWriter w;
  w.bytes(kIndexMagic, 4);
  w.u32(index.format_version());
  w.u32(static_cast<std::uint32_t>(index.dim()));
  w.u32(static_cast<std::uint32_t>(index.size()));
  w.f32s(std::vector<double>(index.global_mean().begin(), index.global_mean().end()));
  for (const auto& c : index.classes()) {
    if (c.label.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw DataError("label longer than 65535 bytes: " + c.label.substr(0, 32) + "...");
    }
    w.u16(static_cast<std::uint16_t>(c.label.size()));
    w.bytes(c.label.data(), c.label.size());
    w.u8(static_cast<std::uint8_t>(c.category));
    w.u32(c.sample_count);
    w.u8(c.degenerate ? 1 : 0);
    w.f32s(c.raw_centroid);
    w.f32s(c.processed);
  }
  const std::uint32_t crc = crc32_of(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

CentroidIndex parse_index(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kIndexMagic, 4) != 0) {
    throw IndexFormatError(IndexFormatFault::bad_magic, "expected \"HYMX\"");
  }
  r.take(4, "magic");
  const std::uint32_t version = r.u32("format_version");
  if (version != CentroidIndex::kFormatVersion) {
    throw IndexFormatError(IndexFormatFault::unsupported_version, "version " + std::to_string(version));
  }
  const std::uint32_t dim = r.u32("dim");
  const std::uint32_t count = r.u32("class_count");
  if (dim == 0) throw IndexFormatError(IndexFormatFault::malformed, "dim is zero");
  if (count == 0) throw IndexFormatError(IndexFormatFault::malformed, "class_count is zero");

  // Framing and checksum are verified before any field is interpreted, so a
  // flipped byte reports as a checksum mismatch rather than a bad field.
  {
    ByteReader walk = r;
    const std::size_t vec_bytes = 4 * static_cast<std::size_t>(dim);
    walk.take(vec_bytes, "global_mean");
    for (std::uint32_t k = 0; k < count; ++k) {
      const std::uint16_t len = walk.u16("label_len");
      walk.take(len, "label");
      walk.take(1 + 4 + 1, "class header");
      walk.take(2 * vec_bytes, "class vectors");
    }
    const std::size_t payload_end = walk.position();
    const std::uint32_t stored_crc = walk.u32("crc32");
    if (walk.remaining() != 0) {
      throw IndexFormatError(IndexFormatFault::malformed,
                             std::to_string(walk.remaining()) + " trailing bytes after checksum");
    }
    if (stored_crc != crc32_of(bytes.first(payload_end))) {
      throw IndexFormatError(IndexFormatFault::checksum_mismatch, "stored CRC32 does not match payload");
    }
  }

  auto mean = r.f32s(dim, "global_mean");
  std::vector<ClassCentroid> classes;
  classes.reserve(std::min<std::size_t>(count, r.remaining() / (8 + 8 * static_cast<std::size_t>(dim)) + 1));
  for (std::uint32_t k = 0; k < count; ++k) {
    ClassCentroid c;
    const std::uint16_t len = r.u16("label_len");
    auto label = r.take(len, "label");
    c.label.assign(reinterpret_cast<const char*>(label.data()), label.size());
    const std::uint8_t category = r.u8("category");
    if (category > 1) {
      throw IndexFormatError(IndexFormatFault::malformed, "category byte " + std::to_string(category));
    }
    c.category = static_cast<Category>(category);
    c.sample_count = r.u32("sample_count");
    const std::uint8_t flag = r.u8("degenerate_flag");
    if (flag > 1) throw IndexFormatError(IndexFormatFault::malformed, "degenerate flag " + std::to_string(flag));
    c.degenerate = flag == 1;
    c.raw_centroid = r.f32s(dim, "raw_centroid");
    c.processed = r.f32s(dim, "processed");
    classes.push_back(std::move(c));
  }

  try {
    return CentroidIndex::from_parts(dim, std::move(mean), std::move(classes), version);
  } catch (const IndexFormatError&) {
    throw;
  } catch (const DataError& e) {
    throw IndexFormatError(IndexFormatFault::malformed, e.what());
  }
}

void save_index(const CentroidIndex& index, std::ostream& out) {
  const auto bytes = serialize_index(index);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing index stream");
}

CentroidIndex load_index(std::istream& in) {
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw IoError("failed reading index stream");
  return parse_index(bytes);
}

void save_index(const CentroidIndex& index, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    save_index(index, out);
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

CentroidIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open index file " + path.string());
  return load_index(in);
}

IndexBuilder read_build_jsonl(std::istream& in) {
  IndexBuilder builder;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto row = nlohmann::json::parse(line);
      if (!row.is_object()) throw DataError("expected a JSON object");
      if (!row.contains("label") || !row["label"].is_string()) throw DataError("missing string field \"label\"");
      if (!row.contains("category") || !row["category"].is_string()) {
        throw DataError("missing string field \"category\"");
      }
      if (!row.contains("embedding") || !row["embedding"].is_array()) {
        throw DataError("missing array field \"embedding\"");
      }
      const auto category = parse_category(row["category"].get<std::string>());
      if (!category || *category == Category::other) {
        throw DataError("category must be \"animal\" or \"plant\"");
      }
      std::vector<double> values;
      values.reserve(row["embedding"].size());
      for (const auto& v : row["embedding"]) {
        if (!v.is_number()) throw DataError("embedding entries must be numbers");
        values.push_back(v.get<double>());
      }
      builder.accumulate(row["label"].get<std::string>(), *category, values);
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(line_no, e.what());
    } catch (const ManifestError&) {
      throw;
    } catch (const DataError& e) {
      throw ManifestError(line_no, e.what());
    }
  }
  if (in.bad()) throw IoError("failed reading build input");
  return builder;
}

IndexBuilder read_build_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open build input " + path.string());
  return read_build_jsonl(in);
}

}  // namespace hymor
