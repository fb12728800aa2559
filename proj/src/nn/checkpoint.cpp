#include "vmdnet/nn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "vmdnet/error.hpp"

namespace vmdnet::nn {

namespace {

constexpr char kMagic[8] = {'V', 'M', 'D', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end, const std::string& path) : buf_(buf), end_(end), path_(path) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) {
    if (end_ - pos_ < n) fail(ErrorCode::CacheCorrupt, "checkpoint " + path_ + " is truncated");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  const std::string& path_;
};

std::uint32_t crc_of(const std::string& buf, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(n)));
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store, const std::string& metadata) {
  std::string buf(kMagic, sizeof(kMagic));
  put<std::uint32_t>(buf, kVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& [name, p] : store.entries()) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape) put<std::uint64_t>(buf, d);
    for (double v : p.value.data) put<double>(buf, v);
  }
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(metadata.size()));
  buf += metadata;
  put<std::uint32_t>(buf, crc_of(buf, buf.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write checkpoint " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(ErrorCode::Io, "write failed for checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::Io, "cannot move checkpoint into place at " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open checkpoint " + path);
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 16 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    fail(ErrorCode::CacheCorrupt, path + " is not a checkpoint file");
  const std::size_t body = buf.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + body, 4);
  if (stored != crc_of(buf, body)) fail(ErrorCode::CacheCorrupt, "checkpoint " + path + " fails its checksum");

  Reader r(buf, body, path);
  r.bytes(sizeof(kMagic));
  if (const auto version = r.get<std::uint32_t>(); version != kVersion)
    fail(ErrorCode::CacheCorrupt, "checkpoint " + path + " has unsupported version " + std::to_string(version));
  Checkpoint ck;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::string name = r.bytes(r.get<std::uint32_t>());
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = r.get<std::uint64_t>();
    Tensor t(shape);
    for (double& v : t.data) v = r.get<double>();
    ck.params.add(name, std::move(t));
  }
  ck.metadata = r.bytes(r.get<std::uint32_t>());
  if (!r.done()) fail(ErrorCode::CacheCorrupt, "checkpoint " + path + " has trailing bytes");
  return ck;
}

void assign_parameters(ParamStore& dst, const ParamStore& src) {
  if (dst.entries().size() != src.entries().size())
    fail(ErrorCode::ShapeMismatch, "parameter sets differ in size: " + std::to_string(dst.entries().size()) +
                                       " vs " + std::to_string(src.entries().size()));
  for (auto& [name, p] : dst.entries()) {
    if (!src.contains(name)) fail(ErrorCode::ShapeMismatch, "missing parameter " + name);
    const Tensor& v = src.at(name).value;
    if (v.shape != p.value.shape)
      fail(ErrorCode::ShapeMismatch, "parameter " + name + " has shape " + shape_string(v.shape) + ", expected " +
                                         shape_string(p.value.shape));
    p.value.data = v.data;
  }
}

}  // namespace vmdnet::nn
