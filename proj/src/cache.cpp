#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vmdnet/error.hpp"
#include "vmdnet/rng.hpp"
#include "vmdnet/windowing.hpp"

namespace vmdnet::windowing {
namespace {

constexpr char kMagic[8] = {'V', 'M', 'D', 'N', 'C', 'A', 'C', 'H'};
constexpr std::size_t kHeaderSize = 64;

template <typename T>
void put_le(std::string& buf, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

std::uint32_t crc(const std::string& bytes, std::size_t offset) {
  uLong c = crc32(0L, Z_NULL, 0);
  const auto* data = reinterpret_cast<const Bytef*>(bytes.data() + offset);
  std::size_t remaining = bytes.size() - offset;
  while (remaining > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(remaining, 1u << 30));
    c = crc32(c, data, chunk);
    data += chunk;
    remaining -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

void fill_reconstruction_error(const WindowedDataset& windows, DecomposedDataset& ds) {
  ds.reconstruction_error.assign(ds.batch, 0.0);
  for (std::size_t b = 0; b < ds.batch; ++b) {
    const auto x = windows.input(b);
    const auto u = ds.modes_of(b);
    double err = 0.0;
    double ref = 0.0;
    for (std::size_t t = 0; t < ds.lookback; ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k < ds.modes; ++k) s += u[k * ds.lookback + t];
      err += (x[t] - s) * (x[t] - s);
      ref += x[t] * x[t];
    }
    ds.reconstruction_error[b] = ref > 0.0 ? std::sqrt(err / ref) : std::sqrt(err);
  }
}

}  // namespace

void write_cache(const std::filesystem::path& path, const DecomposedDataset& ds) {
  std::string buf;
  buf.reserve(kHeaderSize + 8 * (ds.U.size() + ds.omega.size() + ds.targets.size()));
  buf.append(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(buf, kCacheVersion);
  put_le<std::uint32_t>(buf, 0);
  put_le<std::uint64_t>(buf, ds.batch);
  put_le<std::uint64_t>(buf, ds.modes);
  put_le<std::uint64_t>(buf, ds.lookback);
  put_le<std::uint64_t>(buf, ds.horizon);
  put_le<double>(buf, ds.vmd.alpha);
  put_le<std::uint64_t>(buf, 0);  // checksum, patched below
  for (double v : ds.U) put_le(buf, v);
  for (double v : ds.omega) put_le(buf, v);
  for (double v : ds.targets) put_le(buf, v);
  const std::uint64_t sum = crc(buf, kHeaderSize);
  std::string patch;
  put_le<std::uint64_t>(patch, sum);
  std::memcpy(buf.data() + 56, patch.data(), 8);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CacheHeader read_cache(const std::filesystem::path& path, DecomposedDataset& ds) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < kHeaderSize || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    fail(ErrorCode::CacheCorrupt, path.string() + " is not a decomposition cache");
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (get_le<std::uint32_t>(p + 8) != kCacheVersion)
    fail(ErrorCode::CacheCorrupt, path.string() + " has an unsupported version");
  CacheHeader h;
  h.batch = get_le<std::uint64_t>(p + 16);
  h.modes = get_le<std::uint64_t>(p + 24);
  h.lookback = get_le<std::uint64_t>(p + 32);
  h.horizon = get_le<std::uint64_t>(p + 40);
  h.alpha = get_le<double>(p + 48);
  h.checksum = get_le<std::uint64_t>(p + 56);
  const std::uint64_t n_u = h.batch * h.modes * h.lookback;
  const std::uint64_t n_w = h.batch * h.modes;
  const std::uint64_t n_y = h.batch * h.horizon;
  if (buf.size() != kHeaderSize + 8 * (n_u + n_w + n_y))
    fail(ErrorCode::CacheCorrupt, path.string() + " has a size inconsistent with its header");
  if (crc(buf, kHeaderSize) != h.checksum) fail(ErrorCode::CacheCorrupt, path.string() + " fails its checksum");

  ds.batch = h.batch;
  ds.modes = h.modes;
  ds.lookback = h.lookback;
  ds.horizon = h.horizon;
  ds.vmd.alpha = h.alpha;
  ds.U.resize(n_u);
  ds.omega.resize(n_w);
  ds.targets.resize(n_y);
  const unsigned char* q = p + kHeaderSize;
  for (auto& v : ds.U) v = get_le<double>(q), q += 8;
  for (auto& v : ds.omega) v = get_le<double>(q), q += 8;
  for (auto& v : ds.targets) v = get_le<double>(q), q += 8;
  return h;
}

std::string cache_key(const WindowedDataset& ds, const vmd::VmdConfig& cfg) {
  std::ostringstream desc;
  desc << std::setprecision(17) << ds.spec.lookback << '/' << ds.spec.horizon << '/' << ds.spec.stride
       << '/' << ds.size() << '/' << cfg.num_modes << '/' << cfg.alpha << '/' << cfg.tau << '/'
       << cfg.tolerance << '/' << cfg.max_iterations << '/' << static_cast<int>(cfg.omega_init) << '/'
       << static_cast<int>(cfg.boundary) << '/' << cfg.rng_seed;
  std::string bytes = desc.str();
  const std::size_t header = bytes.size();
  bytes.append(reinterpret_cast<const char*>(ds.inputs.data()), ds.inputs.size() * sizeof(double));
  const std::uint64_t h = mix64((static_cast<std::uint64_t>(crc(bytes, 0)) << 32) ^ crc(bytes, header));
  std::ostringstream name;
  name << "vmd_P" << ds.spec.lookback << "_F" << ds.spec.horizon << "_K" << cfg.num_modes << "_a"
       << std::llround(cfg.alpha) << '_' << std::hex << std::setw(16) << std::setfill('0') << h << ".bin";
  return name.str();
}

bool load_or_decompose(const std::filesystem::path& path, const WindowedDataset& ds,
                       const vmd::VmdConfig& cfg, unsigned workers, DecomposedDataset& out) {
  if (std::filesystem::exists(path)) {
    try {
      DecomposedDataset cached;
      const auto h = read_cache(path, cached);
      if (h.batch == ds.size() && h.modes == static_cast<std::uint64_t>(cfg.num_modes) &&
          h.lookback == ds.spec.lookback && h.horizon == ds.spec.horizon && h.alpha == cfg.alpha &&
          cached.targets == ds.targets) {
        cached.vmd = cfg;
        cached.time_features = ds.time_features;
        cached.endpoints = ds.endpoints;
        fill_reconstruction_error(ds, cached);
        out = std::move(cached);
        return true;
      }
    } catch (const Error&) {
      // stale or damaged cache: rebuild below
    }
  }
  out = decompose_windows(ds, cfg, workers);
  write_cache(path, out);
  return false;
}

}  // namespace vmdnet::windowing
