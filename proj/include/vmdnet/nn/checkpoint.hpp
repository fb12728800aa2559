#pragma once

#include <string>

#include "vmdnet/nn/tensor.hpp"

namespace vmdnet::nn {

/// Little-endian file: "VMDNCKPT", u32 version, u32 parameter count, then per
/// parameter (u32 name length, name, u32 rank, u64 dims, f64 values), then
/// u32 metadata length and metadata bytes, then the CRC-32 of everything
/// before it as u32. Optimizer moments are not stored.
void save_checkpoint(const std::string& path, const ParamStore& store, const std::string& metadata);

struct Checkpoint {
  ParamStore params;
  std::string metadata;
};

/// Throws Io if unreadable and CacheCorrupt on bad magic, version or checksum.
Checkpoint load_checkpoint(const std::string& path);

/// Copies values from `src` into `dst`; names and shapes must match exactly.
void assign_parameters(ParamStore& dst, const ParamStore& src);

}  // namespace vmdnet::nn
