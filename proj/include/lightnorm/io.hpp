#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lightnorm/bfp.hpp"
#include "lightnorm/tensor.hpp"

namespace lightnorm {

/// Raw little-endian float32 data at `path` with its shape in the sidecar
/// `path + ".json"` ({"dtype": "float32", "shape": [...]}). Values are
/// narrowed to single precision on write.
void write_tensor(const std::string& path, const Tensor& t);
/// Throws IoError for a missing/malformed sidecar or a size mismatch.
Tensor read_tensor(const std::string& path);

void write_bfp(const std::string& path, const BfpTensor& t);
BfpTensor read_bfp(const std::string& path);

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::string& path, const std::string& text);
std::vector<std::uint8_t> read_bytes(const std::string& path);

}  // namespace lightnorm
