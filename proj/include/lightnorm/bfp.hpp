#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lightnorm/minifloat.hpp"
#include "lightnorm/tensor.hpp"

namespace lightnorm {

/// Sign plus mantissa aligned to the block's shared exponent. The magnitude
/// is an integer in units of 2^(shared_exponent - m), so it spans m + 1 bits.
struct BfpPayload {
  bool negative = false;
  std::uint64_t magnitude = 0;

  friend bool operator==(const BfpPayload&, const BfpPayload&) = default;
};

/// One exponent-sharing group. `payloads` always holds `group_size` entries;
/// only the first `count` are real data, the rest are zero padding.
struct BfpBlock {
  int shared_exponent = 0;
  std::vector<BfpPayload> payloads;
  std::size_t count = 0;
  FpFormat format;
  std::size_t group_size = 1;
};

/// floor(log2 max|x|) over the nonzero values, the format's emin for an
/// all-zero block, clamped to [emin, emax]. Throws DomainError when empty.
int shared_exponent(std::span<const double> xs, const FpFormat& fmt);

/// Aligns every element to the shared exponent with round-to-nearest-even
/// on the shifted-out bits. Elements whose exponent trails the shared one by
/// more than m + 1 encode as zero.
BfpBlock encode_block(std::span<const double> xs, const FpFormat& fmt, std::size_t group_size);

std::vector<double> decode_block(const BfpBlock& block);

/// Storage cost of n elements grouped by k: n * (1 + m) + ceil(n / k) * e.
std::uint64_t bfp_bit_size(std::uint64_t n, const FpFormat& fmt, std::size_t group_size);

/// A tensor stored as exponent-sharing blocks. Blocks never straddle a
/// channel: each channel stream (see ChannelLayout) is cut into groups of k
/// and a ragged tail is zero padded. Blocks are ordered channel-major.
struct BfpTensor {
  std::vector<std::size_t> shape;
  FpFormat format;
  std::size_t group_size = 1;
  std::vector<BfpBlock> blocks;

  [[nodiscard]] std::size_t element_count() const;
  /// Payload bits for every element plus one shared exponent per block.
  [[nodiscard]] std::uint64_t total_bits() const;
};

BfpTensor pack_tensor(const Tensor& t, const FpFormat& fmt, std::size_t group_size);
Tensor unpack_tensor(const BfpTensor& bt);

/// unpack_tensor(pack_tensor(t, fmt, k)).
Tensor bfp_round_trip(const Tensor& t, const FpFormat& fmt, std::size_t group_size);

/// Container: "LNBF" magic, version, e, m, rank, dims, k, element count,
/// block count (all little-endian), then an LSB-first bit stream holding for
/// each block the biased shared exponent (e bits) followed by k payloads of
/// 1 sign bit and m + 1 magnitude bits.
std::vector<std::uint8_t> serialize(const BfpTensor& bt);
BfpTensor deserialize(std::span<const std::uint8_t> bytes);

}  // namespace lightnorm
