#include "lightnorm/bfp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "lightnorm/error.hpp"

namespace lightnorm {

namespace {

constexpr char kMagic[4] = {'L', 'N', 'B', 'F'};
constexpr std::uint8_t kVersion = 1;

class BitWriter {
 public:
  void put(std::uint64_t value, int bits) {
    for (int i = 0; i < bits; ++i) {
      if (fill_ == 0) bytes_.push_back(0);
      if ((value >> i) & 1u) bytes_.back() |= static_cast<std::uint8_t>(1u << fill_);
      fill_ = (fill_ + 1) % 8;
    }
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  int fill_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint64_t get(int bits) {
    std::uint64_t value = 0;
    for (int i = 0; i < bits; ++i, ++pos_) {
      if (pos_ / 8 >= bytes_.size()) throw IoError("bfp container: truncated bit stream");
      if ((bytes_[pos_ / 8] >> (pos_ % 8)) & 1u) value |= std::uint64_t{1} << i;
    }
    return value;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("bfp container: truncated header");
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= std::uint64_t{in[pos + i]} << (8 * i);
  pos += sizeof(T);
  return static_cast<T>(value);
}

std::size_t blocks_per_channel(std::size_t per_channel, std::size_t k) {
  return (per_channel + k - 1) / k;
}

}  // namespace

int shared_exponent(std::span<const double> xs, const FpFormat& fmt) {
  if (xs.empty()) throw DomainError("shared_exponent: empty block");
  double peak = 0.0;
  for (double x : xs) peak = std::max(peak, std::fabs(x));
  if (peak == 0.0) return fmt.emin();
  return std::clamp(exponent_of(peak), fmt.emin(), fmt.emax());
}

BfpBlock encode_block(std::span<const double> xs, const FpFormat& fmt, std::size_t group_size) {
  if (group_size == 0) throw DomainError("encode_block: group size must be >= 1");
  if (xs.size() > group_size) {
    throw ShapeError("encode_block: " + std::to_string(xs.size()) +
                     " values exceed group size " + std::to_string(group_size));
  }
  for (double x : xs) {
    if (!is_representable(x, fmt)) {
      throw FormatError("encode_block: value " + std::to_string(x) + " is not representable in " +
                        fmt.label());
    }
  }

  BfpBlock block;
  block.format = fmt;
  block.group_size = group_size;
  block.count = xs.size();
  block.payloads.resize(group_size);
  if (xs.empty()) {
    block.shared_exponent = fmt.emin();
    return block;
  }
  block.shared_exponent = shared_exponent(xs, fmt);
  const int scale = fmt.mantissa_bits - block.shared_exponent;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double aligned = std::nearbyint(std::ldexp(std::fabs(xs[i]), scale));
    block.payloads[i] = {std::signbit(xs[i]) && aligned != 0.0,
                         static_cast<std::uint64_t>(aligned)};
  }
  return block;
}

std::vector<double> decode_block(const BfpBlock& block) {
  std::vector<double> out(block.count);
  const int scale = block.shared_exponent - block.format.mantissa_bits;
  for (std::size_t i = 0; i < block.count; ++i) {
    const auto& p = block.payloads[i];
    const double magnitude = std::ldexp(static_cast<double>(p.magnitude), scale);
    out[i] = p.negative ? -magnitude : magnitude;
  }
  return out;
}

std::uint64_t bfp_bit_size(std::uint64_t n, const FpFormat& fmt, std::size_t group_size) {
  if (group_size == 0) throw DomainError("bfp_bit_size: group size must be >= 1");
  const std::uint64_t k = group_size;
  return n * static_cast<std::uint64_t>(1 + fmt.mantissa_bits) +
         (n + k - 1) / k * static_cast<std::uint64_t>(fmt.exponent_bits);
}

std::size_t BfpTensor::element_count() const { return lightnorm::element_count(shape); }

std::uint64_t BfpTensor::total_bits() const {
  return static_cast<std::uint64_t>(element_count()) * (1 + format.mantissa_bits) +
         static_cast<std::uint64_t>(blocks.size()) * format.exponent_bits;
}

BfpTensor pack_tensor(const Tensor& t, const FpFormat& fmt, std::size_t group_size) {
  if (group_size == 0) throw DomainError("pack_tensor: group size must be >= 1");
  if (element_count(t.shape) != t.size()) throw ShapeError("pack_tensor: shape/data mismatch");
  BfpTensor out{t.shape, fmt, group_size, {}};
  if (t.size() == 0) return out;

  const ChannelLayout layout(t.shape);
  out.blocks.reserve(layout.channels() * blocks_per_channel(layout.per_channel(), group_size));
  for (std::size_t c = 0; c < layout.channels(); ++c) {
    const std::vector<double> stream = layout.gather(t, c);
    for (std::size_t start = 0; start < stream.size(); start += group_size) {
      const std::size_t len = std::min(group_size, stream.size() - start);
      out.blocks.push_back(encode_block(std::span(stream).subspan(start, len), fmt, group_size));
    }
  }
  return out;
}

Tensor unpack_tensor(const BfpTensor& bt) {
  Tensor out = Tensor::zeros(bt.shape);
  if (out.size() == 0) {
    if (!bt.blocks.empty()) throw ShapeError("unpack_tensor: blocks present for an empty shape");
    return out;
  }
  const ChannelLayout layout(bt.shape);
  const std::size_t per_channel = layout.per_channel();
  const std::size_t expected = layout.channels() * blocks_per_channel(per_channel, bt.group_size);
  if (bt.blocks.size() != expected) {
    throw ShapeError("unpack_tensor: expected " + std::to_string(expected) + " blocks, found " +
                     std::to_string(bt.blocks.size()));
  }

  std::size_t next = 0;
  for (std::size_t c = 0; c < layout.channels(); ++c) {
    std::vector<double> stream;
    stream.reserve(per_channel);
    while (stream.size() < per_channel) {
      const BfpBlock& block = bt.blocks[next++];
      const std::size_t want = std::min(bt.group_size, per_channel - stream.size());
      if (block.count != want) throw ShapeError("unpack_tensor: block element count mismatch");
      for (double v : decode_block(block)) stream.push_back(v);
    }
    layout.scatter(out, c, stream);
  }
  return out;
}

Tensor bfp_round_trip(const Tensor& t, const FpFormat& fmt, std::size_t group_size) {
  return unpack_tensor(pack_tensor(t, fmt, group_size));
}

std::vector<std::uint8_t> serialize(const BfpTensor& bt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint8_t>(out, kVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(bt.format.exponent_bits));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(bt.format.mantissa_bits));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(bt.shape.size()));
  for (std::size_t d : bt.shape) put_le<std::uint64_t>(out, d);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bt.group_size));
  put_le<std::uint64_t>(out, bt.element_count());
  put_le<std::uint64_t>(out, bt.blocks.size());

  const int e = bt.format.exponent_bits;
  const int m = bt.format.mantissa_bits;
  const int bias = bt.format.bias();
  BitWriter bits;
  for (const BfpBlock& block : bt.blocks) {
    bits.put(static_cast<std::uint64_t>(block.shared_exponent + bias), e);
    for (const BfpPayload& p : block.payloads) {
      bits.put(p.negative ? 1u : 0u, 1);
      bits.put(p.magnitude, m + 1);
    }
  }
  const std::vector<std::uint8_t> stream = bits.take();
  out.insert(out.end(), stream.begin(), stream.end());
  return out;
}

BfpTensor deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("bfp container: bad magic");
  }
  std::size_t pos = sizeof(kMagic);
  if (get_le<std::uint8_t>(bytes, pos) != kVersion) throw IoError("bfp container: bad version");
  const int e = get_le<std::uint8_t>(bytes, pos);
  const int m = get_le<std::uint8_t>(bytes, pos);
  const std::size_t rank = get_le<std::uint8_t>(bytes, pos);

  BfpTensor bt;
  bt.format = FpFormat::make(e, m);
  for (const FpFormat& preset : format_catalog()) {
    if (preset == bt.format) bt.format.name = preset.name;
  }
  for (std::size_t i = 0; i < rank; ++i) bt.shape.push_back(get_le<std::uint64_t>(bytes, pos));
  bt.group_size = get_le<std::uint32_t>(bytes, pos);
  const auto count = get_le<std::uint64_t>(bytes, pos);
  const auto block_count = get_le<std::uint64_t>(bytes, pos);
  if (bt.group_size == 0) throw IoError("bfp container: zero group size");
  if (count != bt.element_count()) throw ShapeError("bfp container: element count mismatch");

  std::size_t expected_blocks = 0;
  std::size_t per_channel = 0;
  if (count > 0) {
    const ChannelLayout layout(bt.shape);
    per_channel = layout.per_channel();
    expected_blocks = layout.channels() * blocks_per_channel(per_channel, bt.group_size);
  }
  if (block_count != expected_blocks) throw ShapeError("bfp container: block count mismatch");

  BitReader bits(bytes.subspan(pos));
  const int bias = bt.format.bias();
  const std::size_t per_channel_blocks =
      per_channel == 0 ? 1 : blocks_per_channel(per_channel, bt.group_size);
  bt.blocks.reserve(block_count);
  for (std::size_t b = 0; b < block_count; ++b) {
    BfpBlock block;
    block.format = bt.format;
    block.group_size = bt.group_size;
    const std::size_t index_in_channel = b % per_channel_blocks;
    block.count = std::min(bt.group_size, per_channel - index_in_channel * bt.group_size);
    block.shared_exponent = static_cast<int>(bits.get(e)) - bias;
    block.payloads.resize(bt.group_size);
    for (BfpPayload& p : block.payloads) {
      p.negative = bits.get(1) != 0;
      p.magnitude = bits.get(m + 1);
    }
    bt.blocks.push_back(std::move(block));
  }
  return bt;
}

}  // namespace lightnorm
