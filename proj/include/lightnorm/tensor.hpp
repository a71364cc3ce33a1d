#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lightnorm {

/// Dense row-major tensor of reals. Rank-1 tensors are a single channel;
/// for rank >= 2 the channel axis is dimension 1 (B, C, H, W or B, C).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> data);

  [[nodiscard]] std::size_t size() const { return data.size(); }
};

std::size_t element_count(std::span<const std::size_t> shape);

/// Maps a tensor onto per-channel streams. A channel's stream visits the
/// batch index first, then the spatial raster; element (b, c, i) lives at
/// (b * channels + c) * inner + i.
class ChannelLayout {
 public:
  explicit ChannelLayout(std::span<const std::size_t> shape);

  [[nodiscard]] std::size_t channels() const { return channels_; }
  [[nodiscard]] std::size_t per_channel() const { return outer_ * inner_; }
  [[nodiscard]] std::size_t batch() const { return outer_; }

  /// Flat index of the j-th element in channel c's stream.
  [[nodiscard]] std::size_t index(std::size_t c, std::size_t j) const {
    const std::size_t b = j / inner_;
    return (b * channels_ + c) * inner_ + (j % inner_);
  }

  [[nodiscard]] std::vector<double> gather(const Tensor& t, std::size_t c) const;
  void scatter(Tensor& t, std::size_t c, std::span<const double> values) const;

 private:
  std::size_t outer_ = 1;
  std::size_t channels_ = 1;
  std::size_t inner_ = 0;
};

}  // namespace lightnorm
