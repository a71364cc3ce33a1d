#include "lightnorm/tensor.hpp"

#include <functional>
#include <numeric>
#include <string>

#include "lightnorm/error.hpp"

namespace lightnorm {

std::size_t element_count(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  const std::size_t n = element_count(shape);
  return Tensor{std::move(shape), std::vector<double>(n, 0.0)};
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data) {
  if (element_count(shape) != data.size()) {
    throw ShapeError("tensor data holds " + std::to_string(data.size()) +
                     " values but the shape needs " + std::to_string(element_count(shape)));
  }
  return Tensor{std::move(shape), std::move(data)};
}

ChannelLayout::ChannelLayout(std::span<const std::size_t> shape) {
  if (shape.empty()) throw ShapeError("tensor must have rank >= 1");
  if (shape.size() == 1) {
    inner_ = shape[0];
    return;
  }
  outer_ = shape[0];
  channels_ = shape[1];
  inner_ = element_count(shape.subspan(2));
}

std::vector<double> ChannelLayout::gather(const Tensor& t, std::size_t c) const {
  std::vector<double> out(per_channel());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = t.data[index(c, j)];
  return out;
}

void ChannelLayout::scatter(Tensor& t, std::size_t c, std::span<const double> values) const {
  if (values.size() != per_channel()) throw ShapeError("scatter: channel length mismatch");
  for (std::size_t j = 0; j < values.size(); ++j) t.data[index(c, j)] = values[j];
}

}  // namespace lightnorm
