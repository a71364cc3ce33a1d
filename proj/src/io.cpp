#include "lightnorm/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "lightnorm/error.hpp"

namespace lightnorm {

static_assert(std::endian::native == std::endian::little, "tensor files are little-endian");

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

void write_text(const std::string& path, const std::string& text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_tensor(const std::string& path, const Tensor& t) {
  if (element_count(t.shape) != t.size()) throw ShapeError("tensor shape/data mismatch");
  std::vector<std::uint8_t> bytes(t.size() * sizeof(float));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const float f = static_cast<float>(t.data[i]);
    std::memcpy(bytes.data() + i * sizeof(float), &f, sizeof(float));
  }
  write_bytes(path, bytes);
  const nlohmann::json side = {{"dtype", "float32"}, {"shape", t.shape}};
  write_text(path + ".json", side.dump() + "\n");
}

Tensor read_tensor(const std::string& path) {
  std::vector<std::size_t> shape;
  try {
    const auto side_bytes = read_bytes(path + ".json");
    const auto side = nlohmann::json::parse(side_bytes.begin(), side_bytes.end());
    if (side.value("dtype", std::string("float32")) != "float32") {
      throw IoError(path + ".json: only float32 tensors are supported");
    }
    shape = side.at("shape").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ".json: " + e.what());
  }
  const auto bytes = read_bytes(path);
  const std::size_t n = element_count(shape);
  if (bytes.size() != n * sizeof(float)) {
    throw IoError(path + ": holds " + std::to_string(bytes.size()) + " bytes, shape needs " +
                  std::to_string(n * sizeof(float)));
  }
  Tensor t = Tensor::zeros(shape);
  for (std::size_t i = 0; i < n; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
    t.data[i] = f;
  }
  return t;
}

void write_bfp(const std::string& path, const BfpTensor& t) { write_bytes(path, serialize(t)); }

BfpTensor read_bfp(const std::string& path) { return deserialize(read_bytes(path)); }

}  // namespace lightnorm
