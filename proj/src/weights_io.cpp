#include "qmamba/weights_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace qmamba {

static_assert(std::endian::native == std::endian::little, "QMBW I/O assumes a little-endian host");

namespace {

using json = nlohmann::json;

std::size_t dtype_size(DType d) { return d == DType::kF64 ? 8 : 4; }

}  // namespace

std::vector<std::uint8_t> encode_weights(const TensorMap& tensors, DType dtype) {
  json header = json::array();
  for (const auto& [name, t] : tensors)
    header.push_back({{"name", name}, {"dtype", dtype == DType::kF64 ? "f64" : "f32"}, {"shape", t.shape()}});
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kWeightsMagic), std::end(kWeightsMagic));
  out.push_back(kWeightsVersion);
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : tensors) {
    for (double v : t.data()) {
      std::uint8_t buf[8];
      if (dtype == DType::kF64) {
        std::memcpy(buf, &v, 8);
      } else {
        const auto f = static_cast<float>(v);
        std::memcpy(buf, &f, 4);
      }
      out.insert(out.end(), buf, buf + dtype_size(dtype));
    }
  }
  return out;
}

TensorMap decode_weights(std::span<const std::uint8_t> bytes, const std::vector<TensorSpec>* expected) {
  if (!bytes.empty() && std::memcmp(bytes.data(), kWeightsMagic, std::min<std::size_t>(4, bytes.size())) != 0)
    throw Error(ErrorCode::kHeader, "missing QMBW magic");
  if (bytes.size() < 9) throw Error(ErrorCode::kTruncated, "file ends inside the QMBW prelude");
  if (bytes[4] != kWeightsVersion)
    throw Error(ErrorCode::kHeader, "unsupported QMBW version " + std::to_string(bytes[4]));
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[5 + i]) << (8 * i);
  if (bytes.size() < 9 + static_cast<std::size_t>(len))
    throw Error(ErrorCode::kTruncated, "header length " + std::to_string(len) + " exceeds file size");

  json header;
  try {
    header = json::parse(bytes.begin() + 9, bytes.begin() + 9 + len);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kHeader, std::string("malformed JSON header: ") + e.what());
  }
  if (!header.is_array()) throw Error(ErrorCode::kHeader, "header is not a JSON array");

  struct Entry {
    std::string name;
    DType dtype;
    Shape shape;
  };
  std::vector<Entry> entries;
  for (const auto& item : header) {
    try {
      Entry e;
      e.name = item.at("name").get<std::string>();
      const auto d = item.at("dtype").get<std::string>();
      if (d == "f64") {
        e.dtype = DType::kF64;
      } else if (d == "f32") {
        e.dtype = DType::kF32;
      } else {
        throw Error(ErrorCode::kHeader, "tensor '" + e.name + "' has unknown dtype '" + d + "'");
      }
      e.shape = item.at("shape").get<Shape>();
      if (e.shape.empty()) throw Error(ErrorCode::kHeader, "tensor '" + e.name + "' has empty shape");
      for (auto dim : e.shape)
        if (dim == 0) throw Error(ErrorCode::kHeader, "tensor '" + e.name + "' has a zero dimension");
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kHeader, std::string("malformed header entry: ") + ex.what());
    }
  }

  if (expected) {
    if (entries.size() != expected->size())
      throw Error(ErrorCode::kHeader, "expected " + std::to_string(expected->size()) + " tensors, found " +
                                          std::to_string(entries.size()));
    for (const auto& spec : *expected) {
      const auto it = std::find_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.name == spec.name; });
      if (it == entries.end()) throw Error(ErrorCode::kWeightMismatch, "missing tensor '" + spec.name + "'");
      if (it->shape != spec.shape)
        throw Error(ErrorCode::kWeightMismatch, "tensor '" + spec.name + "' has shape " + shape_str(it->shape) +
                                                    ", expected " + shape_str(spec.shape));
    }
  }

  TensorMap out;
  std::size_t pos = 9 + len;
  for (const auto& e : entries) {
    const std::size_t n = shape_numel(e.shape);
    const std::size_t nbytes = n * dtype_size(e.dtype);
    if (bytes.size() - pos < nbytes)
      throw Error(ErrorCode::kTruncated, "tensor '" + e.name + "' needs " + std::to_string(nbytes) + " bytes, " +
                                             std::to_string(bytes.size() - pos) + " remain");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (e.dtype == DType::kF64) {
        std::memcpy(&data[i], bytes.data() + pos + 8 * i, 8);
      } else {
        float f;
        std::memcpy(&f, bytes.data() + pos + 4 * i, 4);
        data[i] = f;
      }
    }
    pos += nbytes;
    if (!out.emplace(e.name, Tensor(e.shape, std::move(data))).second)
      throw Error(ErrorCode::kHeader, "duplicate tensor name '" + e.name + "'");
  }
  if (pos != bytes.size())
    throw Error(ErrorCode::kHeader, std::to_string(bytes.size() - pos) + " trailing bytes after the last payload");
  return out;
}

void save_weights(const TensorMap& tensors, const std::filesystem::path& path, DType dtype) {
  const auto bytes = encode_weights(tensors, dtype);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

TensorMap load_weights(const std::filesystem::path& path, const std::vector<TensorSpec>* expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIo, "cannot open weights file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_weights(bytes, expected);
}

}  // namespace qmamba
