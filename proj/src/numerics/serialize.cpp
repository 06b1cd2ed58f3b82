#include "cacl/numerics/serialize.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace cacl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr const char* kFormat = "cacl-params-v1";

void put_le(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}
}  // namespace

json parameter_manifest(const ParameterSet& params) {
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& item : params) {
    tensors.push_back({{"name", item.name},
                       {"shape", item.tensor.shape()},
                       {"offset", offset},
                       {"count", item.tensor.size()}});
    offset += 8 * item.tensor.size();
  }
  return {{"format", kFormat}, {"total_bytes", offset}, {"tensors", tensors}};
}

std::vector<unsigned char> encode_parameters(const ParameterSet& params) {
  std::vector<unsigned char> out;
  out.reserve(8 * params.numel());
  for (const auto& item : params) {
    for (double v : item.tensor.data()) put_le(out, v);
  }
  return out;
}

void decode_parameters(const json& manifest, const std::vector<unsigned char>& bytes,
                       const ParameterSet& params) {
  if (manifest.value("format", "") != kFormat) {
    throw std::runtime_error("parameter manifest: unknown format");
  }
  if (manifest.at("total_bytes").get<std::size_t>() != bytes.size()) {
    throw std::runtime_error("parameter file size does not match manifest");
  }
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size()) {
    throw std::runtime_error("parameter manifest lists " + std::to_string(tensors.size()) +
                             " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = tensors[i];
    const auto& item = params[i];
    if (entry.at("name").get<std::string>() != item.name ||
        entry.at("shape").get<Shape>() != item.tensor.shape()) {
      throw std::runtime_error("parameter manifest mismatch at " + item.name);
    }
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = entry.at("count").get<std::size_t>();
    if (count != item.tensor.size() || offset + 8 * count > bytes.size()) {
      throw std::runtime_error("parameter manifest: bad extent for " + item.name);
    }
    auto dst = item.tensor.impl()->value.data();
    for (std::size_t k = 0; k < count; ++k) dst[k] = get_le(bytes.data() + offset + 8 * k);
  }
}

void save_parameters(const fs::path& dir, const ParameterSet& params, const json& meta) {
  fs::create_directories(dir);
  json manifest = parameter_manifest(params);
  manifest["meta"] = meta;
  const auto bytes = encode_parameters(params);
  {
    std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
    bin.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!bin) throw std::runtime_error("cannot write " + (dir / "params.bin").string());
  }
  std::ofstream js(dir / "manifest.json", std::ios::trunc);
  js << manifest.dump(2) << '\n';
  if (!js) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
}

json read_manifest(const fs::path& dir) {
  std::ifstream js(dir / "manifest.json");
  if (!js) throw std::runtime_error("missing " + (dir / "manifest.json").string());
  return json::parse(js);
}

json load_parameters(const fs::path& dir, const ParameterSet& params) {
  const json manifest = read_manifest(dir);
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("missing " + (dir / "params.bin").string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)),
                                   std::istreambuf_iterator<char>());
  decode_parameters(manifest, bytes, params);
  return manifest.value("meta", json::object());
}

}  // namespace cacl
