#ifndef CACL_NUMERICS_SERIALIZE_HPP_
#define CACL_NUMERICS_SERIALIZE_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cacl/numerics/layers.hpp"

namespace cacl {

// Parameter files: `params.bin` holds every tensor as consecutive
// little-endian IEEE-754 doubles; `manifest.json` maps names to shapes and
// byte offsets and carries free-form metadata under "meta".
//
//   {"format": "cacl-params-v1", "total_bytes": N,
//    "tensors": [{"name": ..., "shape": [...], "offset": B, "count": n}, ...],
//    "meta": {...}}

nlohmann::json parameter_manifest(const ParameterSet& params);
std::vector<unsigned char> encode_parameters(const ParameterSet& params);
// Writes values into `params` (names, shapes, offsets validated).
void decode_parameters(const nlohmann::json& manifest,
                       const std::vector<unsigned char>& bytes, const ParameterSet& params);

void save_parameters(const std::filesystem::path& dir, const ParameterSet& params,
                     const nlohmann::json& meta);
// Returns the "meta" object.
nlohmann::json load_parameters(const std::filesystem::path& dir, const ParameterSet& params);
nlohmann::json read_manifest(const std::filesystem::path& dir);

}  // namespace cacl

#endif  // CACL_NUMERICS_SERIALIZE_HPP_
