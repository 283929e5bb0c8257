#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "mebart/sampler.hpp"

namespace mebart {

/// Binary draw container, little-endian native doubles:
///   "MEBDRAWS" | u32 version | metadata | scaler | grid | named blocks
/// Numeric blocks are stored column-major with their shape; tree ensembles
/// are stored as flattened node records.
inline constexpr std::uint32_t draws_format_version = 1;

void write_draws(std::ostream& out, const PosteriorDraws& draws);
PosteriorDraws read_draws(std::istream& in, const std::string& source);

/// Writes `path` and `path + ".json"` (sidecar with config, hash, seed and
/// provenance). Timestamps appear only in the sidecar.
void save_draws(const std::string& path, const PosteriorDraws& draws, const nlohmann::json& sidecar);
PosteriorDraws load_draws(const std::string& path);
nlohmann::json load_sidecar(const std::string& draws_path);

}  // namespace mebart
