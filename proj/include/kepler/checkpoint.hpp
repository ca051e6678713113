#pragma once
// Self-describing binary parameter container:
//   "KEPF" | u32 version | u32 meta_len | meta (JSON, canonical dump)
//   | u32 n_params | per param: u32 name_len, name, u32 rank, u32 dims[rank],
//     raw little-endian f32 values
// Parameter storage is f32-exact (ParameterSet::quantize_storage), so the
// round trip is lossless and save -> load -> save is byte-identical.

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "kepler/tape.hpp"

namespace kepler {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::string& path, const ParameterSet& params,
                     const nlohmann::json& meta);

// Replaces out with the stored parameters (grads and optimizer state zeroed)
// and returns the meta block. Throws CheckpointError on bad magic, version
// mismatch, or truncation; out is untouched on failure.
nlohmann::json load_checkpoint(const std::string& path, ParameterSet& out);

} // namespace kepler
