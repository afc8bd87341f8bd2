#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "resfeat/tensor.hpp"

namespace resfeat {

// Binary layout (little-endian):
//   "RFT1" | u8 kind (0 = inference, 1 = training) | u32 json length | json
//   | u32 parameter count | per parameter:
//       u16 name length | name | u8 rank | u32 dims[rank] | f32 data[n]
//       training only: f32 adam_m[n] | f32 adam_v[n] | u64 step_count
struct Checkpoint {
  bool training = false;
  std::string config_json = "{}";
  std::vector<Parameter<float>> parameters;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace resfeat
