// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container, all integers and floats little-endian:
//   "STPOTRC1"                      8-byte magic
//   u32 version (= 1)
//   u64 n, n bytes                  ModelConfig as JSON
//   u64 tensor count
//   per tensor:
//     u32 n, n bytes                parameter name
//     u32 rank, rank x u64          shape
//     prod(shape) x f64             values, row-major
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stpotr/model.hpp"

namespace stpotr {

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<CheckpointTensor> tensors;
};

Checkpoint snapshot(const StpotrModel& model);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const StpotrModel& model);

/// Builds a model from the stored config and copies the stored values in.
/// Throws DataError naming missing, unexpected or mis-shaped parameters.
StpotrModel load_checkpoint(const std::filesystem::path& path);
void restore_parameters(StpotrModel& model, const Checkpoint& ckpt);

}  // namespace stpotr
