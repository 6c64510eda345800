#pragma once

#include <map>
#include <string>
#include <vector>

#include "adnet/tensor.hpp"

namespace adnet {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

// Serializable parameter bundle. Scalar settings (alpha, kappa, encoder
// geometry) ride along in meta so a checkpoint is self-describing.
struct CheckpointData {
  std::map<std::string, double> meta;
  std::vector<NamedTensor> tensors;
};

// Single-file format: 8-byte magic, little-endian u64 manifest length, JSON
// manifest (tensor names, shapes, payload offsets, meta), then concatenated
// f32le payloads. Writing is byte-deterministic for equal inputs.
void save_checkpoint(const CheckpointData& ckpt, const std::string& path);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace adnet
