#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xpcg/nn/tensor.hpp"

namespace xpcg::nn {

/// Versioned binary weight file: magic, architecture hash, then each tensor
/// as rank, extents and little-endian float32 values.
struct WeightFile {
  std::uint64_t spec_hash = 0;
  std::vector<Tensor<float>> tensors;
};

void save_weights(const std::string& path, std::uint64_t spec_hash, const std::vector<const Tensor<float>*>& tensors);

/// Throws SpecMismatch when the stored hash differs from `expected_hash`,
/// unless `allow_mismatch` (transfer loading).
WeightFile load_weights(const std::string& path, std::uint64_t expected_hash, bool allow_mismatch = false);

}  // namespace xpcg::nn
