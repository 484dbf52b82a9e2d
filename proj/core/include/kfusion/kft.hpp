#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kfusion/tensor.hpp"

namespace kfusion::kft {

// "KFT1" tensor container: magic bytes KFT1, u32 rank, u32 dims
// (little-endian), then float32 payload, little-endian, row-major.
struct Array {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t numel() const;
};

void save(const std::filesystem::path& path, const Array& a);
Array load(const std::filesystem::path& path);

// Rank-3 convenience wrappers (values round through float32).
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path, bool requires_grad = false);

}  // namespace kfusion::kft
