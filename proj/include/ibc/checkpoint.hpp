#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ibc/energy_model.hpp"
#include "ibc/tensor.hpp"

namespace ibc::model {

// Flat, versioned binary layout shared by all parameter checkpoints:
// 8-byte magic string, u32 format version, u32 layer count, then per layer
// a u32 rank, u64 extents, and row-major 64-bit little-endian data.
inline constexpr std::string_view kEnergyMagic = "IBCEBM1\n";
inline constexpr std::string_view kExplicitMseMagic = "IBCXPM1\n";
inline constexpr std::string_view kExplicitGaussMagic = "IBCXPG1\n";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorFile {
  std::string magic;
  std::uint32_t version = 0;
  std::vector<ad::Tensor> tensors;
};

void write_tensor_file(const std::filesystem::path& path, std::string_view magic,
                       std::span<const ad::Tensor> tensors);
TensorFile read_tensor_file(const std::filesystem::path& path);

/// Magic string of a checkpoint on disk (first 8 bytes).
std::string peek_magic(const std::filesystem::path& path);

void save_energy_checkpoint(const std::filesystem::path& path, const EnergyParams& p);
EnergyParams load_energy_checkpoint(const std::filesystem::path& path);

}  // namespace ibc::model
