#pragma once

#include <cstdint>
#include <filesystem>

#include "aneuseg/volume.hpp"

namespace aneuseg::nifti {

/// NIfTI-1 datatype codes handled by this reader/writer.
enum class DataType : std::int16_t {
    UInt8 = 2,
    Int16 = 4,
    Float32 = 16,
};

inline constexpr int kHeaderSize = 348;
inline constexpr int kVoxOffset = 352;

/// Reads a single-file NIfTI-1 image (.nii, optionally gzip-compressed,
/// detected by magic bytes). Only 3D, axis-aligned grids are accepted.
Volume3 read_volume(const std::filesystem::path& path);

/// Same as read_volume but validates that every voxel is 0 or 1.
LabelMask read_mask(const std::filesystem::path& path);

/// Writes `vol` as NIfTI-1. A ".gz" suffix selects gzip compression.
/// Integer datatypes require every voxel to be integral and in range.
void write(const Volume3& vol, const std::filesystem::path& path, DataType type = DataType::Float32);

/// Masks are always written as unsigned 8-bit.
void write(const LabelMask& mask, const std::filesystem::path& path);

}  // namespace aneuseg::nifti
