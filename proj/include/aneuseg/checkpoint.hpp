#pragma once

#include <cstdint>
#include <filesystem>

#include "aneuseg/patch_plan.hpp"
#include "aneuseg/preprocess.hpp"
#include "aneuseg/unet.hpp"

namespace aneuseg {

/// Everything needed to run a trained network on new images.
///
/// File layout (all integers little-endian):
///   bytes 0..7    magic "ANSGCKPT"
///   uint32        format version (1)
///   uint64        header length N
///   N bytes       UTF-8 JSON header: net config, patch size, preprocess
///                 config, seed, epoch, fold, and the tensor list
///                 [{name, shape: [rows, cols]}] in declaration order
///   payload       each tensor as row-major float32, in header order
struct Checkpoint {
    UNetConfig net;
    Index3 patch_size = Index3(32, 32, 32);
    PreprocessConfig preprocess;
    std::uint64_t seed = 0;
    int epoch = 0;
    int fold = -1;
    NetParams<float> params;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace aneuseg
