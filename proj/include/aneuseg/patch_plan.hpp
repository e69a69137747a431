#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "aneuseg/volume.hpp"

namespace aneuseg {

/// Patch geometry for a U-Net with `num_resolutions` levels: each patch axis
/// is halved num_resolutions - 1 times and must stay >= min_bottleneck.
struct PatchSpec {
    Index3 patch_size = Index3(192, 224, 192);
    int batch_size = 2;
    int num_resolutions = 6;
    int min_bottleneck = 4;

    std::int64_t divisor() const { return std::int64_t{1} << (num_resolutions - 1); }
    Index3 bottleneck() const { return patch_size / divisor(); }
};

/// Thrown by validate_patch. `axis` is -1 for non-axis failures; `lower` /
/// `upper` are the nearest valid sizes on that axis (0 when none exists below).
class PatchError : public Error {
public:
    PatchError(const std::string& msg, int axis, std::int64_t lower, std::int64_t upper)
        : Error(msg), axis(axis), lower(lower), upper(upper)
    {
    }
    int axis;
    std::int64_t lower;
    std::int64_t upper;
};

/// True iff every axis is divisible by 2^(R-1) with quotient >= min_bottleneck.
bool patch_is_valid(const Index3& patch_size, int num_resolutions, int min_bottleneck);

PatchSpec validate_patch(const Index3& patch_size, int num_resolutions, int min_bottleneck = 4, int batch_size = 2);

/// Activation bytes for one training step:
///   B * bytes * 2 * sum_r [2 * C(r) * V / 8^r]
/// summed over encoder levels r = 0..R-1 and decoder levels r = 0..R-2, with
/// V the patch voxel count and C(r) = min(base * 2^r, cap). The factor 2
/// counts the forward activation and its gradient. Throws on uint64 overflow.
std::uint64_t estimate_activation_memory(const PatchSpec& spec, int base_channels, int channel_cap,
                                         int bytes_per_scalar);

/// Image/label patch pair cut from a case.
struct PatchPair {
    Volume3 image;
    LabelMask label;
};

/// Pads volumes smaller than the patch (mirror for images, zeros for labels),
/// then crops one patch. With probability fg_probability and a nonempty mask
/// the patch is centred on a uniformly chosen foreground voxel (clamped to
/// bounds), otherwise the origin is uniform over all valid origins.
PatchPair sample_training_patch(const Volume3& vol, const LabelMask& mask, const PatchSpec& spec, std::mt19937_64& rng,
                                double fg_probability);

/// Same, additionally reporting the chosen origin in padded coordinates.
PatchPair sample_training_patch(const Volume3& vol, const LabelMask& mask, const PatchSpec& spec, std::mt19937_64& rng,
                                double fg_probability, Index3& origin_out);

struct TilePlan {
    Index3 patch_size;
    Index3 padded_dims;
    Index3 pad_low;
    Index3 pad_high;
    /// Tile origins in padded coordinates, x fastest.
    std::vector<Index3> offsets;
};

TilePlan tile_sliding_window(const Index3& dims, const Index3& patch_size, double overlap_fraction = 0.5);

/// Separable Gaussian with sigma_d = sigma_scale * patch_d centred at
/// (patch_d - 1) / 2, scaled to max 1 and floored at 1e-6. x-fastest.
Eigen::ArrayXd gaussian_window(const Index3& patch_size, double sigma_scale = 0.125);

/// Mirror-pads (image) or zero-pads (mask) by pad_low/pad_high per axis.
Volume3 pad_mirror(const Volume3& vol, const Index3& pad_low, const Index3& pad_high);
LabelMask pad_zero(const LabelMask& mask, const Index3& pad_low, const Index3& pad_high);

/// Copies the block [origin, origin + size) out of a grid.
Volume3 crop(const Volume3& vol, const Index3& origin, const Index3& size);
LabelMask crop(const LabelMask& mask, const Index3& origin, const Index3& size);

}  // namespace aneuseg
