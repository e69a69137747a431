#pragma once

#include <random>

#include "aneuseg/patch_plan.hpp"
#include "aneuseg/volume.hpp"

namespace aneuseg {

struct Range {
    double lo;
    double hi;
};

/// Training-time augmentation. Angles are in degrees per axis; the noise
/// sigma is in z-scored intensity units.
struct AugmentConfig {
    double p_rotate = 0.2;
    Range angle_deg{-30.0, 30.0};
    double p_scale = 0.2;
    Range scale{0.7, 1.4};
    double p_noise = 0.15;
    Range noise_sigma{0.0, 0.1};
    double p_gamma = 0.15;
    Range gamma{0.7, 1.5};

    void validate() const;
};

/// Applies, each independently with its probability and in this order:
/// rotation + isotropic scaling (one combined resampling about the patch
/// centre; linear for the image, nearest for the label, mirror boundary),
/// Gaussian noise (image only), gamma correction (image only).
PatchPair augment_pair(const PatchPair& in, const AugmentConfig& cfg, std::mt19937_64& rng);

/// Rotation x -> y -> z (extrinsic) by the given angles in radians.
Eigen::Matrix3d rotation_xyz(const Vec3& angles_rad);

/// Resamples both patches through out(p) = in(A^-1 (p - c) + c), c the patch
/// centre. Image: trilinear; label: nearest; both mirror-padded.
PatchPair spatial_transform(const PatchPair& in, const Eigen::Matrix3d& forward);

/// Lossless rotation by quarter_turns * 90 degrees about `axis` (0, 1, 2), in
/// the same sense as rotation_xyz. The rotation plane must be square.
Volume3 rotate90_exact(const Volume3& patch, int axis, int quarter_turns);
LabelMask rotate90_exact(const LabelMask& patch, int axis, int quarter_turns);

/// min-max normalise -> v^gamma -> restore the original range.
Volume3 gamma_correct(const Volume3& vol, double gamma);

}  // namespace aneuseg
