#pragma once

#include <string>
#include <vector>

#include "aneuseg/volume.hpp"

namespace aneuseg {

struct PreprocessConfig {
    Vec3 target_spacing = Vec3::Constant(0.5429);
    /// Image interpolation order: 0 (nearest), 1 (linear) or 3 (cubic B-spline).
    int image_order = 3;

    void validate() const;
};

/// Output dims for resampling `g` to `target_spacing`: round(n * s / t), at least 1.
/// Axes that round to 0 before clamping are reported in `warnings`.
Index3 resampled_dims(const Geometry& g, const Vec3& target_spacing, std::vector<std::string>* warnings = nullptr);

/// Resamples onto an arbitrary axis-aligned grid. Sample i on axis d sits at
/// physical position target.origin[d] + i * target.spacing[d]. Boundary
/// handling is mirror reflection about the first and last samples. Order 3
/// prefilters so the spline interpolates the input samples.
Volume3 resample_to(const Volume3& vol, const Geometry& target, int order);

/// Resamples to cfg.target_spacing keeping the origin.
Volume3 resample_image(const Volume3& vol, const PreprocessConfig& cfg, std::vector<std::string>* warnings = nullptr);

/// Nearest-neighbour counterpart of resample_image for masks.
LabelMask resample_mask(const LabelMask& mask, const PreprocessConfig& cfg, std::vector<std::string>* warnings = nullptr);
LabelMask resample_mask_to(const LabelMask& mask, const Geometry& target);

/// Whole-volume z-score with the population standard deviation.
/// Throws when the standard deviation is <= 1e-8.
Volume3 znormalize(const Volume3& vol);

/// In-place cubic B-spline prefilter along one line (mirror boundary).
/// Exposed for testing.
void bspline_prefilter_line(double* line, std::int64_t n, std::int64_t stride);

}  // namespace aneuseg
