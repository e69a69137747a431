#pragma once

#include <cstdint>
#include <vector>

#include "aneuseg/trainer.hpp"

namespace aneuseg {

/// Bright-sphere benchmark: unit Gaussian noise background plus `contrast`
/// inside 1..max_spheres spheres with exact voxel masks.
struct SyntheticConfig {
    int cases = 20;
    Index3 dims = Index3(64, 64, 64);
    double spacing = 0.5;
    int min_spheres = 1;
    int max_spheres = 2;
    double min_radius = 4.0;  // voxels
    double max_radius = 10.0;
    double contrast = 3.0;
    std::uint64_t seed = 0;
};

/// Case ids are "case_000", "case_001", ... Images and masks share geometry.
std::vector<Case> make_synthetic(const SyntheticConfig& cfg);

}  // namespace aneuseg
