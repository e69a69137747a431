#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace aneuseg {

/// Domain error: bad input data, violated invariant, incompatible geometry.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Index3 = Eigen::Matrix<std::int64_t, 3, 1>;
using Vec3 = Eigen::Vector3d;

/// Grid geometry shared by images and masks. Voxels are stored x-fastest.
struct Geometry {
    Index3 dims = Index3::Ones();
    Vec3 spacing = Vec3::Ones();
    Vec3 origin = Vec3::Zero();

    std::int64_t numel() const { return dims.prod(); }

    std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const
    {
        return x + dims.x() * (y + dims.y() * z);
    }

    double voxel_volume() const { return spacing.prod(); }

    /// Throws unless dims are positive and spacing is finite and positive.
    void validate() const;
};

/// True when dims match exactly and spacing matches within `rel_tol` relative.
bool same_grid(const Geometry& a, const Geometry& b, double rel_tol = 1e-6);

/// Throws Error describing the mismatch when `same_grid` fails.
void require_same_grid(const Geometry& a, const Geometry& b, const std::string& what);

/// Scalar image. Voxel values are finite.
struct Volume3 {
    Geometry geom;
    Eigen::ArrayXf voxels;

    Volume3() = default;
    Volume3(Geometry g, Eigen::ArrayXf v);
    explicit Volume3(const Geometry& g, float fill = 0.0f);

    float& at(std::int64_t x, std::int64_t y, std::int64_t z) { return voxels[geom.index(x, y, z)]; }
    float at(std::int64_t x, std::int64_t y, std::int64_t z) const { return voxels[geom.index(x, y, z)]; }
};

/// Binary mask aligned with a Volume3. Every voxel is 0 or 1.
struct LabelMask {
    using Storage = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;

    Geometry geom;
    Storage voxels;

    LabelMask() = default;
    LabelMask(Geometry g, Storage v);
    explicit LabelMask(const Geometry& g);

    std::uint8_t& at(std::int64_t x, std::int64_t y, std::int64_t z) { return voxels[geom.index(x, y, z)]; }
    std::uint8_t at(std::int64_t x, std::int64_t y, std::int64_t z) const { return voxels[geom.index(x, y, z)]; }

    std::int64_t count() const;
};

}  // namespace aneuseg
