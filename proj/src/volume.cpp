#include "aneuseg/volume.hpp"

#include <cmath>
#include <sstream>

namespace aneuseg {

void Geometry::validate() const
{
    for (int d = 0; d < 3; ++d) {
        if (dims[d] <= 0)
            throw Error("geometry: dimension " + std::to_string(d) + " is not positive");
        if (!std::isfinite(spacing[d]) || spacing[d] <= 0.0)
            throw Error("geometry: spacing " + std::to_string(d) + " must be finite and > 0");
        if (!std::isfinite(origin[d]))
            throw Error("geometry: origin is not finite");
    }
}

bool same_grid(const Geometry& a, const Geometry& b, double rel_tol)
{
    if (a.dims != b.dims)
        return false;
    for (int d = 0; d < 3; ++d) {
        const double scale = std::max(std::abs(a.spacing[d]), std::abs(b.spacing[d]));
        if (std::abs(a.spacing[d] - b.spacing[d]) > rel_tol * scale)
            return false;
    }
    return true;
}

void require_same_grid(const Geometry& a, const Geometry& b, const std::string& what)
{
    if (same_grid(a, b))
        return;
    std::ostringstream os;
    os << what << ": geometry mismatch (dims " << a.dims.transpose() << " vs " << b.dims.transpose()
       << ", spacing " << a.spacing.transpose() << " vs " << b.spacing.transpose() << ")";
    throw Error(os.str());
}

Volume3::Volume3(Geometry g, Eigen::ArrayXf v) : geom(std::move(g)), voxels(std::move(v))
{
    geom.validate();
    if (voxels.size() != geom.numel())
        throw Error("Volume3: voxel count does not match dims");
    if (!voxels.isFinite().all())
        throw Error("Volume3: non-finite voxel value");
}

Volume3::Volume3(const Geometry& g, float fill) : geom(g), voxels(Eigen::ArrayXf::Constant(g.numel(), fill))
{
    geom.validate();
}

LabelMask::LabelMask(Geometry g, Storage v) : geom(std::move(g)), voxels(std::move(v))
{
    geom.validate();
    if (voxels.size() != geom.numel())
        throw Error("LabelMask: voxel count does not match dims");
    if ((voxels > 1).any())
        throw Error("LabelMask: values must be 0 or 1");
}

LabelMask::LabelMask(const Geometry& g) : geom(g), voxels(Storage::Zero(g.numel()))
{
    geom.validate();
}

std::int64_t LabelMask::count() const
{
    return voxels.cast<std::int64_t>().sum();
}

}  // namespace aneuseg
