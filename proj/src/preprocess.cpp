#include "aneuseg/preprocess.hpp"

#include <cmath>
#include <sstream>

namespace aneuseg {

namespace {

struct Tap {
    std::int64_t index;
    double weight;
};

// Mirror index into [0, n) reflecting about samples 0 and n-1.
std::int64_t mirror(std::int64_t k, std::int64_t n)
{
    if (n == 1)
        return 0;
    const std::int64_t period = 2 * n - 2;
    k %= period;
    if (k < 0)
        k += period;
    return k < n ? k : period - k;
}

std::vector<std::vector<Tap>> axis_taps(std::int64_t n_in, std::int64_t n_out, double origin_in, double sp_in,
                                        double origin_out, double sp_out, int order)
{
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(n_out));
    for (std::int64_t i = 0; i < n_out; ++i) {
        const double x = (origin_out + static_cast<double>(i) * sp_out - origin_in) / sp_in;
        auto& t = taps[static_cast<std::size_t>(i)];
        if (order == 0) {
            t.push_back({mirror(std::llround(x), n_in), 1.0});
        } else if (order == 1) {
            const double f = std::floor(x);
            const double u = x - f;
            const auto k = static_cast<std::int64_t>(f);
            t.push_back({mirror(k, n_in), 1.0 - u});
            t.push_back({mirror(k + 1, n_in), u});
        } else {
            const double f = std::floor(x);
            const double u = x - f;
            const auto k = static_cast<std::int64_t>(f);
            const double u2 = u * u;
            const double u3 = u2 * u;
            const double w[4] = {
                (1.0 - u) * (1.0 - u) * (1.0 - u) / 6.0,
                (4.0 - 6.0 * u2 + 3.0 * u3) / 6.0,
                (1.0 + 3.0 * u + 3.0 * u2 - 3.0 * u3) / 6.0,
                u3 / 6.0,
            };
            for (int j = 0; j < 4; ++j)
                t.push_back({mirror(k - 1 + j, n_in), w[j]});
        }
    }
    return taps;
}

// Applies 1D taps along `axis`, producing a grid with dims[axis] = taps.size().
Eigen::ArrayXd apply_axis(const Eigen::ArrayXd& in, const Index3& dims, int axis,
                          const std::vector<std::vector<Tap>>& taps, Index3& out_dims)
{
    out_dims = dims;
    out_dims[axis] = static_cast<std::int64_t>(taps.size());
    Eigen::ArrayXd out(out_dims.prod());
    const std::int64_t in_stride = axis == 0 ? 1 : axis == 1 ? dims[0] : dims[0] * dims[1];
    for (std::int64_t z = 0; z < out_dims[2]; ++z)
        for (std::int64_t y = 0; y < out_dims[1]; ++y)
            for (std::int64_t x = 0; x < out_dims[0]; ++x) {
                Index3 p(x, y, z);
                const std::int64_t i = p[axis];
                p[axis] = 0;
                const std::int64_t base = p[0] + dims[0] * (p[1] + dims[1] * p[2]);
                double acc = 0.0;
                for (const Tap& t : taps[static_cast<std::size_t>(i)])
                    acc += t.weight * in[base + t.index * in_stride];
                out[x + out_dims[0] * (y + out_dims[1] * z)] = acc;
            }
    return out;
}

Eigen::ArrayXd resample_array(Eigen::ArrayXd data, const Geometry& src, const Geometry& dst, int order)
{
    if (order == 3) {
        for (int axis = 0; axis < 3; ++axis) {
            const std::int64_t n = src.dims[axis];
            const std::int64_t stride = axis == 0 ? 1 : axis == 1 ? src.dims[0] : src.dims[0] * src.dims[1];
            for (std::int64_t z = 0; z < (axis == 2 ? 1 : src.dims[2]); ++z)
                for (std::int64_t y = 0; y < (axis == 1 ? 1 : src.dims[1]); ++y)
                    for (std::int64_t x = 0; x < (axis == 0 ? 1 : src.dims[0]); ++x)
                        bspline_prefilter_line(data.data() + src.index(x, y, z), n, stride);
        }
    }
    Index3 dims = src.dims;
    for (int axis = 0; axis < 3; ++axis) {
        const auto taps = axis_taps(src.dims[axis], dst.dims[axis], src.origin[axis], src.spacing[axis],
                                    dst.origin[axis], dst.spacing[axis], order);
        Index3 next;
        data = apply_axis(data, dims, axis, taps, next);
        dims = next;
    }
    return data;
}

Geometry target_geometry(const Geometry& g, const Vec3& spacing, std::vector<std::string>* warnings)
{
    Geometry out;
    out.dims = resampled_dims(g, spacing, warnings);
    out.spacing = spacing;
    out.origin = g.origin;
    return out;
}

}  // namespace

void PreprocessConfig::validate() const
{
    for (int d = 0; d < 3; ++d)
        if (!std::isfinite(target_spacing[d]) || target_spacing[d] <= 0.0)
            throw Error("preprocess: target spacing must be finite and > 0");
    if (image_order != 0 && image_order != 1 && image_order != 3)
        throw Error("preprocess: interpolation order must be 0, 1 or 3");
}

void bspline_prefilter_line(double* line, std::int64_t n, std::int64_t stride)
{
    if (n < 2)
        return;
    const double z = std::sqrt(3.0) - 2.0;
    const double lambda = (1.0 - z) * (1.0 - 1.0 / z);
    auto at = [&](std::int64_t k) -> double& { return line[k * stride]; };

    for (std::int64_t k = 0; k < n; ++k)
        at(k) *= lambda;

    // Causal initialisation, exact for mirror-symmetric extension.
    {
        double zn = std::pow(z, static_cast<double>(n - 1));
        double z2n = zn * zn / z;  // z^(2n-3)
        double sum = at(0) + zn * at(n - 1);
        double zk = z;
        for (std::int64_t k = 1; k < n - 1; ++k) {
            sum += (zk + z2n) * at(k);
            zk *= z;
            z2n /= z;
        }
        at(0) = sum / (1.0 - zn * zn);
    }
    for (std::int64_t k = 1; k < n; ++k)
        at(k) += z * at(k - 1);

    at(n - 1) = (z / (z * z - 1.0)) * (at(n - 1) + z * at(n - 2));
    for (std::int64_t k = n - 2; k >= 0; --k)
        at(k) = z * (at(k + 1) - at(k));
}

Index3 resampled_dims(const Geometry& g, const Vec3& target_spacing, std::vector<std::string>* warnings)
{
    Index3 out;
    for (int d = 0; d < 3; ++d) {
        const auto n = static_cast<std::int64_t>(
            std::llround(static_cast<double>(g.dims[d]) * g.spacing[d] / target_spacing[d]));
        if (n < 1 && warnings) {
            std::ostringstream os;
            os << "axis " << d << " rounds to 0 voxels at spacing " << target_spacing[d] << "; clamped to 1";
            warnings->push_back(os.str());
        }
        out[d] = std::max<std::int64_t>(1, n);
    }
    return out;
}

Volume3 resample_to(const Volume3& vol, const Geometry& target, int order)
{
    vol.geom.validate();
    target.validate();
    if (order != 0 && order != 1 && order != 3)
        throw Error("resample: interpolation order must be 0, 1 or 3");
    if (!vol.voxels.isFinite().all())
        throw Error("resample: non-finite input voxel");
    Eigen::ArrayXd out = resample_array(vol.voxels.cast<double>(), vol.geom, target, order);
    return Volume3(target, out.cast<float>());
}

Volume3 resample_image(const Volume3& vol, const PreprocessConfig& cfg, std::vector<std::string>* warnings)
{
    cfg.validate();
    return resample_to(vol, target_geometry(vol.geom, cfg.target_spacing, warnings), cfg.image_order);
}

LabelMask resample_mask_to(const LabelMask& mask, const Geometry& target)
{
    target.validate();
    Eigen::ArrayXd out = resample_array(mask.voxels.cast<double>(), mask.geom, target, 0);
    return LabelMask(target, out.cast<std::uint8_t>());
}

LabelMask resample_mask(const LabelMask& mask, const PreprocessConfig& cfg, std::vector<std::string>* warnings)
{
    cfg.validate();
    return resample_mask_to(mask, target_geometry(mask.geom, cfg.target_spacing, warnings));
}

Volume3 znormalize(const Volume3& vol)
{
    const Eigen::ArrayXd v = vol.voxels.cast<double>();
    const double mean = v.mean();
    const double var = (v - mean).square().mean();
    const double sd = std::sqrt(var);
    if (!(sd > 1e-8))
        throw Error("znormalize: intensity standard deviation is ~0 (constant volume)");
    return Volume3(vol.geom, ((v - mean) / sd).cast<float>());
}

}  // namespace aneuseg
