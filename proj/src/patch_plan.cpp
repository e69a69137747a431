#include "aneuseg/patch_plan.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace aneuseg {

namespace {

constexpr const char* kAxisName[3] = {"x", "y", "z"};

std::int64_t mirror_index(std::int64_t k, std::int64_t n)
{
    if (n == 1)
        return 0;
    const std::int64_t period = 2 * n - 2;
    k %= period;
    if (k < 0)
        k += period;
    return k < n ? k : period - k;
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b)
{
    std::uint64_t r = 0;
    if (__builtin_mul_overflow(a, b, &r))
        throw Error("activation memory estimate overflows 64 bits");
    return r;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b)
{
    std::uint64_t r = 0;
    if (__builtin_add_overflow(a, b, &r))
        throw Error("activation memory estimate overflows 64 bits");
    return r;
}

Geometry shifted(const Geometry& g, const Index3& offset, const Index3& dims)
{
    Geometry out = g;
    out.dims = dims;
    out.origin = g.origin + (offset.cast<double>().array() * g.spacing.array()).matrix();
    return out;
}

}  // namespace

bool patch_is_valid(const Index3& patch_size, int num_resolutions, int min_bottleneck)
{
    if (num_resolutions < 2 || num_resolutions > 62)
        return false;
    const std::int64_t div = std::int64_t{1} << (num_resolutions - 1);
    for (int d = 0; d < 3; ++d)
        if (patch_size[d] <= 0 || patch_size[d] % div != 0 || patch_size[d] / div < min_bottleneck)
            return false;
    return true;
}

PatchSpec validate_patch(const Index3& patch_size, int num_resolutions, int min_bottleneck, int batch_size)
{
    if (num_resolutions < 2 || num_resolutions > 30)
        throw PatchError("number of resolutions must be in [2, 30]", -1, 0, 0);
    if (min_bottleneck < 1)
        throw PatchError("min_bottleneck must be >= 1", -1, 0, 0);
    if (batch_size < 1)
        throw PatchError("batch size must be >= 1", -1, 0, 0);
    const std::int64_t div = std::int64_t{1} << (num_resolutions - 1);
    const std::int64_t min_size = div * min_bottleneck;
    for (int d = 0; d < 3; ++d) {
        const std::int64_t p = patch_size[d];
        if (p <= 0)
            throw PatchError(std::string("axis ") + kAxisName[d] + ": patch size must be positive", d, 0, min_size);
        if (p % div != 0) {
            std::int64_t lower = (p / div) * div;
            if (lower < min_size)
                lower = 0;
            const std::int64_t upper = std::max((p / div + 1) * div, min_size);
            std::ostringstream os;
            os << "axis " << kAxisName[d] << ": patch size " << p << " is not divisible by " << div
               << " (2^" << num_resolutions - 1 << "); nearest valid sizes: ";
            if (lower > 0)
                os << lower << " and ";
            os << upper;
            throw PatchError(os.str(), d, lower, upper);
        }
        if (p / div < min_bottleneck) {
            std::ostringstream os;
            os << "axis " << kAxisName[d] << ": bottleneck extent " << p / div << " is below the minimum "
               << min_bottleneck << "; smallest valid size is " << min_size;
            throw PatchError(os.str(), d, 0, min_size);
        }
    }
    PatchSpec spec;
    spec.patch_size = patch_size;
    spec.num_resolutions = num_resolutions;
    spec.min_bottleneck = min_bottleneck;
    spec.batch_size = batch_size;
    return spec;
}

std::uint64_t estimate_activation_memory(const PatchSpec& spec, int base_channels, int channel_cap,
                                         int bytes_per_scalar)
{
    if (base_channels < 1 || channel_cap < 1 || bytes_per_scalar < 1 || spec.batch_size < 1)
        throw Error("activation memory: all settings must be positive");
    std::uint64_t per_sample = 0;
    for (int r = 0; r < spec.num_resolutions; ++r) {
        std::uint64_t voxels = 1;
        for (int d = 0; d < 3; ++d)
            voxels = checked_mul(voxels, static_cast<std::uint64_t>(spec.patch_size[d] >> r));
        const std::uint64_t channels = std::min<std::uint64_t>(
            static_cast<std::uint64_t>(channel_cap), checked_mul(static_cast<std::uint64_t>(base_channels),
                                                                 std::uint64_t{1} << r));
        const std::uint64_t level = checked_mul(2 * channels, voxels);
        const int uses = r < spec.num_resolutions - 1 ? 2 : 1;  // encoder + decoder, bottleneck only once
        per_sample = checked_add(per_sample, checked_mul(level, static_cast<std::uint64_t>(uses)));
    }
    std::uint64_t total = checked_mul(per_sample, 2);
    total = checked_mul(total, static_cast<std::uint64_t>(bytes_per_scalar));
    return checked_mul(total, static_cast<std::uint64_t>(spec.batch_size));
}

Volume3 pad_mirror(const Volume3& vol, const Index3& pad_low, const Index3& pad_high)
{
    if (pad_low.isZero() && pad_high.isZero())
        return vol;
    Geometry g = shifted(vol.geom, -pad_low, vol.geom.dims + pad_low + pad_high);
    Volume3 out(g);
    for (std::int64_t z = 0; z < g.dims.z(); ++z)
        for (std::int64_t y = 0; y < g.dims.y(); ++y)
            for (std::int64_t x = 0; x < g.dims.x(); ++x)
                out.at(x, y, z) = vol.at(mirror_index(x - pad_low.x(), vol.geom.dims.x()),
                                         mirror_index(y - pad_low.y(), vol.geom.dims.y()),
                                         mirror_index(z - pad_low.z(), vol.geom.dims.z()));
    return out;
}

LabelMask pad_zero(const LabelMask& mask, const Index3& pad_low, const Index3& pad_high)
{
    if (pad_low.isZero() && pad_high.isZero())
        return mask;
    Geometry g = shifted(mask.geom, -pad_low, mask.geom.dims + pad_low + pad_high);
    LabelMask out(g);
    for (std::int64_t z = 0; z < mask.geom.dims.z(); ++z)
        for (std::int64_t y = 0; y < mask.geom.dims.y(); ++y)
            for (std::int64_t x = 0; x < mask.geom.dims.x(); ++x)
                out.at(x + pad_low.x(), y + pad_low.y(), z + pad_low.z()) = mask.at(x, y, z);
    return out;
}

template <typename Grid>
static Grid crop_impl(const Grid& src, const Index3& origin, const Index3& size)
{
    for (int d = 0; d < 3; ++d)
        if (origin[d] < 0 || size[d] < 1 || origin[d] + size[d] > src.geom.dims[d])
            throw Error("crop: block out of bounds");
    Grid out(shifted(src.geom, origin, size));
    for (std::int64_t z = 0; z < size.z(); ++z)
        for (std::int64_t y = 0; y < size.y(); ++y) {
            const auto s = src.geom.index(origin.x(), origin.y() + y, origin.z() + z);
            const auto o = out.geom.index(0, y, z);
            out.voxels.segment(o, size.x()) = src.voxels.segment(s, size.x());
        }
    return out;
}

Volume3 crop(const Volume3& vol, const Index3& origin, const Index3& size) { return crop_impl(vol, origin, size); }

LabelMask crop(const LabelMask& mask, const Index3& origin, const Index3& size)
{
    return crop_impl(mask, origin, size);
}

PatchPair sample_training_patch(const Volume3& vol, const LabelMask& mask, const PatchSpec& spec, std::mt19937_64& rng,
                                double fg_probability)
{
    Index3 unused;
    return sample_training_patch(vol, mask, spec, rng, fg_probability, unused);
}

PatchPair sample_training_patch(const Volume3& vol, const LabelMask& mask, const PatchSpec& spec, std::mt19937_64& rng,
                                double fg_probability, Index3& origin_out)
{
    require_same_grid(vol.geom, mask.geom, "sample_training_patch");
    const Index3& patch = spec.patch_size;
    Index3 pad_low = Index3::Zero();
    Index3 pad_high = Index3::Zero();
    for (int d = 0; d < 3; ++d) {
        const std::int64_t missing = std::max<std::int64_t>(0, patch[d] - vol.geom.dims[d]);
        pad_low[d] = missing / 2;
        pad_high[d] = missing - missing / 2;
    }
    const Volume3 img = pad_mirror(vol, pad_low, pad_high);
    const LabelMask lab = pad_zero(mask, pad_low, pad_high);
    const Index3 max_origin = img.geom.dims - patch;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool want_fg = unit(rng) < fg_probability;

    Index3 origin;
    std::int64_t fg_count = 0;
    if (want_fg)
        fg_count = lab.count();
    if (want_fg && fg_count > 0) {
        std::uniform_int_distribution<std::int64_t> pick(0, fg_count - 1);
        std::int64_t target = pick(rng);
        std::int64_t flat = 0;
        for (; flat < lab.voxels.size(); ++flat)
            if (lab.voxels[flat] && target-- == 0)
                break;
        const Index3& dims = lab.geom.dims;
        const Index3 voxel(flat % dims.x(), (flat / dims.x()) % dims.y(), flat / (dims.x() * dims.y()));
        for (int d = 0; d < 3; ++d)
            origin[d] = std::clamp<std::int64_t>(voxel[d] - patch[d] / 2, 0, max_origin[d]);
    } else {
        for (int d = 0; d < 3; ++d) {
            std::uniform_int_distribution<std::int64_t> pick(0, max_origin[d]);
            origin[d] = pick(rng);
        }
    }
    origin_out = origin;
    return {crop(img, origin, patch), crop(lab, origin, patch)};
}

TilePlan tile_sliding_window(const Index3& dims, const Index3& patch_size, double overlap_fraction)
{
    if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
        throw Error("tile_sliding_window: overlap fraction must be in [0, 1)");
    TilePlan plan;
    plan.patch_size = patch_size;
    std::vector<std::int64_t> starts[3];
    for (int d = 0; d < 3; ++d) {
        const std::int64_t padded = std::max(dims[d], patch_size[d]);
        const std::int64_t missing = padded - dims[d];
        plan.padded_dims[d] = padded;
        plan.pad_low[d] = missing / 2;
        plan.pad_high[d] = missing - missing / 2;
        const std::int64_t step = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::floor(static_cast<double>(patch_size[d]) * (1.0 - overlap_fraction))));
        const std::int64_t last = padded - patch_size[d];
        for (std::int64_t s = 0; s < last; s += step)
            starts[d].push_back(s);
        starts[d].push_back(last);
    }
    for (auto z : starts[2])
        for (auto y : starts[1])
            for (auto x : starts[0])
                plan.offsets.emplace_back(x, y, z);
    return plan;
}

Eigen::ArrayXd gaussian_window(const Index3& patch_size, double sigma_scale)
{
    if (!(sigma_scale > 0.0))
        throw Error("gaussian_window: sigma_scale must be > 0");
    Eigen::ArrayXd axis[3];
    for (int d = 0; d < 3; ++d) {
        const std::int64_t n = patch_size[d];
        const double c = (static_cast<double>(n) - 1.0) / 2.0;
        const double sigma = sigma_scale * static_cast<double>(n);
        axis[d].resize(n);
        for (std::int64_t i = 0; i < n; ++i) {
            const double t = (static_cast<double>(i) - c) / sigma;
            axis[d][i] = std::exp(-0.5 * t * t);
        }
    }
    Eigen::ArrayXd w(patch_size.prod());
    std::int64_t k = 0;
    for (std::int64_t z = 0; z < patch_size.z(); ++z)
        for (std::int64_t y = 0; y < patch_size.y(); ++y)
            for (std::int64_t x = 0; x < patch_size.x(); ++x)
                w[k++] = axis[0][x] * axis[1][y] * axis[2][z];
    w /= w.maxCoeff();
    return w.max(1e-6);
}

}  // namespace aneuseg
