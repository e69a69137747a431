#include "aneuseg/augment.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace aneuseg {

namespace {

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

void check_range(const Range& r, const char* name)
{
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi)
        throw Error(std::string("augment: invalid range for ") + name);
}

void check_probability(double p, const char* name)
{
    if (!(p >= 0.0 && p <= 1.0))
        throw Error(std::string("augment: probability ") + name + " must be in [0, 1]");
}

double draw(std::mt19937_64& rng, const Range& r)
{
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

Eigen::Matrix3d quarter_turn(int axis)
{
    Vec3 angles = Vec3::Zero();
    angles[axis] = std::numbers::pi / 2.0;
    return rotation_xyz(angles).array().round().matrix();
}

template <typename Grid>
Grid rotate90_impl(const Grid& patch, int axis, int quarter_turns)
{
    if (axis < 0 || axis > 2)
        throw Error("rotate90_exact: axis must be 0, 1 or 2");
    const int a = (axis + 1) % 3;
    const int b = (axis + 2) % 3;
    if (patch.geom.dims[a] != patch.geom.dims[b])
        throw Error("rotate90_exact: rotation plane is not square");
    const int turns = ((quarter_turns % 4) + 4) % 4;
    const Eigen::Matrix3d inv = quarter_turn(axis).transpose();
    const Vec3 centre = (patch.geom.dims.template cast<double>().array() - 1.0).matrix() / 2.0;
    Grid cur = patch;
    for (int t = 0; t < turns; ++t) {
        Grid next = cur;
        const Index3& n = cur.geom.dims;
        for (std::int64_t z = 0; z < n.z(); ++z)
            for (std::int64_t y = 0; y < n.y(); ++y)
                for (std::int64_t x = 0; x < n.x(); ++x) {
                    const Vec3 q = inv * (Vec3(x, y, z) - centre) + centre;
                    next.at(x, y, z) = cur.at(std::llround(q.x()), std::llround(q.y()), std::llround(q.z()));
                }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace

void AugmentConfig::validate() const
{
    check_probability(p_rotate, "p_rotate");
    check_probability(p_scale, "p_scale");
    check_probability(p_noise, "p_noise");
    check_probability(p_gamma, "p_gamma");
    check_range(angle_deg, "angle_deg");
    check_range(scale, "scale");
    check_range(noise_sigma, "noise_sigma");
    check_range(gamma, "gamma");
    if (scale.lo <= 0.0)
        throw Error("augment: scale must be > 0");
    if (noise_sigma.lo < 0.0)
        throw Error("augment: noise sigma must be >= 0");
    if (gamma.lo <= 0.0)
        throw Error("augment: gamma must be > 0");
}

Eigen::Matrix3d rotation_xyz(const Vec3& angles_rad)
{
    const Eigen::Matrix3d rx = Eigen::AngleAxisd(angles_rad.x(), Vec3::UnitX()).toRotationMatrix();
    const Eigen::Matrix3d ry = Eigen::AngleAxisd(angles_rad.y(), Vec3::UnitY()).toRotationMatrix();
    const Eigen::Matrix3d rz = Eigen::AngleAxisd(angles_rad.z(), Vec3::UnitZ()).toRotationMatrix();
    return rz * ry * rx;
}

PatchPair spatial_transform(const PatchPair& in, const Eigen::Matrix3d& forward)
{
    require_same_grid(in.image.geom, in.label.geom, "spatial_transform");
    const Eigen::Matrix3d inv = forward.inverse();
    const Index3& n = in.image.geom.dims;
    const Vec3 centre = (n.cast<double>().array() - 1.0).matrix() / 2.0;
    PatchPair out{Volume3(in.image.geom), LabelMask(in.label.geom)};
    for (std::int64_t z = 0; z < n.z(); ++z)
        for (std::int64_t y = 0; y < n.y(); ++y)
            for (std::int64_t x = 0; x < n.x(); ++x) {
                const Vec3 q = inv * (Vec3(x, y, z) - centre) + centre;
                out.label.at(x, y, z) = in.label.at(mirror(std::llround(q.x()), n.x()),
                                                    mirror(std::llround(q.y()), n.y()),
                                                    mirror(std::llround(q.z()), n.z()));
                const Vec3 f = q.array().floor().matrix();
                const Vec3 t = q - f;
                double acc = 0.0;
                for (int corner = 0; corner < 8; ++corner) {
                    const int dx = corner & 1, dy = (corner >> 1) & 1, dz = corner >> 2;
                    const double w = (dx ? t.x() : 1.0 - t.x()) * (dy ? t.y() : 1.0 - t.y()) *
                                     (dz ? t.z() : 1.0 - t.z());
                    if (w == 0.0)
                        continue;
                    acc += w * in.image.at(mirror(static_cast<std::int64_t>(f.x()) + dx, n.x()),
                                           mirror(static_cast<std::int64_t>(f.y()) + dy, n.y()),
                                           mirror(static_cast<std::int64_t>(f.z()) + dz, n.z()));
                }
                out.image.at(x, y, z) = static_cast<float>(acc);
            }
    return out;
}

Volume3 rotate90_exact(const Volume3& patch, int axis, int quarter_turns)
{
    return rotate90_impl(patch, axis, quarter_turns);
}

LabelMask rotate90_exact(const LabelMask& patch, int axis, int quarter_turns)
{
    return rotate90_impl(patch, axis, quarter_turns);
}

Volume3 gamma_correct(const Volume3& vol, double gamma)
{
    const double lo = vol.voxels.minCoeff();
    const double hi = vol.voxels.maxCoeff();
    const double range = hi - lo;
    if (!(range > 0.0))
        return vol;
    const Eigen::ArrayXd unit = (vol.voxels.cast<double>() - lo) / range;
    return Volume3(vol.geom, (unit.pow(gamma) * range + lo).cast<float>());
}

PatchPair augment_pair(const PatchPair& in, const AugmentConfig& cfg, std::mt19937_64& rng)
{
    cfg.validate();
    require_same_grid(in.image.geom, in.label.geom, "augment_pair");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PatchPair out = in;

    Eigen::Matrix3d transform = Eigen::Matrix3d::Identity();
    bool spatial = false;
    if (unit(rng) < cfg.p_rotate) {
        Vec3 angles;
        for (int d = 0; d < 3; ++d)
            angles[d] = draw(rng, cfg.angle_deg) * std::numbers::pi / 180.0;
        transform = rotation_xyz(angles);
        spatial = true;
    }
    if (unit(rng) < cfg.p_scale) {
        transform *= draw(rng, cfg.scale);
        spatial = true;
    }
    if (spatial)
        out = spatial_transform(out, transform);

    if (unit(rng) < cfg.p_noise) {
        const double sigma = draw(rng, cfg.noise_sigma);
        if (sigma > 0.0) {
            std::normal_distribution<double> noise(0.0, sigma);
            for (Eigen::Index i = 0; i < out.image.voxels.size(); ++i)
                out.image.voxels[i] = static_cast<float>(out.image.voxels[i] + noise(rng));
        }
    }
    if (unit(rng) < cfg.p_gamma)
        out.image = gamma_correct(out.image, draw(rng, cfg.gamma));
    return out;
}

}  // namespace aneuseg
