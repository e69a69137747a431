#include "aneuseg/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace aneuseg {

Axis parse_axis(const std::string& s)
{
    if (s == "x")
        return Axis::X;
    if (s == "y")
        return Axis::Y;
    if (s == "z")
        return Axis::Z;
    throw Error("axis must be one of x, y, z (got '" + s + "')");
}

GrayImage render_overlay(const Volume3& vol, const LabelMask& mask, Axis axis, std::int64_t index)
{
    require_same_grid(vol.geom, mask.geom, "render");
    const int a = static_cast<int>(axis);
    if (index < 0 || index >= vol.geom.dims[a])
        throw Error("render: slice index " + std::to_string(index) + " out of range [0, " +
                    std::to_string(vol.geom.dims[a]) + ")");

    const int u_axis = axis == Axis::X ? 1 : 0;
    const int v_axis = axis == Axis::Z ? 1 : 2;
    GrayImage img;
    img.width = static_cast<int>(vol.geom.dims[u_axis]);
    img.height = static_cast<int>(vol.geom.dims[v_axis]);
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, 0);

    auto voxel = [&](int u, int v) {
        Index3 p;
        p[a] = index;
        p[u_axis] = u;
        p[v_axis] = v;
        return vol.geom.index(p[0], p[1], p[2]);
    };
    auto fg = [&](int u, int v) {
        if (u < 0 || v < 0 || u >= img.width || v >= img.height)
            return false;
        return mask.voxels[voxel(u, v)] != 0;
    };

    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < img.width; ++u) {
            const float x = vol.voxels[voxel(u, v)];
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    const double range = static_cast<double>(hi) - lo;

    for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < img.width; ++u) {
            auto& px = img.pixels[static_cast<std::size_t>(v) * img.width + u];
            if (fg(u, v) && (!fg(u - 1, v) || !fg(u + 1, v) || !fg(u, v - 1) || !fg(u, v + 1))) {
                px = 255;
                continue;
            }
            const double t = range > 0 ? (vol.voxels[voxel(u, v)] - lo) / range : 0.0;
            px = static_cast<std::uint8_t>(std::lround(255.0 * t));
        }
    return img;
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!out)
        throw Error("write failed for " + path.string());
}

}  // namespace aneuseg
