#include "aneuseg/synthetic.hpp"

#include <cstdio>

#include "aneuseg/rng.hpp"

namespace aneuseg {

std::vector<Case> make_synthetic(const SyntheticConfig& cfg)
{
    if (cfg.cases < 1 || cfg.min_spheres < 1 || cfg.max_spheres < cfg.min_spheres || cfg.min_radius <= 0 ||
        cfg.max_radius < cfg.min_radius)
        throw Error("synthetic: invalid configuration");
    for (int d = 0; d < 3; ++d)
        if (cfg.dims[d] < 2 * cfg.max_radius + 3)
            throw Error("synthetic: volume too small for the largest sphere");

    Geometry g;
    g.dims = cfg.dims;
    g.spacing = Vec3::Constant(cfg.spacing);

    std::vector<Case> out;
    for (int c = 0; c < cfg.cases; ++c) {
        std::mt19937_64 rng = make_rng(cfg.seed, "synthetic", static_cast<std::uint64_t>(c));
        std::normal_distribution<double> noise(0.0, 1.0);
        std::uniform_int_distribution<int> count(cfg.min_spheres, cfg.max_spheres);
        std::uniform_real_distribution<double> radius(cfg.min_radius, cfg.max_radius);

        LabelMask mask(g);
        const int spheres = count(rng);
        for (int s = 0; s < spheres; ++s) {
            const double r = radius(rng);
            Vec3 centre;
            for (int d = 0; d < 3; ++d)
                centre[d] = std::uniform_real_distribution<double>(r + 1.0, static_cast<double>(cfg.dims[d]) - 2.0 - r)(rng);
            for (std::int64_t z = 0; z < g.dims.z(); ++z)
                for (std::int64_t y = 0; y < g.dims.y(); ++y)
                    for (std::int64_t x = 0; x < g.dims.x(); ++x)
                        if ((Vec3(x, y, z) - centre).squaredNorm() <= r * r)
                            mask.at(x, y, z) = 1;
        }
        Volume3 image(g);
        for (Eigen::Index i = 0; i < image.voxels.size(); ++i)
            image.voxels[i] = static_cast<float>(noise(rng) + cfg.contrast * mask.voxels[i]);

        char id[32];
        std::snprintf(id, sizeof(id), "case_%03d", c);
        out.push_back({id, std::move(image), std::move(mask)});
    }
    return out;
}

}  // namespace aneuseg
