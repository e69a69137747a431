#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "aneuseg/augment.hpp"
#include "support.hpp"

using namespace aneuseg;

namespace {

AugmentConfig nothing()
{
    AugmentConfig c;
    c.p_rotate = c.p_scale = c.p_noise = c.p_gamma = 0.0;
    return c;
}

PatchPair random_pair(std::uint64_t seed, const Index3& dims)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd;
    Geometry g;
    g.dims = dims;
    PatchPair p{Volume3(g), testsupport::random_mask(rng, g, 0.3)};
    for (Eigen::Index i = 0; i < p.image.voxels.size(); ++i)
        p.image.voxels[i] = nd(rng);
    return p;
}

}  // namespace

TEST_CASE("config validation")
{
    AugmentConfig c;
    CHECK_NOTHROW(c.validate());
    c.p_noise = 1.5;
    CHECK_THROWS_AS(c.validate(), Error);
    c = AugmentConfig();
    c.gamma = {0.0, 1.0};
    CHECK_THROWS_AS(c.validate(), Error);
    c = AugmentConfig();
    c.scale = {1.4, 0.7};
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("zero probabilities are the identity")
{
    const PatchPair in = random_pair(1, Index3(12, 10, 8));
    std::mt19937_64 rng(5);
    const PatchPair out = augment_pair(in, nothing(), rng);
    CHECK((out.image.voxels == in.image.voxels).all());
    CHECK((out.label.voxels == in.label.voxels).all());
}

TEST_CASE("gamma correction")
{
    const PatchPair in = random_pair(2, Index3(8, 8, 8));
    const Volume3 same = gamma_correct(in.image, 1.0);
    CHECK((same.voxels - in.image.voxels).abs().maxCoeff() <= 1e-6f);

    const Volume3 bent = gamma_correct(in.image, 1.5);
    CHECK(bent.voxels.minCoeff() == doctest::Approx(in.image.voxels.minCoeff()).epsilon(1e-6));
    CHECK(bent.voxels.maxCoeff() == doctest::Approx(in.image.voxels.maxCoeff()).epsilon(1e-6));
    CHECK((bent.voxels - in.image.voxels).abs().maxCoeff() > 0.1f);

    Geometry g;
    g.dims = Index3(2, 2, 2);
    CHECK((gamma_correct(Volume3(g, 3.0f), 0.7).voxels == 3.0f).all());
}

TEST_CASE("forced noise statistics")
{
    AugmentConfig c = nothing();
    c.p_noise = 1.0;
    c.noise_sigma = {0.05, 0.05};
    Geometry g;
    g.dims = Index3(32, 32, 32);
    const PatchPair in{Volume3(g, 1.0f), LabelMask(g)};
    std::mt19937_64 rng(10);
    const PatchPair out = augment_pair(in, c, rng);
    const Eigen::ArrayXd d = (out.image.voxels - in.image.voxels).cast<double>();
    const double sd = std::sqrt((d - d.mean()).square().sum() / static_cast<double>(d.size() - 1));
    CHECK(sd >= 0.045);
    CHECK(sd <= 0.055);
    CHECK((out.label.voxels == in.label.voxels).all());
}

TEST_CASE("quarter turns")
{
    const PatchPair in = random_pair(3, Index3(6, 6, 6));
    for (int axis = 0; axis < 3; ++axis) {
        CHECK((rotate90_exact(in.image, axis, 4).voxels == in.image.voxels).all());
        CHECK((rotate90_exact(in.label, axis, 4).voxels == in.label.voxels).all());
        CHECK((rotate90_exact(rotate90_exact(in.image, axis, 1), axis, 3).voxels == in.image.voxels).all());
    }

    // +90 degrees about z: (x, y) -> (n - 1 - y, x) about the centre
    Geometry g;
    g.dims = Index3(5, 5, 3);
    LabelMask one(g);
    one.at(4, 1, 2) = 1;
    const LabelMask turned = rotate90_exact(one, 2, 1);
    CHECK(turned.count() == 1);
    CHECK(turned.at(5 - 1 - 1, 4, 2) == 1);

    CHECK_THROWS_AS(rotate90_exact(Volume3(g), 0, 1), Error);
}

TEST_CASE("general rotation path agrees with exact quarter turns")
{
    const PatchPair in = random_pair(4, Index3(9, 9, 9));
    for (int axis = 0; axis < 3; ++axis) {
        Vec3 angles = Vec3::Zero();
        angles[axis] = std::numbers::pi / 2.0;
        const PatchPair general = spatial_transform(in, rotation_xyz(angles));
        const Volume3 exact = rotate90_exact(in.image, axis, 1);
        const LabelMask exact_label = rotate90_exact(in.label, axis, 1);
        for (std::int64_t z = 1; z < 8; ++z)
            for (std::int64_t y = 1; y < 8; ++y)
                for (std::int64_t x = 1; x < 8; ++x) {
                    CHECK(std::abs(general.image.at(x, y, z) - exact.at(x, y, z)) <= 1e-5f);
                    CHECK(general.label.at(x, y, z) == exact_label.at(x, y, z));
                }
    }
}

TEST_CASE("augmentation properties")
{
    AugmentConfig always;
    always.p_rotate = always.p_scale = always.p_noise = always.p_gamma = 1.0;
    const PatchPair in = random_pair(5, Index3(16, 12, 8));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 a(seed), b(seed);
        const PatchPair x = augment_pair(in, seed % 2 ? always : AugmentConfig(), a);
        const PatchPair y = augment_pair(in, seed % 2 ? always : AugmentConfig(), b);
        CHECK(x.image.geom.dims == in.image.geom.dims);
        CHECK(x.label.geom.dims == in.label.geom.dims);
        CHECK((x.label.voxels <= 1).all());
        CHECK(x.image.voxels.allFinite());
        CHECK((x.image.voxels == y.image.voxels).all());
        CHECK((x.label.voxels == y.label.voxels).all());
    }

    AugmentConfig intensity = nothing();
    intensity.p_noise = intensity.p_gamma = 1.0;
    std::mt19937_64 rng(1);
    const PatchPair z = augment_pair(in, intensity, rng);
    CHECK((z.label.voxels == in.label.voxels).all());
    CHECK((z.image.voxels != in.image.voxels).any());
}
