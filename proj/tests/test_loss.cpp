#include <doctest.h>

#include <cmath>
#include <random>

#include "aneuseg/loss.hpp"
#include "aneuseg/optim.hpp"
#include "support.hpp"

using namespace aneuseg;

namespace {

using Labels = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;

Labels random_labels(std::mt19937_64& rng, Eigen::Index n, double density)
{
    std::bernoulli_distribution b(density);
    Labels l(n);
    for (Eigen::Index i = 0; i < n; ++i)
        l[i] = b(rng) ? 1 : 0;
    return l;
}

Batch<double> random_logits(std::mt19937_64& rng, const Index3& dims, int batch, double scale)
{
    std::normal_distribution<double> nd(0.0, scale);
    Batch<double> out(static_cast<std::size_t>(batch), FeatureMap<double>(dims, 2));
    for (auto& s : out)
        for (Eigen::Index i = 0; i < s.data.size(); ++i)
            s.data.data()[i] = nd(rng);
    return out;
}

}  // namespace

TEST_CASE("loss examples")
{
    const Index3 dims(4, 2, 2);
    Labels half(16);
    for (int i = 0; i < 16; ++i)
        half[i] = i % 2;
    const Batch<double> target{one_hot<double>(dims, half)};

    Batch<double> perfect{FeatureMap<double>(dims, 2)};
    perfect[0].data = (target[0].data.array() * 40.0 - 20.0).matrix();
    const LossReport p = dice_ce_loss(perfect, target);
    CHECK(p.total < 1e-6);

    const Batch<double> uniform{FeatureMap<double>(dims, 2)};
    const LossReport u = dice_ce_loss(uniform, target);
    const double eps = 1e-5;
    CHECK(std::abs(u.ce_term - std::log(2.0)) <= 1e-12);
    CHECK(std::abs(u.dice_term - (1.0 - (8.0 + eps) / (16.0 + eps))) <= 1e-12);
    CHECK(u.epsilon == eps);
    CHECK(std::abs(u.total - (u.ce_term + u.dice_term)) <= 1e-12);

    const Batch<double> background{one_hot<double>(dims, Labels::Zero(16))};
    Batch<double> all_bg{FeatureMap<double>(dims, 2)};
    all_bg[0].data.row(0).setConstant(60.0);
    all_bg[0].data.row(1).setConstant(-60.0);
    const LossReport e = dice_ce_loss(all_bg, background);
    CHECK(std::abs(e.dice_term) <= 1e-12);
    CHECK(e.ce_term < 1e-12);
}

TEST_CASE("loss input validation")
{
    const Index3 dims(2, 2, 2);
    const Batch<double> t{one_hot<double>(dims, Labels::Zero(8))};
    CHECK_THROWS_AS(dice_ce_loss(Batch<double>{FeatureMap<double>(Index3(2, 2, 1), 2)}, t), Error);
    Batch<double> bad = t;
    bad[0].data(0, 0) = 0.5;
    CHECK_THROWS_AS(dice_ce_loss(t, bad), Error);
    Batch<double> both = t;
    both[0].data(1, 0) = 1.0;
    CHECK_THROWS_AS(dice_ce_loss(t, both), Error);
}

TEST_CASE("loss terms stay in range")
{
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        const Index3 dims(3, 4, 2);
        const Batch<double> logits = random_logits(rng, dims, 2, trial % 5 * 10.0 + 0.1);
        const Batch<double> target{one_hot<double>(dims, random_labels(rng, 24, trial / 50.0)),
                                   one_hot<double>(dims, random_labels(rng, 24, 0.3))};
        const LossReport r = dice_ce_loss(logits, target);
        CHECK(r.ce_term >= 0.0);
        CHECK(r.dice_term >= 0.0);
        CHECK(r.dice_term <= 1.0 + 1e-9);
        CHECK(std::isfinite(r.total));
    }
}

TEST_CASE("logit gradient decomposes into softmax-CE and dice parts")
{
    std::mt19937_64 rng(6);
    const Index3 dims(5, 3, 2);
    const Eigen::Index n = dims.prod();
    const Batch<double> logits = random_logits(rng, dims, 2, 2.0);
    const Batch<double> target{one_hot<double>(dims, random_labels(rng, n, 0.4)),
                               one_hot<double>(dims, random_labels(rng, n, 0.2))};
    Batch<double> grad;
    const LossReport r = dice_ce_loss(logits, target, &grad);
    const double eps = r.epsilon;

    double inter = 0.0, sum = 0.0;
    std::vector<FeatureMap<double>> prob;
    for (std::size_t b = 0; b < 2; ++b) {
        prob.push_back(layers::softmax_channels(logits[b]));
        inter += (prob[b].data.row(1).array() * target[b].data.row(1).array()).sum();
        sum += prob[b].data.row(1).sum() + target[b].data.row(1).sum();
    }
    const double voxels = 2.0 * static_cast<double>(n);
    for (std::size_t b = 0; b < 2; ++b)
        for (Eigen::Index v = 0; v < n; ++v) {
            const double p1 = prob[b].data(1, v), p0 = prob[b].data(0, v), g1 = target[b].data(1, v);
            const double ddice_dp1 = -(2.0 * g1 * (sum + eps) - (2.0 * inter + eps)) / ((sum + eps) * (sum + eps));
            for (int c = 0; c < 2; ++c) {
                const double ce = (prob[b].data(c, v) - target[b].data(c, v)) / voxels;
                const double dice = ddice_dp1 * p1 * p0 * (c == 1 ? 1.0 : -1.0);
                CHECK(std::abs(grad[b].data(c, v) - (ce + dice)) <= 1e-12);
            }
        }

    // central differences on the logits themselves
    for (int k = 0; k < 20; ++k) {
        const std::size_t b = static_cast<std::size_t>(k % 2);
        const Eigen::Index idx = (k * 7) % (2 * n);
        Batch<double> plus = logits, minus = logits;
        const double h = 1e-6;
        plus[b].data.data()[idx] += h;
        minus[b].data.data()[idx] -= h;
        const double fd = (dice_ce_loss(plus, target).total - dice_ce_loss(minus, target).total) / (2 * h);
        CHECK(std::abs(fd - grad[b].data.data()[idx]) <= 1e-8);
    }
}

TEST_CASE("network gradients agree with finite differences in 64-bit")
{
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const testsupport::GradCheck g = testsupport::finite_difference_check<double>(seed, 50, 1e-6);
        INFO("seed ", seed, " reduced steps ", g.reduced_steps, " min step ", g.min_step);
        CHECK(g.probes == 50);
        CHECK(g.max_rel_error < 1e-5);
    }
}

TEST_CASE("network gradients agree with finite differences in 32-bit")
{
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const testsupport::GradCheck g = testsupport::finite_difference_check<float>(seed, 50, 1e-3);
        INFO("seed ", seed, " reduced steps ", g.reduced_steps, " min step ", g.min_step);
        CHECK(g.probes == 50);
        CHECK(g.max_rel_error < 1e-3);
    }
}

TEST_CASE("dead network has zero kernel gradients")
{
    UNetConfig cfg;
    cfg.num_resolutions = 2;
    cfg.base_channels = 2;
    NetParams<double> p = init_params<double>(cfg, 4);
    const ParamLayout lay = param_layout(cfg);
    for (std::size_t i = 0; i < p.tensors.size(); ++i)
        if (lay.tensors[i].name.ends_with(".weight"))
            p.tensors[i].setZero();
    const Index3 dims(8, 8, 8);
    const Batch<double> in{FeatureMap<double>(dims, 1)};
    std::mt19937_64 rng(1);
    const Batch<double> target{one_hot<double>(dims, random_labels(rng, dims.prod(), 0.3))};
    Tape<double> tape;
    Batch<double> dl;
    dice_ce_loss(forward(p, cfg, in, &tape), target, &dl);
    const NetGrads<double> g = backward(p, cfg, tape, dl);
    int kernels = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (lay.tensors[i].name.ends_with(".weight")) {
            CHECK(g[i].isZero(0.0));
            ++kernels;
        }
    CHECK(kernels > 1);
    CHECK_FALSE(g[static_cast<std::size_t>(lay.head_bias)].isZero(0.0));
}

TEST_CASE("nesterov update")
{
    Eigen::Matrix<double, 1, 1> theta(1.0), v(0.0);
    nesterov_update(theta, v, Eigen::Matrix<double, 1, 1>(theta(0)), 0.1, 0.9);
    CHECK(std::abs(theta(0) - 0.81) <= 1e-15);
    CHECK(std::abs(v(0) + 0.1) <= 1e-15);
    nesterov_update(theta, v, Eigen::Matrix<double, 1, 1>(theta(0)), 0.1, 0.9);
    CHECK(std::abs(v(0) + 0.171) <= 1e-15);
    CHECK(std::abs(theta(0) - 0.5751) <= 1e-15);

    UNetConfig cfg;
    cfg.num_resolutions = 2;
    cfg.base_channels = 2;
    const NetParams<float> start = init_params<float>(cfg, 5);
    NetGrads<float> grads = zero_grads(start);
    std::mt19937_64 rng(3);
    std::normal_distribution<float> nd;
    for (auto& gt : grads)
        for (Eigen::Index i = 0; i < gt.size(); ++i)
            gt.data()[i] = nd(rng);

    NetParams<float> plain = start;
    sgd_nesterov_step(plain, grads, 0.01, 0.0);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const Mat<float> expect = start.tensors[i] - 0.01f * grads[i];
        CHECK((plain.tensors[i].array() == expect.array()).all());
    }

    NetParams<float> moving = start;
    for (auto& vel : moving.velocity)
        vel.setConstant(0.5f);
    sgd_nesterov_step(moving, grads, 0.0, 0.9);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        CHECK((moving.velocity[i].array() == 0.45f).all());
        CHECK((moving.tensors[i].array() == (start.tensors[i].array() + 0.9f * 0.45f)).all());
    }

    NetParams<float> untouched = start;
    NetGrads<float> bad = grads;
    bad.back()(0, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(sgd_nesterov_step(untouched, bad, 0.01, 0.99), Error);
    for (std::size_t i = 0; i < grads.size(); ++i)
        CHECK((untouched.tensors[i].array() == start.tensors[i].array()).all());
    CHECK_THROWS_AS(sgd_nesterov_step(untouched, grads, 0.01, 1.0), Error);
    CHECK_THROWS_AS(sgd_nesterov_step(untouched, grads, -0.1, 0.5), Error);
}

TEST_CASE("polynomial learning rate")
{
    CHECK(poly_lr(0, 100, 0.01) == 0.01);
    CHECK(poly_lr(100, 100, 0.01) == 0.0);
    CHECK(std::abs(poly_lr(50, 100, 0.01) - 0.01 * std::pow(0.5, 0.9)) <= 1e-15);
    CHECK(std::abs(poly_lr(50, 100, 0.01) - 0.005359) < 5e-7);
    CHECK_THROWS_AS(poly_lr(101, 100, 0.01), Error);
}

TEST_CASE("gradient descent reduces the loss on a fixed batch")
{
    UNetConfig cfg;
    cfg.num_resolutions = 2;
    cfg.base_channels = 2;
    NetParams<float> p = init_params<float>(cfg, 7);
    const Index3 dims(16, 16, 16);
    std::mt19937_64 rng(7);
    std::normal_distribution<float> nd;
    Labels labels(dims.prod());
    Batch<float> in{FeatureMap<float>(dims, 1)};
    for (Eigen::Index z = 0; z < 16; ++z)
        for (Eigen::Index y = 0; y < 16; ++y)
            for (Eigen::Index x = 0; x < 16; ++x) {
                const Eigen::Index v = x + 16 * (y + 16 * z);
                labels[v] = (Vec3(x, y, z) - Vec3(8, 7, 9)).norm() < 4.5 ? 1 : 0;
                in[0].data(0, v) = nd(rng) * 0.5f + 2.0f * labels[v];
            }
    const Batch<float> target{one_hot<float>(dims, labels)};

    std::vector<double> losses;
    for (int step = 0; step < 200; ++step) {
        Tape<float> tape;
        Batch<float> dl;
        losses.push_back(dice_ce_loss(forward(p, cfg, in, &tape), target, &dl).total);
        sgd_nesterov_step(p, backward(p, cfg, tape, dl), 0.01, 0.9);
    }
    auto window = [&](int w) {
        double s = 0.0;
        for (int i = 10 * w; i < 10 * w + 10; ++i)
            s += losses[static_cast<std::size_t>(i)];
        return s / 10.0;
    };
    for (int w = 1; w < 20; ++w)
        CHECK(window(w) <= window(w - 1));
    CHECK(losses.back() < 0.5 * losses.front());
}
