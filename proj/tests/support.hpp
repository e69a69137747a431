#pragma once

// Independent reference implementations and helpers shared by the unit tests
// and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "aneuseg/loss.hpp"
#include "aneuseg/metrics.hpp"
#include "aneuseg/unet.hpp"

namespace testsupport {

using namespace aneuseg;

using Voxel = std::tuple<std::int64_t, std::int64_t, std::int64_t>;

inline std::set<Voxel> voxel_set(const LabelMask& m)
{
    std::set<Voxel> s;
    const Index3& n = m.geom.dims;
    for (std::int64_t z = 0; z < n.z(); ++z)
        for (std::int64_t y = 0; y < n.y(); ++y)
            for (std::int64_t x = 0; x < n.x(); ++x)
                if (m.at(x, y, z))
                    s.insert({x, y, z});
    return s;
}

struct OracleMetrics {
    double jaccard, dice, precision, recall;
    bool distances;
    double hausdorff, mean;
};

inline double ratio(double num, double den)
{
    return den == 0.0 ? 1.0 : num / den;
}

// Set algebra for the overlap scores, all-pairs distances between explicitly
// enumerated surface voxels.
inline OracleMetrics oracle_metrics(const LabelMask& pred, const LabelMask& ref)
{
    const auto P = voxel_set(pred);
    const auto R = voxel_set(ref);
    std::vector<Voxel> inter, uni;
    std::set_intersection(P.begin(), P.end(), R.begin(), R.end(), std::back_inserter(inter));
    std::set_union(P.begin(), P.end(), R.begin(), R.end(), std::back_inserter(uni));
    const double tp = inter.size();
    const double fp = P.size() - tp;
    const double fn = R.size() - tp;
    OracleMetrics o{};
    o.jaccard = ratio(tp, static_cast<double>(uni.size()));
    o.dice = ratio(2 * tp, static_cast<double>(P.size() + R.size()));
    o.precision = ratio(tp, tp + fp);
    o.recall = ratio(tp, tp + fn);
    o.distances = !P.empty() && !R.empty();
    if (!o.distances)
        return o;

    const Index3& n = pred.geom.dims;
    const Vec3& sp = pred.geom.spacing;
    auto surface = [&](const std::set<Voxel>& s) {
        std::vector<Vec3> pts;
        for (const auto& [x, y, z] : s) {
            const Voxel nb[6] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z},
                                 {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
            bool edge = false;
            for (const auto& [a, b, c] : nb) {
                const bool inside = a >= 0 && b >= 0 && c >= 0 && a < n.x() && b < n.y() && c < n.z();
                edge = edge || !inside || !s.count({a, b, c});
            }
            if (edge)
                pts.push_back(Vec3(x * sp.x(), y * sp.y(), z * sp.z()));
        }
        return pts;
    };
    const auto sp_ = surface(P);
    const auto sr = surface(R);
    std::vector<double> all;
    double h = 0.0;
    auto directed = [&](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
        for (const Vec3& a : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3& b : to)
                best = std::min(best, (a - b).norm());
            all.push_back(best);
            h = std::max(h, best);
        }
    };
    directed(sp_, sr);
    directed(sr, sp_);
    double sum = 0.0;
    for (double d : all)
        sum += d;
    o.hausdorff = h;
    o.mean = sum / static_cast<double>(all.size());
    return o;
}

inline LabelMask random_mask(std::mt19937_64& rng, const Geometry& g, double density)
{
    std::bernoulli_distribution on(density);
    LabelMask m(g);
    for (Eigen::Index i = 0; i < m.voxels.size(); ++i)
        m.voxels[i] = on(rng) ? 1 : 0;
    return m;
}

// Central finite differences of the Dice + CE loss of a toy net against the
// analytic gradient computed in S, at `probes` randomly chosen scalars.
//
// The difference quotient is always evaluated in double at the (exactly
// representable) S parameter values, so it measures the S gradient rather
// than S rounding noise in the loss. The loss is only piecewise smooth
// (leaky ReLU kinks): when the activation sign pattern differs between the
// two evaluations, the segment crosses a kink and the quotient is not a
// derivative estimate, so the step is halved until it no longer does.
// Conv biases that feed an instance norm are skipped: their exact gradient
// is identically zero, where a relative error is meaningless.
struct GradCheck {
    double max_rel_error = 0.0;
    int probes = 0;
    int reduced_steps = 0;  // probes that needed a step below the initial one
    double min_step = 0.0;
};

template <typename S>
GradCheck finite_difference_check(std::uint64_t seed, int probes, double step)
{
    UNetConfig cfg;
    cfg.num_resolutions = 2;
    cfg.base_channels = 2;
    const Index3 dims(16, 16, 16);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);

    NetParams<S> params = init_params<S>(cfg, seed);
    // Move off the special init point (unit scales, zero shifts and biases).
    for (auto& t : params.tensors)
        for (Eigen::Index i = 0; i < t.size(); ++i)
            t.data()[i] += static_cast<S>(0.05 * nd(rng));

    Batch<S> input(1);
    input[0] = FeatureMap<S>(dims, 1);
    Eigen::Array<std::uint8_t, Eigen::Dynamic, 1> labels(dims.prod());
    for (Eigen::Index v = 0; v < dims.prod(); ++v) {
        input[0].data(0, v) = static_cast<S>(nd(rng));
        labels[v] = nd(rng) > 0.5 ? 1 : 0;
    }
    const Batch<S> target{one_hot<S>(dims, labels)};

    Batch<double> input_d(1);
    input_d[0].dims = dims;
    input_d[0].data = input[0].data.template cast<double>();
    const Batch<double> target_d{one_hot<double>(dims, labels)};
    struct Eval {
        double loss;
        std::vector<bool> signs;
    };
    auto eval = [&](const NetParams<S>& p) {
        Tape<double> tape;
        const Batch<double> logits = forward(p.template cast<double>(), cfg, input_d, &tape);
        Eval e{dice_ce_loss(logits, target_d).total, {}};
        for (const auto& u : tape.samples[0].units)
            for (Eigen::Index k = 0; k < u.output.data.size(); ++k)
                e.signs.push_back(u.output.data.data()[k] > 0.0);
        return e;
    };

    Tape<S> tape;
    const Batch<S> logits = forward(params, cfg, input, &tape);
    Batch<S> dlogits;
    dice_ce_loss(logits, target, &dlogits);
    const NetGrads<S> grads = backward(params, cfg, tape, dlogits);

    const ParamLayout lay = param_layout(cfg);
    std::set<int> skip;
    if (cfg.norm == NormKind::Instance) {
        for (const auto& level : lay.encoder)
            for (const auto& u : level)
                skip.insert(u.bias);
        for (const auto& level : lay.decoder)
            for (const auto& u : level)
                skip.insert(u.bias);
    }
    std::vector<std::pair<int, Eigen::Index>> pool;
    for (int t = 0; t < static_cast<int>(params.tensors.size()); ++t)
        if (!skip.count(t))
            for (Eigen::Index i = 0; i < params.tensors[t].size(); ++i)
                pool.push_back({t, i});

    GradCheck out;
    out.min_step = step;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int k = 0; k < probes; ++k) {
        const auto [t, i] = pool[pick(rng)];
        double fd = 0.0;
        double hk = step;
        for (int halvings = 0;; ++halvings, hk /= 2) {
            NetParams<S> plus = params, minus = params;
            plus.tensors[t].data()[i] += static_cast<S>(hk);
            minus.tensors[t].data()[i] -= static_cast<S>(hk);
            const double h =
                static_cast<double>(plus.tensors[t].data()[i]) - static_cast<double>(minus.tensors[t].data()[i]);
            const Eval ep = eval(plus);
            const Eval em = eval(minus);
            fd = (ep.loss - em.loss) / h;
            if (ep.signs == em.signs || halvings == 30) {
                if (halvings > 0)
                    ++out.reduced_steps;
                out.min_step = std::min(out.min_step, hk);
                break;
            }
        }
        const double an = static_cast<double>(grads[t].data()[i]);
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-12});
        out.max_rel_error = std::max(out.max_rel_error, rel);
        ++out.probes;
    }
    return out;
}

}  // namespace testsupport
