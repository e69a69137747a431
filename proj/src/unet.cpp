#include "aneuseg/unet.hpp"

#include <cmath>

#include "aneuseg/patch_plan.hpp"
#include "aneuseg/rng.hpp"

namespace aneuseg {

std::string to_string(NormKind n)
{
    return n == NormKind::Instance ? "instance" : "none";
}

NormKind parse_norm(const std::string& s)
{
    if (s == "instance")
        return NormKind::Instance;
    if (s == "none")
        return NormKind::None;
    throw Error("norm must be 'instance' or 'none' (got '" + s + "')");
}

int UNetConfig::channels(int level) const
{
    const std::int64_t c = static_cast<std::int64_t>(base_channels) << level;
    return static_cast<int>(std::min<std::int64_t>(c, channel_cap));
}

void UNetConfig::validate() const
{
    if (num_resolutions < 2 || num_resolutions > 12)
        throw Error("net: num_resolutions must be in [2, 12]");
    if (in_channels < 1 || num_classes < 2 || base_channels < 1 || channel_cap < 1)
        throw Error("net: channel settings must be positive (num_classes >= 2)");
}

std::int64_t ParamLayout::scalar_count() const
{
    std::int64_t n = 0;
    for (const auto& t : tensors)
        n += t.rows * t.cols;
    return n;
}

ParamLayout param_layout(const UNetConfig& cfg)
{
    cfg.validate();
    ParamLayout lay;
    auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
        lay.tensors.push_back({std::move(name), rows, cols});
        return static_cast<int>(lay.tensors.size() - 1);
    };
    auto unit = [&](const std::string& prefix, int cin, int cout, int stride) {
        ConvUnit u;
        u.stride = stride;
        u.weight = add(prefix + ".weight", cout, static_cast<Eigen::Index>(cin) * 27);
        u.bias = add(prefix + ".bias", cout, 1);
        if (cfg.norm == NormKind::Instance) {
            u.gamma = add(prefix + ".norm.gamma", cout, 1);
            u.beta = add(prefix + ".norm.beta", cout, 1);
        }
        return u;
    };

    const int levels = cfg.num_resolutions;
    lay.encoder.resize(levels);
    for (int r = 0; r < levels; ++r) {
        const std::string p = "enc" + std::to_string(r);
        const int c = cfg.channels(r);
        if (r == 0) {
            lay.encoder[r].push_back(unit(p + ".conv0", cfg.in_channels, c, 1));
        } else {
            lay.encoder[r].push_back(unit(p + ".down", cfg.channels(r - 1), c, 2));
            lay.encoder[r].push_back(unit(p + ".conv0", c, c, 1));
        }
        lay.encoder[r].push_back(unit(p + ".conv1", c, c, 1));
    }
    lay.up.resize(levels - 1);
    lay.decoder.resize(levels - 1);
    for (int r = levels - 2; r >= 0; --r) {
        const std::string p = "dec" + std::to_string(r);
        const int c = cfg.channels(r);
        const int below = cfg.channels(r + 1);
        lay.up[r].weight = add(p + ".up.weight", 8 * c, below);
        lay.up[r].bias = add(p + ".up.bias", c, 1);
        lay.decoder[r].push_back(unit(p + ".conv0", 2 * c, c, 1));
        lay.decoder[r].push_back(unit(p + ".conv1", c, c, 1));
    }
    lay.head_weight = add("head.weight", cfg.num_classes, cfg.channels(0));
    lay.head_bias = add("head.bias", cfg.num_classes, 1);
    return lay;
}

std::vector<Index3> level_shapes(const UNetConfig& cfg, const Index3& dims)
{
    std::vector<Index3> out;
    for (int r = 0; r < cfg.num_resolutions; ++r)
        out.push_back(dims / (std::int64_t{1} << r));
    return out;
}

template <typename Scalar>
NetParams<Scalar> init_params(const UNetConfig& cfg, std::uint64_t seed)
{
    const ParamLayout lay = param_layout(cfg);
    std::mt19937_64 rng = make_rng(seed, "net.init");
    std::normal_distribution<double> normal(0.0, 1.0);

    NetParams<Scalar> p;
    p.tensors.resize(lay.tensors.size());
    p.velocity.resize(lay.tensors.size());
    for (std::size_t i = 0; i < lay.tensors.size(); ++i) {
        p.tensors[i] = Mat<Scalar>::Zero(lay.tensors[i].rows, lay.tensors[i].cols);
        p.velocity[i] = Mat<Scalar>::Zero(lay.tensors[i].rows, lay.tensors[i].cols);
    }
    auto fill_kernel = [&](int idx, double fan_in) {
        const double sd = std::sqrt(2.0 / fan_in);
        Mat<Scalar>& t = p.tensors[static_cast<std::size_t>(idx)];
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index c = 0; c < t.cols(); ++c)
                t(r, c) = static_cast<Scalar>(sd * normal(rng));
    };
    auto init_unit = [&](const ConvUnit& u) {
        fill_kernel(u.weight, static_cast<double>(p.tensors[static_cast<std::size_t>(u.weight)].cols()));
        if (u.gamma >= 0)
            p.tensors[static_cast<std::size_t>(u.gamma)].setOnes();
    };
    for (const auto& level : lay.encoder)
        for (const auto& u : level)
            init_unit(u);
    for (int r = cfg.num_resolutions - 2; r >= 0; --r) {
        fill_kernel(lay.up[r].weight, static_cast<double>(cfg.channels(r + 1)));
        for (const auto& u : lay.decoder[r])
            init_unit(u);
    }
    fill_kernel(lay.head_weight, static_cast<double>(cfg.channels(0)));
    return p;
}

template <typename Scalar>
NetGrads<Scalar> zero_grads(const NetParams<Scalar>& params)
{
    NetGrads<Scalar> g;
    g.reserve(params.tensors.size());
    for (const auto& t : params.tensors)
        g.push_back(Mat<Scalar>::Zero(t.rows(), t.cols()));
    return g;
}

namespace {

template <typename Scalar>
const Mat<Scalar>& at(const NetParams<Scalar>& p, int i)
{
    return p.tensors[static_cast<std::size_t>(i)];
}

template <typename Scalar>
FeatureMap<Scalar> run_unit(const NetParams<Scalar>& p, const ConvUnit& u, const FeatureMap<Scalar>& in,
                            typename Tape<Scalar>::Sample* rec)
{
    FeatureMap<Scalar> h = layers::conv3d(in, at(p, u.weight), at(p, u.bias), u.stride);
    layers::NormCache<Scalar> cache;
    if (u.gamma >= 0)
        h = layers::instance_norm(h, at(p, u.gamma), at(p, u.beta), rec ? &cache : nullptr);
    layers::leaky_relu_inplace(h);
    if (rec)
        rec->units.push_back({in, std::move(cache), h});
    return h;
}

template <typename Scalar>
FeatureMap<Scalar> concat(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b)
{
    FeatureMap<Scalar> out;
    out.dims = a.dims;
    out.data.resize(a.channels() + b.channels(), a.voxels());
    out.data.topRows(a.channels()) = a.data;
    out.data.bottomRows(b.channels()) = b.data;
    return out;
}

// grad holds dL/d(unit output); returns dL/d(unit input) unless `need_input` is false.
template <typename Scalar>
FeatureMap<Scalar> unit_backward(const NetParams<Scalar>& p, const ConvUnit& u, const typename Tape<Scalar>::Unit& rec,
                                 FeatureMap<Scalar> grad, NetGrads<Scalar>& g, bool need_input)
{
    auto gi = [&](int i) -> Mat<Scalar>& { return g[static_cast<std::size_t>(i)]; };
    layers::leaky_relu_backward(rec.output, grad);
    if (u.gamma >= 0)
        layers::instance_norm_backward(rec.norm, at(p, u.gamma), grad, gi(u.gamma), gi(u.beta));
    FeatureMap<Scalar> din;
    layers::conv3d_backward(rec.input, at(p, u.weight), grad, u.stride, gi(u.weight), gi(u.bias),
                            need_input ? &din : nullptr);
    return din;
}

}  // namespace

template <typename Scalar>
Batch<Scalar> forward(const NetParams<Scalar>& params, const UNetConfig& cfg, const Batch<Scalar>& input,
                      Tape<Scalar>* tape)
{
    const ParamLayout lay = param_layout(cfg);
    if (params.tensors.size() != lay.tensors.size())
        throw Error("forward: parameter list does not match config");
    if (input.empty())
        throw Error("forward: empty batch");
    const Index3 dims = input.front().dims;
    if (!patch_is_valid(dims, cfg.num_resolutions, PatchSpec{}.min_bottleneck))
        throw Error("forward: input shape is not valid for " + std::to_string(cfg.num_resolutions) + " resolutions");
    if (tape) {
        tape->samples.clear();
        tape->level_dims = level_shapes(cfg, dims);
    }

    const int levels = cfg.num_resolutions;
    Batch<Scalar> out;
    for (const auto& x : input) {
        if (x.dims != dims || x.channels() != cfg.in_channels)
            throw Error("forward: inconsistent input shape in batch");
        typename Tape<Scalar>::Sample* rec = nullptr;
        if (tape) {
            tape->samples.emplace_back();
            rec = &tape->samples.back();
        }
        std::vector<FeatureMap<Scalar>> skips(static_cast<std::size_t>(levels));
        FeatureMap<Scalar> h = x;
        for (int r = 0; r < levels; ++r) {
            for (const auto& u : lay.encoder[r])
                h = run_unit(params, u, h, rec);
            if (r < levels - 1)
                skips[r] = h;
        }
        for (int r = levels - 2; r >= 0; --r) {
            if (rec)
                rec->up_input.push_back(h);
            FeatureMap<Scalar> up = layers::upconv2(h, at(params, lay.up[r].weight), at(params, lay.up[r].bias));
            h = concat(up, skips[r]);
            for (const auto& u : lay.decoder[r])
                h = run_unit(params, u, h, rec);
        }
        if (rec)
            rec->head_input = h;
        out.push_back(layers::conv1(h, at(params, lay.head_weight), at(params, lay.head_bias)));
    }
    return out;
}

template <typename Scalar>
NetGrads<Scalar> backward(const NetParams<Scalar>& params, const UNetConfig& cfg, const Tape<Scalar>& tape,
                          const Batch<Scalar>& dlogits)
{
    const ParamLayout lay = param_layout(cfg);
    if (dlogits.size() != tape.samples.size())
        throw Error("backward: gradient batch does not match tape");
    NetGrads<Scalar> g = zero_grads(params);
    auto gi = [&](int i) -> Mat<Scalar>& { return g[static_cast<std::size_t>(i)]; };
    const int levels = cfg.num_resolutions;

    std::size_t encoder_units = 0;
    for (const auto& level : lay.encoder)
        encoder_units += level.size();

    for (std::size_t s = 0; s < dlogits.size(); ++s) {
        const auto& rec = tape.samples[s];
        FeatureMap<Scalar> dh;
        layers::conv1_backward(rec.head_input, at(params, lay.head_weight), dlogits[s], gi(lay.head_weight),
                               gi(lay.head_bias), dh);

        // Decoder units were recorded for r = R-2 .. 0; walk them back from r = 0.
        std::size_t unit_idx = rec.units.size();
        std::vector<FeatureMap<Scalar>> dskip(static_cast<std::size_t>(levels));
        for (int r = 0; r <= levels - 2; ++r) {
            for (auto it = lay.decoder[r].rbegin(); it != lay.decoder[r].rend(); ++it)
                dh = unit_backward(params, *it, rec.units[--unit_idx], std::move(dh), g, true);
            const Eigen::Index c = cfg.channels(r);
            dskip[r].dims = dh.dims;
            dskip[r].data = dh.data.bottomRows(dh.channels() - c);
            FeatureMap<Scalar> dup;
            dup.dims = dh.dims;
            dup.data = dh.data.topRows(c);
            const std::size_t up_slot = static_cast<std::size_t>(levels - 2 - r);
            layers::upconv2_backward(rec.up_input[up_slot], at(params, lay.up[r].weight), dup, gi(lay.up[r].weight),
                                     gi(lay.up[r].bias), dh);
        }
        if (unit_idx != encoder_units)
            throw Error("backward: tape layout mismatch");
        for (int r = levels - 1; r >= 0; --r) {
            if (r < levels - 1)
                dh.data += dskip[r].data;
            const auto& units = lay.encoder[r];
            for (std::size_t k = units.size(); k-- > 0;) {
                const bool first = r == 0 && k == 0;
                dh = unit_backward(params, units[k], rec.units[--unit_idx], std::move(dh), g, !first);
            }
        }
    }
    return g;
}

template NetParams<float> init_params(const UNetConfig&, std::uint64_t);
template NetParams<double> init_params(const UNetConfig&, std::uint64_t);
template NetGrads<float> zero_grads(const NetParams<float>&);
template NetGrads<double> zero_grads(const NetParams<double>&);
template Batch<float> forward(const NetParams<float>&, const UNetConfig&, const Batch<float>&, Tape<float>*);
template Batch<double> forward(const NetParams<double>&, const UNetConfig&, const Batch<double>&, Tape<double>*);
template NetGrads<float> backward(const NetParams<float>&, const UNetConfig&, const Tape<float>&, const Batch<float>&);
template NetGrads<double> backward(const NetParams<double>&, const UNetConfig&, const Tape<double>&,
                                   const Batch<double>&);

}  // namespace aneuseg
