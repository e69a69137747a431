#include "aneuseg/inference.hpp"

#include "aneuseg/layers.hpp"

namespace aneuseg {

PatchModel network_model(const NetParams<float>& params, const UNetConfig& cfg)
{
    return [&params, cfg](const FeatureMap<float>& patch) {
        Batch<float> in{patch};
        return std::move(forward(params, cfg, in).front());
    };
}

Volume3 ProbabilityMap::foreground() const
{
    return Volume3(geom, probs.row(1).transpose().array());
}

ProbabilityMap stitch_probabilities(const PatchModel& model, const Volume3& vol, const Index3& patch_size,
                                    const InferConfig& cfg)
{
    const TilePlan plan = tile_sliding_window(vol.geom.dims, patch_size, cfg.overlap);
    const Volume3 padded = pad_mirror(vol, plan.pad_low, plan.pad_high);
    const Eigen::ArrayXd window = gaussian_window(patch_size, cfg.sigma_scale);
    const Geometry& pg = padded.geom;

    Eigen::ArrayXXd acc;
    Eigen::ArrayXd weight = Eigen::ArrayXd::Zero(pg.numel());
    for (const Index3& off : plan.offsets) {
        const Volume3 tile = crop(padded, off, patch_size);
        FeatureMap<float> input;
        input.dims = patch_size;
        input.data = tile.voxels.matrix().transpose();
        const FeatureMap<float> logits = model(input);
        if (logits.voxels() != patch_size.prod())
            throw Error("stitch: model output does not match the patch size");
        const FeatureMap<float> probs = layers::softmax_channels(logits);
        if (acc.size() == 0)
            acc = Eigen::ArrayXXd::Zero(probs.channels(), pg.numel());

        std::int64_t k = 0;
        for (std::int64_t z = 0; z < patch_size.z(); ++z)
            for (std::int64_t y = 0; y < patch_size.y(); ++y) {
                const std::int64_t row = pg.index(off.x(), off.y() + y, off.z() + z);
                for (std::int64_t x = 0; x < patch_size.x(); ++x, ++k) {
                    const double w = window[k];
                    weight[row + x] += w;
                    for (Eigen::Index c = 0; c < probs.channels(); ++c)
                        acc(c, row + x) += w * static_cast<double>(probs.data(c, k));
                }
            }
    }

    ProbabilityMap out;
    out.geom = vol.geom;
    out.probs.resize(acc.rows(), vol.geom.numel());
    const Index3& n = vol.geom.dims;
    for (std::int64_t z = 0; z < n.z(); ++z)
        for (std::int64_t y = 0; y < n.y(); ++y)
            for (std::int64_t x = 0; x < n.x(); ++x) {
                const std::int64_t src = pg.index(x + plan.pad_low.x(), y + plan.pad_low.y(), z + plan.pad_low.z());
                const std::int64_t dst = vol.geom.index(x, y, z);
                for (Eigen::Index c = 0; c < acc.rows(); ++c)
                    out.probs(c, dst) = static_cast<float>(acc(c, src) / weight[src]);
            }
    return out;
}

Prediction finalize(const ProbabilityMap& prepped, const Geometry& native)
{
    Prediction p;
    p.probability = resample_to(prepped.foreground(), native, 1);
    p.probability.voxels = p.probability.voxels.max(0.0f).min(1.0f);
    p.mask = LabelMask(native, (p.probability.voxels >= 0.5f).cast<std::uint8_t>());
    return p;
}

Volume3 preprocess_image(const Volume3& vol, const PreprocessConfig& cfg)
{
    return znormalize(resample_image(vol, cfg));
}

Prediction predict_volume(const NetParams<float>& params, const UNetConfig& cfg, const Volume3& vol,
                          const Index3& patch_size, const PreprocessConfig& pcfg, const InferConfig& icfg)
{
    return ensemble_predict(std::vector<PatchModel>{network_model(params, cfg)}, vol, patch_size, pcfg, icfg);
}

ProbabilityMap average_probabilities(const std::vector<ProbabilityMap>& maps)
{
    if (maps.empty())
        throw Error("ensemble: no members");
    Eigen::ArrayXXd sum = maps.front().probs.cast<double>().array();
    for (std::size_t i = 1; i < maps.size(); ++i) {
        if (maps[i].probs.rows() != sum.rows() || maps[i].probs.cols() != sum.cols())
            throw Error("ensemble: member probability maps differ in shape");
        sum += maps[i].probs.cast<double>().array();
    }
    ProbabilityMap out;
    out.geom = maps.front().geom;
    out.probs = (sum / static_cast<double>(maps.size())).cast<float>().matrix();
    return out;
}

Prediction ensemble_predict(const std::vector<PatchModel>& models, const Volume3& vol, const Index3& patch_size,
                            const PreprocessConfig& pcfg, const InferConfig& icfg)
{
    if (models.empty())
        throw Error("ensemble: at least one model is required");
    const Volume3 prepped = preprocess_image(vol, pcfg);
    std::vector<ProbabilityMap> maps;
    for (const auto& m : models)
        maps.push_back(stitch_probabilities(m, prepped, patch_size, icfg));
    return finalize(average_probabilities(maps), vol.geom);
}

Prediction ensemble_predict(const std::vector<Checkpoint>& checkpoints, const Volume3& vol, const InferConfig& icfg)
{
    if (checkpoints.empty())
        throw Error("ensemble: at least one checkpoint is required");
    const Checkpoint& first = checkpoints.front();
    std::vector<PatchModel> models;
    for (const Checkpoint& c : checkpoints) {
        if (!(c.net == first.net) || c.patch_size != first.patch_size ||
            !c.preprocess.target_spacing.isApprox(first.preprocess.target_spacing) ||
            c.preprocess.image_order != first.preprocess.image_order)
            throw Error("ensemble: checkpoints have incompatible configurations");
        if (!patch_is_valid(c.patch_size, c.net.num_resolutions, PatchSpec{}.min_bottleneck))
            throw Error("ensemble: checkpoint patch size is not valid for its network");
        models.push_back(network_model(c.params, c.net));
    }
    return ensemble_predict(models, vol, first.patch_size, first.preprocess, icfg);
}

}  // namespace aneuseg
