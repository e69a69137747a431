#include "aneuseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "aneuseg/loss.hpp"
#include "aneuseg/metrics.hpp"
#include "aneuseg/optim.hpp"
#include "aneuseg/rng.hpp"

namespace aneuseg {

int FoldSplit::fold_of(const std::string& case_id) const
{
    for (std::size_t f = 0; f < folds.size(); ++f)
        if (std::binary_search(folds[f].begin(), folds[f].end(), case_id))
            return static_cast<int>(f);
    return -1;
}

FoldSplit split_folds(std::vector<std::string> case_ids, int k, std::uint64_t seed)
{
    if (k < 2)
        throw Error("split: need at least 2 folds");
    if (case_ids.size() < static_cast<std::size_t>(k))
        throw Error("split: " + std::to_string(case_ids.size()) + " cases cannot fill " + std::to_string(k) +
                    " folds");
    std::sort(case_ids.begin(), case_ids.end());
    if (std::adjacent_find(case_ids.begin(), case_ids.end()) != case_ids.end())
        throw Error("split: duplicate case id");
    std::mt19937_64 rng = make_rng(seed, "split");
    std::shuffle(case_ids.begin(), case_ids.end(), rng);

    FoldSplit s;
    s.k = k;
    s.seed = seed;
    s.folds.resize(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < case_ids.size(); ++i)
        s.folds[i % static_cast<std::size_t>(k)].push_back(case_ids[i]);
    for (auto& f : s.folds)
        std::sort(f.begin(), f.end());
    return s;
}

void OptimizerConfig::validate() const
{
    if (!(lr0 >= 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(power > 0.0) || !(epsilon > 0.0))
        throw Error("optimizer: need lr0 >= 0, 0 <= momentum < 1, power > 0, epsilon > 0");
}

PatchSpec TrainRunConfig::patch_spec() const
{
    return validate_patch(patch_size, net.num_resolutions, PatchSpec{}.min_bottleneck, batch_size);
}

void TrainRunConfig::validate() const
{
    if (epochs < 1 || iterations_per_epoch < 1 || batch_size < 1 || val_every < 1)
        throw Error("train: epochs, iterations_per_epoch, batch_size and val_every must be positive");
    if (!(fg_probability >= 0.0 && fg_probability <= 1.0))
        throw Error("train: fg_probability must be in [0, 1]");
    net.validate();
    optimizer.validate();
    augment.validate();
    (void)patch_spec();
}

double validation_dice(const NetParams<float>& params, const UNetConfig& net, const Case& c, const Index3& patch_size,
                       const InferConfig& infer)
{
    const ProbabilityMap probs = stitch_probabilities(network_model(params, net), c.image, patch_size, infer);
    const LabelMask pred(c.image.geom, (probs.probs.row(1).transpose().array() >= 0.5f).cast<std::uint8_t>());
    return overlap_metrics(pred, c.label).dice;
}

TrainResult train_cases(const std::vector<Case>& data, const std::vector<std::size_t>& train_idx,
                        const std::vector<std::size_t>& val_idx, const TrainRunConfig& cfg, std::uint64_t stream,
                        const EpochCallback& on_epoch)
{
    cfg.validate();
    if (train_idx.empty())
        throw Error("train: no training cases");
    const PatchSpec spec = cfg.patch_spec();
    const std::set<std::size_t> val_set(val_idx.begin(), val_idx.end());
    for (std::size_t i : train_idx)
        if (i >= data.size() || val_set.count(i))
            throw Error("train: training index " + std::to_string(i) + " is invalid or also used for validation");

    TrainResult result;
    result.params = init_params<float>(cfg.net, derive_seed(cfg.seed, "net", stream));
    std::mt19937_64 sampler = make_rng(cfg.seed, "train.sample", stream);
    std::uniform_int_distribution<std::size_t> pick(0, train_idx.size() - 1);

    int iteration = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = poly_lr(epoch - 1, cfg.epochs, cfg.optimizer.lr0, cfg.optimizer.power);
        double loss_sum = 0.0;
        for (int it = 0; it < cfg.iterations_per_epoch; ++it, ++iteration) {
            Batch<float> input;
            Batch<float> target;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const std::size_t ci = train_idx[pick(sampler)];
                if (val_set.count(ci))
                    throw Error("train: validation case " + data[ci].id + " drawn for training");
                PatchPair pair = sample_training_patch(data[ci].image, data[ci].label, spec, sampler,
                                                       cfg.fg_probability);
                const auto patch_no = static_cast<std::uint64_t>(iteration) * cfg.batch_size + b;
                std::mt19937_64 aug_rng = make_rng(cfg.seed, "augment", (stream << 40) ^ patch_no);
                pair = augment_pair(pair, cfg.augment, aug_rng);
                FeatureMap<float> x;
                x.dims = spec.patch_size;
                x.data = pair.image.voxels.matrix().transpose();
                input.push_back(std::move(x));
                target.push_back(one_hot<float>(spec.patch_size, pair.label.voxels, cfg.net.num_classes));
            }
            Tape<float> tape;
            const Batch<float> logits = forward(result.params, cfg.net, input, &tape);
            Batch<float> dlogits;
            const LossReport loss = dice_ce_loss(logits, target, &dlogits, cfg.optimizer.epsilon);
            if (!std::isfinite(loss.total))
                throw TrainingError("train: non-finite loss at iteration " + std::to_string(iteration), iteration);
            if (iteration == 0)
                result.first_iteration_loss = loss.total;
            loss_sum += loss.total;
            const NetGrads<float> grads = backward(result.params, cfg.net, tape, dlogits);
            try {
                sgd_nesterov_step(result.params, grads, lr, cfg.optimizer.momentum);
            } catch (const Error& e) {
                throw TrainingError(std::string(e.what()) + " at iteration " + std::to_string(iteration), iteration);
            }
            ++result.steps;
        }

        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.train_loss = loss_sum / cfg.iterations_per_epoch;
        if (!val_idx.empty() && (epoch % cfg.val_every == 0 || epoch == cfg.epochs)) {
            double dice = 0.0;
            for (std::size_t vi : val_idx)
                dice += validation_dice(result.params, cfg.net, data[vi], spec.patch_size, cfg.infer);
            log.val_dice = dice / static_cast<double>(val_idx.size());
        }
        result.log.push_back(log);
        if (on_epoch)
            on_epoch(log);
    }
    return result;
}

TrainResult train_fold(const std::vector<Case>& data, const FoldSplit& split, int fold, const TrainRunConfig& cfg,
                       const EpochCallback& on_epoch)
{
    if (fold < 0 || fold >= static_cast<int>(split.folds.size()))
        throw Error("train: fold index " + std::to_string(fold) + " out of range");
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int f = split.fold_of(data[i].id);
        if (f < 0)
            throw Error("train: case " + data[i].id + " is not in the split");
        (f == fold ? val_idx : train_idx).push_back(i);
    }
    return train_cases(data, train_idx, val_idx, cfg, static_cast<std::uint64_t>(fold), on_epoch);
}

}  // namespace aneuseg
