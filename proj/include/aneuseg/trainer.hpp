#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aneuseg/augment.hpp"
#include "aneuseg/inference.hpp"
#include "aneuseg/patch_plan.hpp"
#include "aneuseg/unet.hpp"

namespace aneuseg {

struct FoldSplit {
    int k = 5;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::string>> folds;  // each sorted

    /// Fold index of `case_id`, or -1.
    int fold_of(const std::string& case_id) const;
};

/// Seeded shuffle, then round-robin dealing into k folds.
FoldSplit split_folds(std::vector<std::string> case_ids, int k, std::uint64_t seed);

struct OptimizerConfig {
    double lr0 = 0.01;
    double momentum = 0.99;
    double power = 0.9;
    double epsilon = 1e-5;  // Dice smoothing

    void validate() const;
};

struct TrainRunConfig {
    int epochs = 50;
    int iterations_per_epoch = 25;
    int batch_size = 2;
    int val_every = 10;
    double fg_probability = 1.0 / 3.0;
    Index3 patch_size = Index3(192, 224, 192);
    UNetConfig net;
    OptimizerConfig optimizer;
    AugmentConfig augment;
    InferConfig infer;
    std::uint64_t seed = 0;

    PatchSpec patch_spec() const;
    void validate() const;
};

/// A preprocessed training case.
struct Case {
    std::string id;
    Volume3 image;
    LabelMask label;
};

struct EpochLog {
    int epoch = 0;  // 1-based
    double lr = 0.0;
    double train_loss = 0.0;  // mean over the epoch's iterations
    std::optional<double> val_dice;
};

struct TrainResult {
    NetParams<float> params;
    std::vector<EpochLog> log;
    double first_iteration_loss = 0.0;
    int steps = 0;
};

/// Raised when the loss becomes non-finite; `iteration` is 0-based over the run.
class TrainingError : public Error {
public:
    TrainingError(const std::string& msg, int iteration) : Error(msg), iteration(iteration) {}
    int iteration;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains on `train_idx` cases, validating on `val_idx` cases (Dice of the
/// full sliding-window prediction) every val_every epochs and at the last
/// epoch. `stream` separates the random streams of different folds.
TrainResult train_cases(const std::vector<Case>& data, const std::vector<std::size_t>& train_idx,
                        const std::vector<std::size_t>& val_idx, const TrainRunConfig& cfg, std::uint64_t stream,
                        const EpochCallback& on_epoch = {});

/// Trains on every fold except `fold`, validating on `fold`.
TrainResult train_fold(const std::vector<Case>& data, const FoldSplit& split, int fold, const TrainRunConfig& cfg,
                       const EpochCallback& on_epoch = {});

/// Sliding-window Dice of one preprocessed case (foreground where p >= 0.5).
double validation_dice(const NetParams<float>& params, const UNetConfig& net, const Case& c, const Index3& patch_size,
                       const InferConfig& infer);

}  // namespace aneuseg
