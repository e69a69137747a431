#pragma once

#include <functional>
#include <vector>

#include "aneuseg/checkpoint.hpp"
#include "aneuseg/patch_plan.hpp"
#include "aneuseg/preprocess.hpp"
#include "aneuseg/tensor.hpp"
#include "aneuseg/unet.hpp"

namespace aneuseg {

struct InferConfig {
    double overlap = 0.5;
    double sigma_scale = 0.125;
};

/// Maps one input patch (1 channel) to logits (classes x patch voxels).
using PatchModel = std::function<FeatureMap<float>(const FeatureMap<float>&)>;

PatchModel network_model(const NetParams<float>& params, const UNetConfig& cfg);

/// Per-voxel class probabilities on a grid.
struct ProbabilityMap {
    Geometry geom;
    Mat<float> probs;  // classes x voxels

    Volume3 foreground() const;
};

/// Sliding-window prediction on an already preprocessed volume: every tile's
/// softmax is weighted by the Gaussian window and accumulated in tile order,
/// then divided by the accumulated weight and cropped back to `vol`'s grid.
ProbabilityMap stitch_probabilities(const PatchModel& model, const Volume3& vol, const Index3& patch_size,
                                    const InferConfig& cfg = {});

struct Prediction {
    LabelMask mask;      // native geometry
    Volume3 probability; // foreground probability, native geometry
};

/// Back to native geometry: linear resampling of the foreground
/// probability, then foreground where p >= 0.5.
Prediction finalize(const ProbabilityMap& prepped, const Geometry& native);

/// Resample + z-score, exactly as done before training.
Volume3 preprocess_image(const Volume3& vol, const PreprocessConfig& cfg);

Prediction predict_volume(const NetParams<float>& params, const UNetConfig& cfg, const Volume3& vol,
                          const Index3& patch_size, const PreprocessConfig& pcfg, const InferConfig& icfg = {});

/// Arithmetic mean of the members' stitched probabilities on the common
/// preprocessed grid, then finalize(). The mean is order independent.
Prediction ensemble_predict(const std::vector<PatchModel>& models, const Volume3& vol, const Index3& patch_size,
                            const PreprocessConfig& pcfg, const InferConfig& icfg = {});

/// Same, from checkpoints; throws Error unless all share net, patch and
/// preprocessing settings.
Prediction ensemble_predict(const std::vector<Checkpoint>& checkpoints, const Volume3& vol,
                            const InferConfig& icfg = {});

/// Mean of probability maps on one grid; float inputs summed exactly in double.
ProbabilityMap average_probabilities(const std::vector<ProbabilityMap>& maps);

}  // namespace aneuseg
