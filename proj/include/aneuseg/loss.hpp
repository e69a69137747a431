#pragma once

#include "aneuseg/tensor.hpp"

namespace aneuseg {

struct LossReport {
    double total = 0.0;
    double ce_term = 0.0;
    double dice_term = 0.0;
    double epsilon = 1e-5;
};

/// Foreground channel used by the Dice term.
inline constexpr int kForegroundChannel = 1;

/// Unweighted sum of
///   CE   = mean over all voxels of the batch of -log max(p_true, 1e-12)
///   Dice = 1 - (2 sum p_fg g_fg + eps) / (sum p_fg + sum g_fg + eps)
/// with the Dice sums taken over the whole batch (batch Dice).
/// `target` is one-hot with the same shape as `logits`. When `dlogits` is
/// non-null it receives dL/dlogits (the clamp is treated as inactive).
template <typename Scalar>
LossReport dice_ce_loss(const Batch<Scalar>& logits, const Batch<Scalar>& target, Batch<Scalar>* dlogits = nullptr,
                        double epsilon = 1e-5);

/// One-hot encoding of a binary label array (background channel 0).
template <typename Scalar>
FeatureMap<Scalar> one_hot(const Index3& dims, const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>& labels,
                           int num_classes = 2);

extern template LossReport dice_ce_loss(const Batch<float>&, const Batch<float>&, Batch<float>*, double);
extern template LossReport dice_ce_loss(const Batch<double>&, const Batch<double>&, Batch<double>*, double);
extern template FeatureMap<float> one_hot(const Index3&, const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>&, int);
extern template FeatureMap<double> one_hot(const Index3&, const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>&, int);

}  // namespace aneuseg
