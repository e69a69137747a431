#pragma once

#include <vector>

#include <Eigen/Core>

#include "aneuseg/volume.hpp"

namespace aneuseg {

/// Dense row-major matrix. Parameter tensors and feature maps share it.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One sample's activations: channels x voxels, voxels x-fastest over `dims`.
template <typename Scalar>
struct FeatureMap {
    Index3 dims = Index3::Ones();
    Mat<Scalar> data;

    FeatureMap() = default;
    FeatureMap(const Index3& d, Eigen::Index channels) : dims(d), data(Mat<Scalar>::Zero(channels, d.prod())) {}

    Eigen::Index channels() const { return data.rows(); }
    Eigen::Index voxels() const { return data.cols(); }
};

/// A mini-batch: one FeatureMap per sample, all with the same shape.
template <typename Scalar>
using Batch = std::vector<FeatureMap<Scalar>>;

}  // namespace aneuseg
