#pragma once

#include "aneuseg/tensor.hpp"

namespace aneuseg::layers {

/// Output extent of a 3x3x3 convolution with zero padding 1.
inline Index3 conv_output_dims(const Index3& in, int stride)
{
    return ((in.array() - 1) / stride + 1).matrix();
}

/// 3x3x3 convolution, zero padding 1, stride 1 or 2.
/// weight: Cout x (Cin * 27), column c * 27 + (kz * 9 + ky * 3 + kx).
/// bias: Cout x 1.
template <typename Scalar>
FeatureMap<Scalar> conv3d(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const Mat<Scalar>& bias, int stride);

/// Accumulates dweight/dbias and, when `din` is non-null, writes the input gradient.
template <typename Scalar>
void conv3d_backward(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const FeatureMap<Scalar>& dout,
                     int stride, Mat<Scalar>& dweight, Mat<Scalar>& dbias, FeatureMap<Scalar>* din);

/// Transposed convolution, kernel 2, stride 2 (exact 2x upsampling).
/// weight: (8 * Cout) x Cin, row tap * Cout + o with tap = (dz * 2 + dy) * 2 + dx.
template <typename Scalar>
FeatureMap<Scalar> upconv2(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const Mat<Scalar>& bias);

template <typename Scalar>
void upconv2_backward(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const FeatureMap<Scalar>& dout,
                      Mat<Scalar>& dweight, Mat<Scalar>& dbias, FeatureMap<Scalar>& din);

/// Pointwise (1x1x1) convolution. weight: Cout x Cin.
template <typename Scalar>
FeatureMap<Scalar> conv1(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const Mat<Scalar>& bias);

template <typename Scalar>
void conv1_backward(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const FeatureMap<Scalar>& dout,
                    Mat<Scalar>& dweight, Mat<Scalar>& dbias, FeatureMap<Scalar>& din);

/// Cached statistics of an instance normalisation.
template <typename Scalar>
struct NormCache {
    Mat<Scalar> xhat;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
};

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kLeakySlope = 0.01;

/// Per-channel standardisation over voxels followed by gamma * xhat + beta.
template <typename Scalar>
FeatureMap<Scalar> instance_norm(const FeatureMap<Scalar>& in, const Mat<Scalar>& gamma, const Mat<Scalar>& beta,
                                 NormCache<Scalar>* cache);

/// dout -> din in place; accumulates dgamma/dbeta.
template <typename Scalar>
void instance_norm_backward(const NormCache<Scalar>& cache, const Mat<Scalar>& gamma, FeatureMap<Scalar>& grad,
                            Mat<Scalar>& dgamma, Mat<Scalar>& dbeta);

template <typename Scalar>
void leaky_relu_inplace(FeatureMap<Scalar>& x);

/// Multiplies `grad` by the leaky-relu derivative evaluated at `pre`.
template <typename Scalar>
void leaky_relu_backward(const FeatureMap<Scalar>& pre, FeatureMap<Scalar>& grad);

/// Channel-wise softmax per voxel, max-subtracted.
template <typename Scalar>
FeatureMap<Scalar> softmax_channels(const FeatureMap<Scalar>& logits);

#define ANEUSEG_LAYERS_EXTERN(S)                                                                                   \
    extern template FeatureMap<S> conv3d(const FeatureMap<S>&, const Mat<S>&, const Mat<S>&, int);                \
    extern template void conv3d_backward(const FeatureMap<S>&, const Mat<S>&, const FeatureMap<S>&, int, Mat<S>&, \
                                         Mat<S>&, FeatureMap<S>*);                                                \
    extern template FeatureMap<S> upconv2(const FeatureMap<S>&, const Mat<S>&, const Mat<S>&);                    \
    extern template void upconv2_backward(const FeatureMap<S>&, const Mat<S>&, const FeatureMap<S>&, Mat<S>&,     \
                                          Mat<S>&, FeatureMap<S>&);                                               \
    extern template FeatureMap<S> conv1(const FeatureMap<S>&, const Mat<S>&, const Mat<S>&);                      \
    extern template void conv1_backward(const FeatureMap<S>&, const Mat<S>&, const FeatureMap<S>&, Mat<S>&,       \
                                        Mat<S>&, FeatureMap<S>&);                                                 \
    extern template FeatureMap<S> instance_norm(const FeatureMap<S>&, const Mat<S>&, const Mat<S>&,               \
                                                NormCache<S>*);                                                   \
    extern template void instance_norm_backward(const NormCache<S>&, const Mat<S>&, FeatureMap<S>&, Mat<S>&,      \
                                                Mat<S>&);                                                         \
    extern template void leaky_relu_inplace(FeatureMap<S>&);                                                      \
    extern template void leaky_relu_backward(const FeatureMap<S>&, FeatureMap<S>&);                               \
    extern template FeatureMap<S> softmax_channels(const FeatureMap<S>&);

ANEUSEG_LAYERS_EXTERN(float)
ANEUSEG_LAYERS_EXTERN(double)
#undef ANEUSEG_LAYERS_EXTERN

}  // namespace aneuseg::layers
