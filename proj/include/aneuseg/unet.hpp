#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aneuseg/layers.hpp"
#include "aneuseg/tensor.hpp"

namespace aneuseg {

enum class NormKind { Instance, None };

std::string to_string(NormKind n);
NormKind parse_norm(const std::string& s);

/// 3D U-Net hyper-parameters. Every conv is 3x3x3 with zero padding 1,
/// followed by optional instance norm and a leaky ReLU (slope 0.01).
struct UNetConfig {
    int num_resolutions = 6;
    int in_channels = 1;
    int num_classes = 2;
    int base_channels = 4;
    int channel_cap = 320;
    NormKind norm = NormKind::Instance;

    /// C(r) = min(base * 2^r, cap).
    int channels(int level) const;
    void validate() const;

    bool operator==(const UNetConfig&) const = default;
};

/// Name and shape of one trainable tensor.
struct TensorInfo {
    std::string name;
    Eigen::Index rows;
    Eigen::Index cols;
};

/// conv -> [instance norm] -> leaky ReLU. Indices point into the parameter list.
struct ConvUnit {
    int weight = -1;
    int bias = -1;
    int gamma = -1;
    int beta = -1;
    int stride = 1;
};

struct UpUnit {
    int weight = -1;
    int bias = -1;
};

/// Parameter declaration order and the wiring that uses it.
///
/// Encoder level 0: two units (in -> C0, C0 -> C0).
/// Encoder level r > 0: a stride-2 unit C(r-1) -> C(r), then two C(r) -> C(r) units.
/// Decoder level r = R-2 .. 0: 2x transposed conv C(r+1) -> C(r), concatenation
/// [upsampled; skip], then units 2C(r) -> C(r) and C(r) -> C(r).
/// Head: 1x1x1 conv C0 -> classes.
struct ParamLayout {
    std::vector<TensorInfo> tensors;
    std::vector<std::vector<ConvUnit>> encoder;  // [level][unit]
    std::vector<UpUnit> up;                      // [level], size R-1
    std::vector<std::vector<ConvUnit>> decoder;  // [level][unit], size R-1
    int head_weight = -1;
    int head_bias = -1;

    std::int64_t scalar_count() const;
};

ParamLayout param_layout(const UNetConfig& cfg);

template <typename Scalar>
struct NetParams {
    std::vector<Mat<Scalar>> tensors;
    std::vector<Mat<Scalar>> velocity;

    template <typename Other>
    NetParams<Other> cast() const
    {
        NetParams<Other> out;
        for (const auto& t : tensors)
            out.tensors.push_back(t.template cast<Other>());
        for (const auto& v : velocity)
            out.velocity.push_back(v.template cast<Other>());
        return out;
    }
};

template <typename Scalar>
using NetGrads = std::vector<Mat<Scalar>>;

/// He-normal kernels (std sqrt(2 / fan_in)), zero biases, unit norm scales,
/// zero velocity. Values are drawn in double, so float and double
/// parameters from the same seed agree up to rounding.
template <typename Scalar>
NetParams<Scalar> init_params(const UNetConfig& cfg, std::uint64_t seed);

template <typename Scalar>
NetGrads<Scalar> zero_grads(const NetParams<Scalar>& params);

/// Activations recorded by forward() for backward().
template <typename Scalar>
struct Tape {
    struct Unit {
        FeatureMap<Scalar> input;
        layers::NormCache<Scalar> norm;
        FeatureMap<Scalar> output;
    };
    struct Sample {
        std::vector<Unit> units;  // encoder then decoder, execution order
        std::vector<FeatureMap<Scalar>> up_input;  // per decoder level
        FeatureMap<Scalar> head_input;
    };
    std::vector<Sample> samples;
    std::vector<Index3> level_dims;
};

/// Spatial extent at each resolution for an input of `dims`: dims / 2^r.
std::vector<Index3> level_shapes(const UNetConfig& cfg, const Index3& dims);

/// B x in_channels x X x Y x Z -> B x classes x X x Y x Z logits.
/// Throws Error unless (X, Y, Z) passes validate_patch for cfg.num_resolutions.
template <typename Scalar>
Batch<Scalar> forward(const NetParams<Scalar>& params, const UNetConfig& cfg, const Batch<Scalar>& input,
                      Tape<Scalar>* tape = nullptr);

/// Reverse pass given dL/dlogits; returns dL/dparam summed over the batch.
template <typename Scalar>
NetGrads<Scalar> backward(const NetParams<Scalar>& params, const UNetConfig& cfg, const Tape<Scalar>& tape,
                          const Batch<Scalar>& dlogits);

extern template NetParams<float> init_params(const UNetConfig&, std::uint64_t);
extern template NetParams<double> init_params(const UNetConfig&, std::uint64_t);
extern template NetGrads<float> zero_grads(const NetParams<float>&);
extern template NetGrads<double> zero_grads(const NetParams<double>&);
extern template Batch<float> forward(const NetParams<float>&, const UNetConfig&, const Batch<float>&, Tape<float>*);
extern template Batch<double> forward(const NetParams<double>&, const UNetConfig&, const Batch<double>&,
                                      Tape<double>*);
extern template NetGrads<float> backward(const NetParams<float>&, const UNetConfig&, const Tape<float>&,
                                         const Batch<float>&);
extern template NetGrads<double> backward(const NetParams<double>&, const UNetConfig&, const Tape<double>&,
                                          const Batch<double>&);

}  // namespace aneuseg
