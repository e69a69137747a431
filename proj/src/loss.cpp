#include "aneuseg/loss.hpp"

#include <cmath>

#include "aneuseg/layers.hpp"

namespace aneuseg {

template <typename Scalar>
LossReport dice_ce_loss(const Batch<Scalar>& logits, const Batch<Scalar>& target, Batch<Scalar>* dlogits,
                        double epsilon)
{
    if (logits.size() != target.size() || logits.empty())
        throw Error("loss: logits and target batch sizes differ");
    for (std::size_t s = 0; s < logits.size(); ++s) {
        const auto& t = target[s].data;
        if (logits[s].data.rows() != t.rows() || logits[s].data.cols() != t.cols() || t.rows() <= kForegroundChannel)
            throw Error("loss: logits and target shapes differ");
        const bool binary = ((t.array() == Scalar(0)) || (t.array() == Scalar(1))).all();
        if (!binary || !(t.colwise().sum().array() == Scalar(1)).all())
            throw Error("loss: target is not one-hot");
    }

    Batch<Scalar> probs;
    probs.reserve(logits.size());
    double n = 0.0;
    double ce = 0.0;
    double inter = 0.0;
    double psum = 0.0;
    double gsum = 0.0;
    for (std::size_t s = 0; s < logits.size(); ++s) {
        probs.push_back(layers::softmax_channels(logits[s]));
        const auto p = probs.back().data.array().template cast<double>();
        const auto g = target[s].data.array().template cast<double>();
        n += static_cast<double>(p.cols());
        ce -= (p * g).colwise().sum().max(1e-12).log().sum();
        inter += (p.row(kForegroundChannel) * g.row(kForegroundChannel)).sum();
        psum += p.row(kForegroundChannel).sum();
        gsum += g.row(kForegroundChannel).sum();
    }

    LossReport r;
    r.epsilon = epsilon;
    r.ce_term = ce / n;
    const double denom = psum + gsum + epsilon;
    r.dice_term = 1.0 - (2.0 * inter + epsilon) / denom;
    r.total = r.ce_term + r.dice_term;

    if (dlogits) {
        dlogits->clear();
        const double numer = 2.0 * inter + epsilon;
        for (std::size_t s = 0; s < logits.size(); ++s) {
            const Eigen::ArrayXXd p = probs[s].data.template cast<double>().array();
            const Eigen::ArrayXXd g = target[s].data.template cast<double>().array();
            // dDice/dp_fg per voxel.
            const Eigen::ArrayXXd ddice = -(2.0 * g.row(kForegroundChannel) * denom - numer) / (denom * denom);
            const Eigen::ArrayXXd pfg = p.row(kForegroundChannel);
            Eigen::ArrayXXd grad = (p - g) / n;
            for (Eigen::Index k = 0; k < p.rows(); ++k) {
                const double delta = k == kForegroundChannel ? 1.0 : 0.0;
                grad.row(k) += ddice * pfg * (delta - p.row(k));
            }
            FeatureMap<Scalar> d;
            d.dims = logits[s].dims;
            d.data = grad.matrix().template cast<Scalar>();
            dlogits->push_back(std::move(d));
        }
    }
    return r;
}

template <typename Scalar>
FeatureMap<Scalar> one_hot(const Index3& dims, const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>& labels,
                           int num_classes)
{
    if (labels.size() != dims.prod())
        throw Error("one_hot: label count does not match dims");
    FeatureMap<Scalar> out(dims, num_classes);
    for (Eigen::Index v = 0; v < labels.size(); ++v) {
        const int c = labels[v];
        if (c >= num_classes)
            throw Error("one_hot: label out of range");
        out.data(c, v) = Scalar(1);
    }
    return out;
}

template LossReport dice_ce_loss(const Batch<float>&, const Batch<float>&, Batch<float>*, double);
template LossReport dice_ce_loss(const Batch<double>&, const Batch<double>&, Batch<double>*, double);
template FeatureMap<float> one_hot(const Index3&, const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>&, int);
template FeatureMap<double> one_hot(const Index3&, const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>&, int);

}  // namespace aneuseg
