#pragma once

#include <cmath>

#include "aneuseg/unet.hpp"

namespace aneuseg {

/// Nesterov SGD on one tensor:
///   v <- momentum * v - lr * g
///   theta <- theta + momentum * v - lr * g
/// Both buffers are updated in place; `theta` uses the already updated `v`.
template <typename Derived, typename VDerived, typename GDerived>
void nesterov_update(Eigen::MatrixBase<Derived>& theta, Eigen::MatrixBase<VDerived>& velocity,
                     const Eigen::MatrixBase<GDerived>& grad, double lr, double momentum)
{
    using Scalar = typename Derived::Scalar;
    const auto m = static_cast<Scalar>(momentum);
    const auto step = static_cast<Scalar>(lr);
    velocity = (m * velocity.array() - step * grad.array()).matrix();
    theta = (theta.array() + m * velocity.array() - step * grad.array()).matrix();
}

/// Applies nesterov_update to every tensor. Throws Error, leaving params and
/// velocity untouched, if any gradient entry is non-finite.
template <typename Scalar>
void sgd_nesterov_step(NetParams<Scalar>& params, const NetGrads<Scalar>& grads, double lr, double momentum)
{
    if (grads.size() != params.tensors.size() || params.velocity.size() != params.tensors.size())
        throw Error("sgd: gradient list does not match parameters");
    if (!(lr >= 0.0) || !(momentum >= 0.0 && momentum < 1.0))
        throw Error("sgd: need lr >= 0 and 0 <= momentum < 1");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].rows() != params.tensors[i].rows() || grads[i].cols() != params.tensors[i].cols())
            throw Error("sgd: gradient shape mismatch for tensor " + std::to_string(i));
        if (!grads[i].allFinite())
            throw Error("sgd: non-finite gradient in tensor " + std::to_string(i) + "; step aborted");
    }
    for (std::size_t i = 0; i < grads.size(); ++i)
        nesterov_update(params.tensors[i], params.velocity[i], grads[i], lr, momentum);
}

/// lr0 * (1 - epoch / max_epochs)^power.
inline double poly_lr(int epoch, int max_epochs, double lr0, double power = 0.9)
{
    if (max_epochs <= 0 || epoch < 0 || epoch > max_epochs)
        throw Error("poly_lr: need 0 <= epoch <= max_epochs");
    return lr0 * std::pow(1.0 - static_cast<double>(epoch) / max_epochs, power);
}

}  // namespace aneuseg
