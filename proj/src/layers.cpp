#include "aneuseg/layers.hpp"

#include <algorithm>

namespace aneuseg::layers {

namespace {

// Output voxels handled per im2col chunk; keeps the column buffer cache-sized.
constexpr std::int64_t kChunkVoxels = 2048;

struct XRange {
    std::int64_t lo;
    std::int64_t hi;
};

// Output x with 0 <= stride * x + k - 1 < n_in.
XRange valid_range(std::int64_t n_in, std::int64_t n_out, int k, int stride)
{
    const std::int64_t lo = k == 0 ? 1 : 0;
    const std::int64_t top = n_in - k;  // stride * x <= top
    const std::int64_t hi = top < 0 ? 0 : std::min<std::int64_t>(n_out, top / stride + 1);
    return {std::min(lo, hi), hi};
}

template <typename Scalar>
void im2col(const FeatureMap<Scalar>& in, const Index3& od, int stride, std::int64_t z0, std::int64_t z1,
            Mat<Scalar>& col)
{
    const Index3& id = in.dims;
    const std::int64_t n = (z1 - z0) * od.x() * od.y();
    col.resize(in.channels() * 27, n);
    for (Eigen::Index c = 0; c < in.channels(); ++c) {
        const Scalar* src = in.data.row(c).data();
        for (int kz = 0; kz < 3; ++kz)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    Scalar* dst = col.row(c * 27 + kz * 9 + ky * 3 + kx).data();
                    const XRange xr = valid_range(id.x(), od.x(), kx, stride);
                    for (std::int64_t z = z0; z < z1; ++z) {
                        const std::int64_t iz = stride * z + kz - 1;
                        for (std::int64_t y = 0; y < od.y(); ++y) {
                            Scalar* d = dst + ((z - z0) * od.y() + y) * od.x();
                            const std::int64_t iy = stride * y + ky - 1;
                            if (iz < 0 || iz >= id.z() || iy < 0 || iy >= id.y()) {
                                std::fill(d, d + od.x(), Scalar(0));
                                continue;
                            }
                            const Scalar* s = src + (iz * id.y() + iy) * id.x() + (kx - 1);
                            std::fill(d, d + xr.lo, Scalar(0));
                            if (stride == 1) {
                                std::copy(s + xr.lo, s + xr.hi, d + xr.lo);
                            } else {
                                for (std::int64_t x = xr.lo; x < xr.hi; ++x)
                                    d[x] = s[stride * x];
                            }
                            std::fill(d + xr.hi, d + od.x(), Scalar(0));
                        }
                    }
                }
    }
}

template <typename Scalar>
void col2im_add(const Mat<Scalar>& col, const Index3& od, int stride, std::int64_t z0, std::int64_t z1,
                FeatureMap<Scalar>& din)
{
    const Index3& id = din.dims;
    for (Eigen::Index c = 0; c < din.channels(); ++c) {
        Scalar* dst = din.data.row(c).data();
        for (int kz = 0; kz < 3; ++kz)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const Scalar* src = col.row(c * 27 + kz * 9 + ky * 3 + kx).data();
                    const XRange xr = valid_range(id.x(), od.x(), kx, stride);
                    for (std::int64_t z = z0; z < z1; ++z) {
                        const std::int64_t iz = stride * z + kz - 1;
                        if (iz < 0 || iz >= id.z())
                            continue;
                        for (std::int64_t y = 0; y < od.y(); ++y) {
                            const std::int64_t iy = stride * y + ky - 1;
                            if (iy < 0 || iy >= id.y())
                                continue;
                            const Scalar* s = src + ((z - z0) * od.y() + y) * od.x();
                            Scalar* d = dst + (iz * id.y() + iy) * id.x() + (kx - 1);
                            if (stride == 1) {
                                for (std::int64_t x = xr.lo; x < xr.hi; ++x)
                                    d[x] += s[x];
                            } else {
                                for (std::int64_t x = xr.lo; x < xr.hi; ++x)
                                    d[stride * x] += s[x];
                            }
                        }
                    }
                }
    }
}

std::int64_t planes_per_chunk(const Index3& od)
{
    return std::max<std::int64_t>(1, kChunkVoxels / (od.x() * od.y()));
}

}  // namespace

template <typename Scalar>
FeatureMap<Scalar> conv3d(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const Mat<Scalar>& bias, int stride)
{
    if (weight.cols() != in.channels() * 27)
        throw Error("conv3d: weight does not match input channels");
    const Index3 od = conv_output_dims(in.dims, stride);
    FeatureMap<Scalar> out;
    out.dims = od;
    out.data.resize(weight.rows(), od.prod());
    const std::int64_t plane = od.x() * od.y();
    const std::int64_t step = planes_per_chunk(od);
    Mat<Scalar> col;
    for (std::int64_t z0 = 0; z0 < od.z(); z0 += step) {
        const std::int64_t z1 = std::min(od.z(), z0 + step);
        im2col(in, od, stride, z0, z1, col);
        out.data.middleCols(z0 * plane, col.cols()).noalias() = weight * col;
    }
    out.data.colwise() += bias.col(0);
    return out;
}

template <typename Scalar>
void conv3d_backward(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const FeatureMap<Scalar>& dout,
                     int stride, Mat<Scalar>& dweight, Mat<Scalar>& dbias, FeatureMap<Scalar>* din)
{
    const Index3 od = dout.dims;
    dbias.col(0) += dout.data.rowwise().sum();
    if (din)
        *din = FeatureMap<Scalar>(in.dims, in.channels());
    const std::int64_t plane = od.x() * od.y();
    const std::int64_t step = planes_per_chunk(od);
    Mat<Scalar> col;
    Mat<Scalar> dcol;
    for (std::int64_t z0 = 0; z0 < od.z(); z0 += step) {
        const std::int64_t z1 = std::min(od.z(), z0 + step);
        im2col(in, od, stride, z0, z1, col);
        const auto block = dout.data.middleCols(z0 * plane, col.cols());
        dweight.noalias() += block * col.transpose();
        if (din) {
            dcol.noalias() = weight.transpose() * block;
            col2im_add(dcol, od, stride, z0, z1, *din);
        }
    }
}

template <typename Scalar>
FeatureMap<Scalar> upconv2(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const Mat<Scalar>& bias)
{
    const Eigen::Index cout = bias.rows();
    if (weight.rows() != 8 * cout || weight.cols() != in.channels())
        throw Error("upconv2: weight shape mismatch");
    const Mat<Scalar> taps = weight * in.data;
    FeatureMap<Scalar> out(in.dims * 2, cout);
    const Index3& id = in.dims;
    const Index3& od = out.dims;
    for (std::int64_t z = 0; z < id.z(); ++z)
        for (std::int64_t y = 0; y < id.y(); ++y)
            for (std::int64_t x = 0; x < id.x(); ++x) {
                const std::int64_t v = x + id.x() * (y + id.y() * z);
                for (int t = 0; t < 8; ++t) {
                    const int dx = t & 1, dy = (t >> 1) & 1, dz = t >> 2;
                    const std::int64_t ov = (2 * x + dx) + od.x() * ((2 * y + dy) + od.y() * (2 * z + dz));
                    for (Eigen::Index o = 0; o < cout; ++o)
                        out.data(o, ov) = taps(t * cout + o, v) + bias(o, 0);
                }
            }
    return out;
}

template <typename Scalar>
void upconv2_backward(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const FeatureMap<Scalar>& dout,
                      Mat<Scalar>& dweight, Mat<Scalar>& dbias, FeatureMap<Scalar>& din)
{
    const Eigen::Index cout = dout.channels();
    const Index3& id = in.dims;
    const Index3& od = dout.dims;
    Mat<Scalar> gathered(8 * cout, id.prod());
    for (std::int64_t z = 0; z < id.z(); ++z)
        for (std::int64_t y = 0; y < id.y(); ++y)
            for (std::int64_t x = 0; x < id.x(); ++x) {
                const std::int64_t v = x + id.x() * (y + id.y() * z);
                for (int t = 0; t < 8; ++t) {
                    const int dx = t & 1, dy = (t >> 1) & 1, dz = t >> 2;
                    const std::int64_t ov = (2 * x + dx) + od.x() * ((2 * y + dy) + od.y() * (2 * z + dz));
                    for (Eigen::Index o = 0; o < cout; ++o)
                        gathered(t * cout + o, v) = dout.data(o, ov);
                }
            }
    dbias.col(0) += dout.data.rowwise().sum();
    dweight.noalias() += gathered * in.data.transpose();
    din.dims = id;
    din.data.noalias() = weight.transpose() * gathered;
}

template <typename Scalar>
FeatureMap<Scalar> conv1(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const Mat<Scalar>& bias)
{
    if (weight.cols() != in.channels())
        throw Error("conv1: weight does not match input channels");
    FeatureMap<Scalar> out;
    out.dims = in.dims;
    out.data.noalias() = weight * in.data;
    out.data.colwise() += bias.col(0);
    return out;
}

template <typename Scalar>
void conv1_backward(const FeatureMap<Scalar>& in, const Mat<Scalar>& weight, const FeatureMap<Scalar>& dout,
                    Mat<Scalar>& dweight, Mat<Scalar>& dbias, FeatureMap<Scalar>& din)
{
    dbias.col(0) += dout.data.rowwise().sum();
    dweight.noalias() += dout.data * in.data.transpose();
    din.dims = in.dims;
    din.data.noalias() = weight.transpose() * dout.data;
}

template <typename Scalar>
FeatureMap<Scalar> instance_norm(const FeatureMap<Scalar>& in, const Mat<Scalar>& gamma, const Mat<Scalar>& beta,
                                 NormCache<Scalar>* cache)
{
    const Eigen::Index channels = in.channels();
    FeatureMap<Scalar> out;
    out.dims = in.dims;
    out.data.resize(channels, in.voxels());
    if (cache) {
        cache->xhat.resize(channels, in.voxels());
        cache->inv_std.resize(channels);
    }
    for (Eigen::Index c = 0; c < channels; ++c) {
        const Eigen::ArrayXd row = in.data.row(c).transpose().array().template cast<double>();
        const double mean = row.mean();
        const double var = (row - mean).square().mean();
        const double inv = 1.0 / std::sqrt(var + kNormEpsilon);
        const auto xhat = ((row - mean) * inv).template cast<Scalar>();
        out.data.row(c) = (xhat * gamma(c, 0) + beta(c, 0)).transpose();
        if (cache) {
            cache->xhat.row(c) = xhat.transpose();
            cache->inv_std[c] = static_cast<Scalar>(inv);
        }
    }
    return out;
}

template <typename Scalar>
void instance_norm_backward(const NormCache<Scalar>& cache, const Mat<Scalar>& gamma, FeatureMap<Scalar>& grad,
                            Mat<Scalar>& dgamma, Mat<Scalar>& dbeta)
{
    const double n = static_cast<double>(grad.voxels());
    for (Eigen::Index c = 0; c < grad.channels(); ++c) {
        const Eigen::ArrayXd dy = grad.data.row(c).transpose().array().template cast<double>();
        const Eigen::ArrayXd xhat = cache.xhat.row(c).transpose().array().template cast<double>();
        dgamma(c, 0) += static_cast<Scalar>((dy * xhat).sum());
        dbeta(c, 0) += static_cast<Scalar>(dy.sum());
        const Eigen::ArrayXd dxhat = dy * static_cast<double>(gamma(c, 0));
        const double s1 = dxhat.sum();
        const double s2 = (dxhat * xhat).sum();
        const double scale = static_cast<double>(cache.inv_std[c]) / n;
        grad.data.row(c) = ((n * dxhat - s1 - xhat * s2) * scale).template cast<Scalar>().transpose();
    }
}

template <typename Scalar>
void leaky_relu_inplace(FeatureMap<Scalar>& x)
{
    const Scalar slope = static_cast<Scalar>(kLeakySlope);
    x.data.array() = x.data.array().max(Scalar(0)) + x.data.array().min(Scalar(0)) * slope;
}

template <typename Scalar>
void leaky_relu_backward(const FeatureMap<Scalar>& pre, FeatureMap<Scalar>& grad)
{
    const Scalar slope = static_cast<Scalar>(kLeakySlope);
    grad.data.array() = (pre.data.array() > Scalar(0)).select(grad.data.array(), grad.data.array() * slope);
}

template <typename Scalar>
FeatureMap<Scalar> softmax_channels(const FeatureMap<Scalar>& logits)
{
    FeatureMap<Scalar> out;
    out.dims = logits.dims;
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> peak = logits.data.colwise().maxCoeff();
    out.data = (logits.data.rowwise() - peak).array().exp().matrix();
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> total = out.data.colwise().sum().array();
    out.data.array().rowwise() /= total;
    return out;
}

#define ANEUSEG_LAYERS_INSTANTIATE(S)                                                                               \
    template FeatureMap<S> conv3d(const FeatureMap<S>&, const Mat<S>&, const Mat<S>&, int);                        \
    template void conv3d_backward(const FeatureMap<S>&, const Mat<S>&, const FeatureMap<S>&, int, Mat<S>&, Mat<S>&, \
                                  FeatureMap<S>*);                                                                  \
    template FeatureMap<S> upconv2(const FeatureMap<S>&, const Mat<S>&, const Mat<S>&);                            \
    template void upconv2_backward(const FeatureMap<S>&, const Mat<S>&, const FeatureMap<S>&, Mat<S>&, Mat<S>&,    \
                                   FeatureMap<S>&);                                                                 \
    template FeatureMap<S> conv1(const FeatureMap<S>&, const Mat<S>&, const Mat<S>&);                              \
    template void conv1_backward(const FeatureMap<S>&, const Mat<S>&, const FeatureMap<S>&, Mat<S>&, Mat<S>&,      \
                                 FeatureMap<S>&);                                                                   \
    template FeatureMap<S> instance_norm(const FeatureMap<S>&, const Mat<S>&, const Mat<S>&, NormCache<S>*);       \
    template void instance_norm_backward(const NormCache<S>&, const Mat<S>&, FeatureMap<S>&, Mat<S>&, Mat<S>&);    \
    template void leaky_relu_inplace(FeatureMap<S>&);                                                              \
    template void leaky_relu_backward(const FeatureMap<S>&, FeatureMap<S>&);                                       \
    template FeatureMap<S> softmax_channels(const FeatureMap<S>&);

ANEUSEG_LAYERS_INSTANTIATE(float)
ANEUSEG_LAYERS_INSTANTIATE(double)

}  // namespace aneuseg::layers
