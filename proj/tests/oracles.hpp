#pragma once

// Independent reference implementations used to freeze expected values.
// Everything here is written as the most direct possible evaluation of the
// definitions and stays independent of the library's optimized paths.

#include <cmath>
#include <functional>
#include <vector>

#include "sslnet/nn_ops.hpp"
#include "sslnet/tensor.hpp"

namespace oracle {

using sslnet::ConvParams;
using sslnet::Tensor;

// Six nested loops, no special cases beyond zero padding.
inline Tensor naive_conv2d(const Tensor& x, const ConvParams& p) {
    const int oh = (x.h() + 2 * p.pad - p.k) / p.stride + 1;
    const int ow = (x.w() + 2 * p.pad - p.k) / p.stride + 1;
    Tensor out(x.n(), p.out_c, oh, ow);
    for (int n = 0; n < x.n(); ++n)
        for (int oc = 0; oc < p.out_c; ++oc)
            for (int oi = 0; oi < oh; ++oi)
                for (int oj = 0; oj < ow; ++oj) {
                    float acc = p.bias.empty() ? 0.0f : p.bias[oc];
                    for (int ic = 0; ic < p.in_c; ++ic)
                        for (int ki = 0; ki < p.k; ++ki)
                            for (int kj = 0; kj < p.k; ++kj) {
                                const int si = oi * p.stride - p.pad + ki;
                                const int sj = oj * p.stride - p.pad + kj;
                                if (si < 0 || si >= x.h() || sj < 0 || sj >= x.w()) continue;
                                acc += p.wt(oc, ic, ki, kj) * x.at(n, ic, si, sj);
                            }
                    out.at(n, oc, oi, oj) = acc;
                }
    return out;
}

// Four-neighbor bilinear sample evaluated directly from the weight formula,
// with out-of-bounds neighbors contributing zero.
inline Tensor naive_bilinear_shift(const Tensor& x, const std::vector<float>& alpha,
                                   const std::vector<float>& beta) {
    Tensor out(x.shape());
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j) {
                    const double y = i + static_cast<double>(alpha[c]);
                    const double z = j + static_cast<double>(beta[c]);
                    const int y0 = static_cast<int>(std::floor(y));
                    const int z0 = static_cast<int>(std::floor(z));
                    double acc = 0.0;
                    for (int nn = y0; nn <= y0 + 1; ++nn)
                        for (int mm = z0; mm <= z0 + 1; ++mm) {
                            if (nn < 0 || nn >= x.h() || mm < 0 || mm >= x.w()) continue;
                            const double wy = 1.0 - std::fabs(y - nn);
                            const double wz = 1.0 - std::fabs(z - mm);
                            if (wy <= 0.0 || wz <= 0.0) continue;
                            acc += static_cast<double>(x.at(n, c, nn, mm)) * wy * wz;
                        }
                    out.at(n, c, i, j) = static_cast<float>(acc);
                }
    return out;
}

// Central finite difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x0, double step) {
    return (f(x0 + step) - f(x0 - step)) / (2.0 * step);
}

// Plain sequential inner product in flat order; both sides of an adjoint
// identity must go through this same routine.
inline double dot(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a.data()[i]) * b.data()[i];
    return acc;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        m = std::max(m, static_cast<double>(std::fabs(a.data()[i] - b.data()[i])));
    }
    return m;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        if (std::memcmp(a.data() + i, b.data() + i, sizeof(float)) != 0) return false;
    }
    return true;
}

// rel err with an absolute floor so near-zero expectations stay checkable
inline double rel_err(double got, double want, double floor_ = 1e-4) {
    return std::fabs(got - want) / std::max(std::fabs(want), floor_);
}

}  // namespace oracle
