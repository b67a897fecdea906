#include "sslnet/nn_ops.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace sslnet {

namespace {

int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter blocks
// ---------------------------------------------------------------------------

ConvParams ConvParams::make(int in_c, int out_c, int k, int stride, int pad, bool with_bias) {
    if (k < 1 || k > 3) throw ValueError("conv kernel size must be in {1,2,3}, got " + std::to_string(k));
    if (stride < 1) throw ValueError("conv stride must be positive");
    if (pad < 0) throw ValueError("conv pad must be non-negative");
    ConvParams p;
    p.in_c = in_c;
    p.out_c = out_c;
    p.k = k;
    p.stride = stride;
    p.pad = pad;
    p.weight.assign(static_cast<std::size_t>(out_c) * in_c * k * k, 0.0f);
    p.grad_weight.assign(p.weight.size(), 0.0f);
    if (with_bias) {
        p.bias.assign(out_c, 0.0f);
        p.grad_bias.assign(out_c, 0.0f);
    }
    return p;
}

void ConvParams::zero_grads() {
    std::fill(grad_weight.begin(), grad_weight.end(), 0.0f);
    std::fill(grad_bias.begin(), grad_bias.end(), 0.0f);
}

DepthwiseParams DepthwiseParams::make(int c, int k, int stride, int pad, bool with_bias) {
    DepthwiseParams p;
    p.c = c;
    p.k = k;
    p.stride = stride;
    p.pad = pad;
    p.weight.assign(static_cast<std::size_t>(c) * k * k, 0.0f);
    p.grad_weight.assign(p.weight.size(), 0.0f);
    if (with_bias) {
        p.bias.assign(c, 0.0f);
        p.grad_bias.assign(c, 0.0f);
    }
    return p;
}

void DepthwiseParams::zero_grads() {
    std::fill(grad_weight.begin(), grad_weight.end(), 0.0f);
    std::fill(grad_bias.begin(), grad_bias.end(), 0.0f);
}

BNParams BNParams::make(int c) {
    BNParams p;
    p.c = c;
    p.gamma.assign(c, 1.0f);
    p.beta.assign(c, 0.0f);
    p.running_mean.assign(c, 0.0f);
    p.running_var.assign(c, 1.0f);
    p.grad_gamma.assign(c, 0.0f);
    p.grad_beta.assign(c, 0.0f);
    return p;
}

void BNParams::zero_grads() {
    std::fill(grad_gamma.begin(), grad_gamma.end(), 0.0f);
    std::fill(grad_beta.begin(), grad_beta.end(), 0.0f);
}

FCParams FCParams::make(int in, int out) {
    FCParams p;
    p.in = in;
    p.out = out;
    p.weight.assign(static_cast<std::size_t>(in) * out, 0.0f);
    p.bias.assign(out, 0.0f);
    p.grad_weight.assign(p.weight.size(), 0.0f);
    p.grad_bias.assign(out, 0.0f);
    return p;
}

void FCParams::zero_grads() {
    std::fill(grad_weight.begin(), grad_weight.end(), 0.0f);
    std::fill(grad_bias.begin(), grad_bias.end(), 0.0f);
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

Tensor conv2d_forward(const Tensor& x, const ConvParams& p) {
    check_dim(x.c(), p.in_c, "c", "conv2d_forward");
    const int oh = conv_out_dim(x.h(), p.k, p.stride, p.pad);
    const int ow = conv_out_dim(x.w(), p.k, p.stride, p.pad);
    if (oh < 1 || ow < 1) {
        throw ShapeError("conv2d_forward: output spatial dims " + std::to_string(oh) + "x" +
                         std::to_string(ow) + " < 1 for input " + x.shape().str());
    }
    Tensor out(x.n(), p.out_c, oh, ow);

    if (p.k == 1 && p.stride == 1 && p.pad == 0) {
        // 1x1 stride-1: a GEMM over pixels, the hot path of every network here.
        const int hw = x.h() * x.w();
        for (int n = 0; n < x.n(); ++n) {
            for (int oc = 0; oc < p.out_c; ++oc) {
                float* dst = out.channel(n, oc);
                if (!p.bias.empty()) {
                    for (int q = 0; q < hw; ++q) dst[q] = p.bias[oc];
                }
                const float* wrow = p.weight.data() + static_cast<std::size_t>(oc) * p.in_c;
                for (int ic = 0; ic < p.in_c; ++ic) {
                    const float wv = wrow[ic];
                    if (wv == 0.0f) continue;
                    const float* src = x.channel(n, ic);
                    for (int q = 0; q < hw; ++q) dst[q] += wv * src[q];
                }
            }
        }
        return out;
    }

    for (int n = 0; n < x.n(); ++n) {
        for (int oc = 0; oc < p.out_c; ++oc) {
            for (int oi = 0; oi < oh; ++oi) {
                for (int oj = 0; oj < ow; ++oj) {
                    float acc = p.bias.empty() ? 0.0f : p.bias[oc];
                    const int i0 = oi * p.stride - p.pad;
                    const int j0 = oj * p.stride - p.pad;
                    for (int ic = 0; ic < p.in_c; ++ic) {
                        const float* src = x.channel(n, ic);
                        for (int ki = 0; ki < p.k; ++ki) {
                            const int si = i0 + ki;
                            if (si < 0 || si >= x.h()) continue;
                            for (int kj = 0; kj < p.k; ++kj) {
                                const int sj = j0 + kj;
                                if (sj < 0 || sj >= x.w()) continue;
                                acc += p.wt(oc, ic, ki, kj) * src[si * x.w() + sj];
                            }
                        }
                    }
                    out.at(n, oc, oi, oj) = acc;
                }
            }
        }
    }
    return out;
}

Tensor conv2d_backward(const Tensor& x, ConvParams& p, const Tensor& grad_out) {
    check_dim(x.c(), p.in_c, "c", "conv2d_backward");
    const int oh = conv_out_dim(x.h(), p.k, p.stride, p.pad);
    const int ow = conv_out_dim(x.w(), p.k, p.stride, p.pad);
    check_dim(grad_out.c(), p.out_c, "c", "conv2d_backward(grad_out)");
    check_dim(grad_out.h(), oh, "h", "conv2d_backward(grad_out)");
    check_dim(grad_out.w(), ow, "w", "conv2d_backward(grad_out)");
    check_dim(grad_out.n(), x.n(), "n", "conv2d_backward(grad_out)");

    Tensor grad_in(x.shape());

    if (p.k == 1 && p.stride == 1 && p.pad == 0) {
        const int hw = x.h() * x.w();
        for (int n = 0; n < x.n(); ++n) {
            for (int oc = 0; oc < p.out_c; ++oc) {
                const float* g = grad_out.channel(n, oc);
                float* gw = p.grad_weight.data() + static_cast<std::size_t>(oc) * p.in_c;
                for (int ic = 0; ic < p.in_c; ++ic) {
                    const float* src = x.channel(n, ic);
                    float* gi = grad_in.channel(n, ic);
                    const float wv = p.weight[static_cast<std::size_t>(oc) * p.in_c + ic];
                    double acc = 0.0;
                    for (int q = 0; q < hw; ++q) {
                        acc += static_cast<double>(g[q]) * src[q];
                        gi[q] += wv * g[q];
                    }
                    gw[ic] += static_cast<float>(acc);
                }
                if (!p.grad_bias.empty()) {
                    double acc = 0.0;
                    for (int q = 0; q < hw; ++q) acc += g[q];
                    p.grad_bias[oc] += static_cast<float>(acc);
                }
            }
        }
        return grad_in;
    }

    for (int n = 0; n < x.n(); ++n) {
        for (int oc = 0; oc < p.out_c; ++oc) {
            for (int oi = 0; oi < oh; ++oi) {
                for (int oj = 0; oj < ow; ++oj) {
                    const float g = grad_out.at(n, oc, oi, oj);
                    if (!p.grad_bias.empty()) p.grad_bias[oc] += g;
                    if (g == 0.0f) continue;
                    const int i0 = oi * p.stride - p.pad;
                    const int j0 = oj * p.stride - p.pad;
                    for (int ic = 0; ic < p.in_c; ++ic) {
                        const float* src = x.channel(n, ic);
                        float* gi = grad_in.channel(n, ic);
                        for (int ki = 0; ki < p.k; ++ki) {
                            const int si = i0 + ki;
                            if (si < 0 || si >= x.h()) continue;
                            for (int kj = 0; kj < p.k; ++kj) {
                                const int sj = j0 + kj;
                                if (sj < 0 || sj >= x.w()) continue;
                                const std::size_t widx =
                                    ((static_cast<std::size_t>(oc) * p.in_c + ic) * p.k + ki) * p.k + kj;
                                p.grad_weight[widx] += g * src[si * x.w() + sj];
                                gi[si * x.w() + sj] += g * p.weight[widx];
                            }
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

Tensor depthwise_forward(const Tensor& x, const DepthwiseParams& p) {
    check_dim(x.c(), p.c, "c", "depthwise_forward");
    const int oh = conv_out_dim(x.h(), p.k, p.stride, p.pad);
    const int ow = conv_out_dim(x.w(), p.k, p.stride, p.pad);
    if (oh < 1 || ow < 1) throw ShapeError("depthwise_forward: empty output for input " + x.shape().str());
    Tensor out(x.n(), p.c, oh, ow);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < p.c; ++c) {
            const float* src = x.channel(n, c);
            const float* w = p.weight.data() + static_cast<std::size_t>(c) * p.k * p.k;
            float* dst = out.channel(n, c);
            for (int oi = 0; oi < oh; ++oi) {
                for (int oj = 0; oj < ow; ++oj) {
                    float acc = p.bias.empty() ? 0.0f : p.bias[c];
                    const int i0 = oi * p.stride - p.pad;
                    const int j0 = oj * p.stride - p.pad;
                    for (int ki = 0; ki < p.k; ++ki) {
                        const int si = i0 + ki;
                        if (si < 0 || si >= x.h()) continue;
                        for (int kj = 0; kj < p.k; ++kj) {
                            const int sj = j0 + kj;
                            if (sj < 0 || sj >= x.w()) continue;
                            acc += w[ki * p.k + kj] * src[si * x.w() + sj];
                        }
                    }
                    dst[oi * ow + oj] = acc;
                }
            }
        }
    }
    return out;
}

Tensor depthwise_backward(const Tensor& x, DepthwiseParams& p, const Tensor& grad_out) {
    check_dim(x.c(), p.c, "c", "depthwise_backward");
    const int oh = grad_out.h(), ow = grad_out.w();
    Tensor grad_in(x.shape());
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < p.c; ++c) {
            const float* src = x.channel(n, c);
            const float* w = p.weight.data() + static_cast<std::size_t>(c) * p.k * p.k;
            float* gw = p.grad_weight.data() + static_cast<std::size_t>(c) * p.k * p.k;
            float* gi = grad_in.channel(n, c);
            for (int oi = 0; oi < oh; ++oi) {
                for (int oj = 0; oj < ow; ++oj) {
                    const float g = grad_out.at(n, c, oi, oj);
                    if (!p.grad_bias.empty()) p.grad_bias[c] += g;
                    if (g == 0.0f) continue;
                    const int i0 = oi * p.stride - p.pad;
                    const int j0 = oj * p.stride - p.pad;
                    for (int ki = 0; ki < p.k; ++ki) {
                        const int si = i0 + ki;
                        if (si < 0 || si >= x.h()) continue;
                        for (int kj = 0; kj < p.k; ++kj) {
                            const int sj = j0 + kj;
                            if (sj < 0 || sj >= x.w()) continue;
                            gw[ki * p.k + kj] += g * src[si * x.w() + sj];
                            gi[si * x.w() + sj] += g * w[ki * p.k + kj];
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Batch norm
// ---------------------------------------------------------------------------

Tensor batchnorm_forward(const Tensor& x, BNParams& p, bool train, BNCache* cache) {
    check_dim(x.c(), p.c, "c", "batchnorm_forward");
    Tensor out(x.shape());
    const int hw = x.h() * x.w();
    const std::int64_t m = static_cast<std::int64_t>(x.n()) * hw;

    if (!train) {
        for (int c = 0; c < p.c; ++c) {
            const float inv = 1.0f / std::sqrt(p.running_var[c] + p.epsilon);
            const float scale = p.gamma[c] * inv;
            const float shift = p.beta[c] - p.running_mean[c] * scale;
            for (int n = 0; n < x.n(); ++n) {
                const float* src = x.channel(n, c);
                float* dst = out.channel(n, c);
                for (int q = 0; q < hw; ++q) dst[q] = src[q] * scale + shift;
            }
        }
        return out;
    }

    if (cache) {
        cache->mean.assign(p.c, 0.0f);
        cache->inv_std.assign(p.c, 0.0f);
        cache->xhat = Tensor(x.shape());
    }
    for (int c = 0; c < p.c; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int n = 0; n < x.n(); ++n) {
            const float* src = x.channel(n, c);
            for (int q = 0; q < hw; ++q) {
                sum += src[q];
                sq += static_cast<double>(src[q]) * src[q];
            }
        }
        const double mean = sum / static_cast<double>(m);
        const double var = std::max(0.0, sq / static_cast<double>(m) - mean * mean);
        const float inv = 1.0f / std::sqrt(static_cast<float>(var) + p.epsilon);
        p.running_mean[c] = p.momentum * p.running_mean[c] + (1.0f - p.momentum) * static_cast<float>(mean);
        p.running_var[c] = p.momentum * p.running_var[c] + (1.0f - p.momentum) * static_cast<float>(var);
        if (cache) {
            cache->mean[c] = static_cast<float>(mean);
            cache->inv_std[c] = inv;
        }
        for (int n = 0; n < x.n(); ++n) {
            const float* src = x.channel(n, c);
            float* dst = out.channel(n, c);
            float* xh = cache ? cache->xhat.channel(n, c) : nullptr;
            for (int q = 0; q < hw; ++q) {
                const float xhat = (src[q] - static_cast<float>(mean)) * inv;
                if (xh) xh[q] = xhat;
                dst[q] = p.gamma[c] * xhat + p.beta[c];
            }
        }
    }
    return out;
}

Tensor batchnorm_backward(const Tensor& grad_out, BNParams& p, const BNCache& cache) {
    check_dim(grad_out.c(), p.c, "c", "batchnorm_backward");
    const int hw = grad_out.h() * grad_out.w();
    const double m = static_cast<double>(grad_out.n()) * hw;
    Tensor grad_in(grad_out.shape());
    for (int c = 0; c < p.c; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < grad_out.n(); ++n) {
            const float* g = grad_out.channel(n, c);
            const float* xh = cache.xhat.channel(n, c);
            for (int q = 0; q < hw; ++q) {
                sum_g += g[q];
                sum_gx += static_cast<double>(g[q]) * xh[q];
            }
        }
        p.grad_beta[c] += static_cast<float>(sum_g);
        p.grad_gamma[c] += static_cast<float>(sum_gx);
        const float k = p.gamma[c] * cache.inv_std[c];
        const float mg = static_cast<float>(sum_g / m);
        const float mgx = static_cast<float>(sum_gx / m);
        for (int n = 0; n < grad_out.n(); ++n) {
            const float* g = grad_out.channel(n, c);
            const float* xh = cache.xhat.channel(n, c);
            float* gi = grad_in.channel(n, c);
            for (int q = 0; q < hw; ++q) {
                gi[q] += k * (g[q] - mg - xh[q] * mgx);
            }
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities
// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& x) {
    Tensor out(x.shape());
    const float* src = x.data();
    float* dst = out.data();
    for (std::int64_t i = 0; i < x.size(); ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    Tensor out(x.shape());
    const float* src = x.data();
    const float* g = grad_out.data();
    float* dst = out.data();
    for (std::int64_t i = 0; i < x.size(); ++i) dst[i] = src[i] > 0.0f ? g[i] : 0.0f;
    return out;
}

Tensor sigmoid_forward(const Tensor& x) {
    Tensor out(x.shape());
    const float* src = x.data();
    float* dst = out.data();
    for (std::int64_t i = 0; i < x.size(); ++i) dst[i] = 1.0f / (1.0f + std::exp(-src[i]));
    return out;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out) {
    Tensor out(y.shape());
    const float* yv = y.data();
    const float* g = grad_out.data();
    float* dst = out.data();
    for (std::int64_t i = 0; i < y.size(); ++i) dst[i] = g[i] * yv[i] * (1.0f - yv[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

Tensor maxpool2x2(const Tensor& x, std::vector<std::int64_t>* argmax) {
    const int oh = x.h() / 2, ow = x.w() / 2;
    if (oh < 1 || ow < 1) throw ShapeError("maxpool2x2: input too small " + x.shape().str());
    Tensor out(x.n(), x.c(), oh, ow);
    if (argmax) argmax->assign(static_cast<std::size_t>(out.size()), 0);
    std::int64_t oidx = 0;
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const float* src = x.channel(n, c);
            float* dst = out.channel(n, c);
            const std::int64_t base = static_cast<std::int64_t>(src - x.data());
            for (int oi = 0; oi < oh; ++oi) {
                for (int oj = 0; oj < ow; ++oj, ++oidx) {
                    float best = -std::numeric_limits<float>::infinity();
                    int best_off = 0;
                    for (int di = 0; di < 2; ++di) {
                        for (int dj = 0; dj < 2; ++dj) {
                            const int off = (oi * 2 + di) * x.w() + oj * 2 + dj;
                            if (src[off] > best) {
                                best = src[off];
                                best_off = off;
                            }
                        }
                    }
                    dst[oi * ow + oj] = best;
                    if (argmax) (*argmax)[oidx] = base + best_off;
                }
            }
        }
    }
    return out;
}

Tensor maxpool2x2_backward(const Tensor& grad_out, Shape4 input_shape,
                           const std::vector<std::int64_t>& argmax) {
    Tensor grad_in(input_shape);
    const float* g = grad_out.data();
    float* gi = grad_in.data();
    for (std::int64_t i = 0; i < grad_out.size(); ++i) gi[argmax[i]] += g[i];
    return grad_in;
}

Tensor avgpool2x2(const Tensor& x) {
    const int oh = x.h() / 2, ow = x.w() / 2;
    if (oh < 1 || ow < 1) throw ShapeError("avgpool2x2: input too small " + x.shape().str());
    Tensor out(x.n(), x.c(), oh, ow);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const float* src = x.channel(n, c);
            float* dst = out.channel(n, c);
            for (int oi = 0; oi < oh; ++oi) {
                for (int oj = 0; oj < ow; ++oj) {
                    const int i0 = oi * 2, j0 = oj * 2;
                    dst[oi * ow + oj] = 0.25f * (src[i0 * x.w() + j0] + src[i0 * x.w() + j0 + 1] +
                                                 src[(i0 + 1) * x.w() + j0] + src[(i0 + 1) * x.w() + j0 + 1]);
                }
            }
        }
    }
    return out;
}

Tensor avgpool2x2_backward(const Tensor& grad_out, Shape4 input_shape) {
    Tensor grad_in(input_shape);
    const int oh = grad_out.h(), ow = grad_out.w();
    for (int n = 0; n < grad_out.n(); ++n) {
        for (int c = 0; c < grad_out.c(); ++c) {
            const float* g = grad_out.channel(n, c);
            float* gi = grad_in.channel(n, c);
            for (int oi = 0; oi < oh; ++oi) {
                for (int oj = 0; oj < ow; ++oj) {
                    const float v = 0.25f * g[oi * ow + oj];
                    const int i0 = oi * 2, j0 = oj * 2;
                    gi[i0 * input_shape.w + j0] += v;
                    gi[i0 * input_shape.w + j0 + 1] += v;
                    gi[(i0 + 1) * input_shape.w + j0] += v;
                    gi[(i0 + 1) * input_shape.w + j0 + 1] += v;
                }
            }
        }
    }
    return grad_in;
}

Tensor global_avg_pool(const Tensor& x) {
    Tensor out(x.n(), x.c(), 1, 1);
    const int hw = x.h() * x.w();
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const float* src = x.channel(n, c);
            double acc = 0.0;
            for (int q = 0; q < hw; ++q) acc += src[q];
            out.at(n, c, 0, 0) = static_cast<float>(acc / hw);
        }
    }
    return out;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, Shape4 input_shape) {
    Tensor grad_in(input_shape);
    const int hw = input_shape.h * input_shape.w;
    const float inv = 1.0f / static_cast<float>(hw);
    for (int n = 0; n < input_shape.n; ++n) {
        for (int c = 0; c < input_shape.c; ++c) {
            const float v = grad_out.at(n, c, 0, 0) * inv;
            float* gi = grad_in.channel(n, c);
            for (int q = 0; q < hw; ++q) gi[q] += v;
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

Tensor fc_forward(const Tensor& x, const FCParams& p) {
    const int feat = x.c() * x.h() * x.w();
    check_dim(feat, p.in, "c*h*w", "fc_forward");
    Tensor out(x.n(), p.out, 1, 1);
    for (int n = 0; n < x.n(); ++n) {
        const float* src = x.data() + static_cast<std::size_t>(n) * feat;
        for (int o = 0; o < p.out; ++o) {
            const float* w = p.weight.data() + static_cast<std::size_t>(o) * p.in;
            double acc = p.bias[o];
            for (int i = 0; i < p.in; ++i) acc += static_cast<double>(w[i]) * src[i];
            out.at(n, o, 0, 0) = static_cast<float>(acc);
        }
    }
    return out;
}

Tensor fc_backward(const Tensor& x, FCParams& p, const Tensor& grad_out) {
    const int feat = x.c() * x.h() * x.w();
    check_dim(feat, p.in, "c*h*w", "fc_backward");
    check_dim(grad_out.c(), p.out, "c", "fc_backward(grad_out)");
    Tensor grad_in(x.shape());
    for (int n = 0; n < x.n(); ++n) {
        const float* src = x.data() + static_cast<std::size_t>(n) * feat;
        float* gi = grad_in.data() + static_cast<std::size_t>(n) * feat;
        for (int o = 0; o < p.out; ++o) {
            const float g = grad_out.at(n, o, 0, 0);
            if (g == 0.0f) continue;
            const float* w = p.weight.data() + static_cast<std::size_t>(o) * p.in;
            float* gw = p.grad_weight.data() + static_cast<std::size_t>(o) * p.in;
            p.grad_bias[o] += g;
            for (int i = 0; i < p.in; ++i) {
                gw[i] += g * src[i];
                gi[i] += g * w[i];
            }
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

std::pair<float, Tensor> softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    check_dim(static_cast<int>(labels.size()), logits.n(), "n", "softmax_cross_entropy(labels)");
    if (logits.h() != 1 || logits.w() != 1) {
        throw ShapeError("softmax_cross_entropy: logits must be (n,classes,1,1), got " + logits.shape().str());
    }
    const int classes = logits.c();
    Tensor grad(logits.shape());
    double total = 0.0;
    for (int n = 0; n < logits.n(); ++n) {
        const int y = labels[n];
        if (y < 0 || y >= classes) throw ValueError("label " + std::to_string(y) + " out of range");
        float mx = logits.at(n, 0, 0, 0);
        for (int c = 1; c < classes; ++c) mx = std::max(mx, logits.at(n, c, 0, 0));
        double denom = 0.0;
        for (int c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(logits.at(n, c, 0, 0)) - mx);
        const double logp = static_cast<double>(logits.at(n, y, 0, 0)) - mx - std::log(denom);
        total -= logp;
        for (int c = 0; c < classes; ++c) {
            const double sm = std::exp(static_cast<double>(logits.at(n, c, 0, 0)) - mx) / denom;
            grad.at(n, c, 0, 0) = static_cast<float>((sm - (c == y ? 1.0 : 0.0)) / logits.n());
        }
    }
    return {static_cast<float>(total / logits.n()), std::move(grad)};
}

// ---------------------------------------------------------------------------
// Split / concat
// ---------------------------------------------------------------------------

std::pair<Tensor, Tensor> channel_split(const Tensor& x, int first_count) {
    if (first_count <= 0 || first_count >= x.c()) {
        throw ValueError("channel_split: first_count " + std::to_string(first_count) +
                         " out of range (0, " + std::to_string(x.c()) + ")");
    }
    Tensor a(x.n(), first_count, x.h(), x.w());
    Tensor b(x.n(), x.c() - first_count, x.h(), x.w());
    const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
    for (int n = 0; n < x.n(); ++n) {
        std::memcpy(a.channel(n, 0), x.channel(n, 0), hw * first_count * sizeof(float));
        std::memcpy(b.channel(n, 0), x.channel(n, first_count), hw * (x.c() - first_count) * sizeof(float));
    }
    return {std::move(a), std::move(b)};
}

Tensor channel_concat(const Tensor& a, const Tensor& b) {
    check_dim(b.n(), a.n(), "n", "channel_concat");
    check_dim(b.h(), a.h(), "h", "channel_concat");
    check_dim(b.w(), a.w(), "w", "channel_concat");
    Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
    const std::size_t hw = static_cast<std::size_t>(a.h()) * a.w();
    for (int n = 0; n < a.n(); ++n) {
        std::memcpy(out.channel(n, 0), a.channel(n, 0), hw * a.c() * sizeof(float));
        std::memcpy(out.channel(n, a.c()), b.channel(n, 0), hw * b.c() * sizeof(float));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

Tensor dropout(const Tensor& x, float rate, bool train, Rng& rng, Tensor* mask_out) {
    if (rate < 0.0f || rate >= 1.0f) throw ValueError("dropout rate must be in [0,1)");
    if (!train || rate == 0.0f) {
        if (mask_out) *mask_out = Tensor::full(x.n(), x.c(), x.h(), x.w(), 1.0f);
        return x;
    }
    Tensor out(x.shape());
    Tensor mask(x.shape());
    const float scale = 1.0f / (1.0f - rate);
    const float* src = x.data();
    float* dst = out.data();
    float* mk = mask.data();
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const float m = rng.bernoulli(rate) ? 0.0f : scale;
        mk[i] = m;
        dst[i] = src[i] * m;
    }
    if (mask_out) *mask_out = std::move(mask);
    return out;
}

}  // namespace sslnet
