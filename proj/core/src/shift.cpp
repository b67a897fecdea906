#include "sslnet/shift.hpp"

#include <cstring>

namespace sslnet {

namespace {

void check_channels(const Tensor& x, const ShiftParams& sp, const char* where) {
    check_dim(sp.channels(), x.c(), "c", where);
}

// Copies the in-bounds block of one channel shifted by integer (a, b) and
// zero-fills the rest. dst and src must not alias.
void shift_channel(const float* src, float* dst, int h, int w, int a, int b) {
    std::memset(dst, 0, static_cast<std::size_t>(h) * w * sizeof(float));
    // Output row i reads input row i+a; output col j reads input col j+b.
    const int i_lo = std::max(0, -a), i_hi = std::min(h, h - a);
    const int j_lo = std::max(0, -b), j_hi = std::min(w, w - b);
    if (i_lo >= i_hi || j_lo >= j_hi) return;
    const std::size_t count = static_cast<std::size_t>(j_hi - j_lo);
    for (int i = i_lo; i < i_hi; ++i) {
        std::memcpy(dst + static_cast<std::size_t>(i) * w + j_lo,
                    src + static_cast<std::size_t>(i + a) * w + j_lo + b,
                    count * sizeof(float));
    }
}

}  // namespace

void shift_channel_inplace(float* chan, int h, int w, int a, int b) {
    const int i_lo = std::max(0, -a), i_hi = std::min(h, h - a);
    const int j_lo = std::max(0, -b), j_hi = std::min(w, w - b);
    const std::size_t row_bytes = static_cast<std::size_t>(w) * sizeof(float);
    if (i_lo >= i_hi || j_lo >= j_hi) {
        std::memset(chan, 0, static_cast<std::size_t>(h) * row_bytes);
        return;
    }
    auto move_row = [&](int i) {
        float* row = chan + static_cast<std::size_t>(i) * w;
        const float* src = chan + static_cast<std::size_t>(i + a) * w + j_lo + b;
        std::memmove(row + j_lo, src, static_cast<std::size_t>(j_hi - j_lo) * sizeof(float));
        if (j_lo > 0) std::memset(row, 0, static_cast<std::size_t>(j_lo) * sizeof(float));
        if (j_hi < w) std::memset(row + j_hi, 0, static_cast<std::size_t>(w - j_hi) * sizeof(float));
    };
    if (a >= 0) {
        // reading ahead: ascend
        for (int i = i_lo; i < i_hi; ++i) move_row(i);
    } else {
        for (int i = i_hi - 1; i >= i_lo; --i) move_row(i);
    }
    for (int i = 0; i < i_lo; ++i) std::memset(chan + static_cast<std::size_t>(i) * w, 0, row_bytes);
    for (int i = i_hi; i < h; ++i) std::memset(chan + static_cast<std::size_t>(i) * w, 0, row_bytes);
}

ShiftParams ShiftParams::zeros(int channels) {
    ShiftParams sp;
    sp.alpha.assign(channels, 0.0f);
    sp.beta.assign(channels, 0.0f);
    sp.grad_alpha.assign(channels, 0.0f);
    sp.grad_beta.assign(channels, 0.0f);
    return sp;
}

void ShiftParams::zero_grads() {
    std::fill(grad_alpha.begin(), grad_alpha.end(), 0.0f);
    std::fill(grad_beta.begin(), grad_beta.end(), 0.0f);
}

ShiftParams grouped_displacements(int channels, int K, GroupAssign mode) {
    if (K < 3 || K % 2 == 0) {
        throw ValueError("grouped shift kernel size must be odd and >= 3, got " + std::to_string(K));
    }
    if (channels < 1) throw ValueError("grouped_displacements: channels must be >= 1");
    ShiftParams sp = ShiftParams::zeros(channels);
    const int half = K / 2;
    const int groups = K * K;
    if (mode == GroupAssign::Eq2Literal) {
        for (int c = 0; c < channels; ++c) {
            const int g = c / groups;
            sp.alpha[c] = static_cast<float>(g / K - half);
            sp.beta[c] = static_cast<float>(g % K - half);
        }
    } else {
        const int group_size = channels / groups;
        for (int c = 0; c < channels; ++c) {
            if (group_size == 0 || c >= group_size * groups) continue;  // remainder stays (0,0)
            const int g = c / group_size;
            sp.alpha[c] = static_cast<float>(g / K - half);
            sp.beta[c] = static_cast<float>(g % K - half);
        }
    }
    return sp;
}

Tensor shift_forward_integer(const Tensor& x, const ShiftParams& sp) {
    check_channels(x, sp, "shift_forward_integer");
    Tensor out(x.shape());
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            shift_channel(x.channel(n, c), out.channel(n, c), x.h(), x.w(),
                          round_displacement(sp.alpha[c]), round_displacement(sp.beta[c]));
        }
    }
    return out;
}

Tensor shift_forward_quantized(const Tensor& x, const ShiftParams& sp) {
    return shift_forward_integer(x, sp);
}

Tensor shift_forward_bilinear(const Tensor& x, const ShiftParams& sp) {
    check_channels(x, sp, "shift_forward_bilinear");
    Tensor out(x.shape());
    const int h = x.h(), w = x.w();
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const float a = sp.alpha[c], b = sp.beta[c];
            const float* src = x.channel(n, c);
            float* dst = out.channel(n, c);
            for (int i = 0; i < h; ++i) {
                const float y = static_cast<float>(i) + a;
                const int y0 = static_cast<int>(std::floor(y));
                const float fy = y - static_cast<float>(y0);
                for (int j = 0; j < w; ++j) {
                    const float xpos = static_cast<float>(j) + b;
                    const int x0 = static_cast<int>(std::floor(xpos));
                    const float fx = xpos - static_cast<float>(x0);
                    // Zero-weight terms are skipped so integral displacements
                    // reproduce the integer shift bit for bit.
                    float acc = 0.0f;
                    for (int dn = 0; dn < 2; ++dn) {
                        const int yy = y0 + dn;
                        const float wy = dn == 0 ? 1.0f - fy : fy;
                        if (wy == 0.0f || yy < 0 || yy >= h) continue;
                        for (int dm = 0; dm < 2; ++dm) {
                            const int xx = x0 + dm;
                            const float wx = dm == 0 ? 1.0f - fx : fx;
                            if (wx == 0.0f || xx < 0 || xx >= w) continue;
                            acc += src[yy * w + xx] * wy * wx;
                        }
                    }
                    dst[i * w + j] = acc;
                }
            }
        }
    }
    return out;
}

void shift_backward_params(const Tensor& input, ShiftParams& sp, const Tensor& grad_out) {
    check_channels(input, sp, "shift_backward_params");
    if (!input.same_shape(grad_out)) {
        throw ShapeError("shift_backward_params: grad_out shape " + grad_out.shape().str() +
                         " != input shape " + input.shape().str());
    }
    if (sp.frozen) return;
    const int h = input.h(), w = input.w();
    for (int c = 0; c < input.c(); ++c) {
        const float a = sp.alpha[c], b = sp.beta[c];
        double ga = 0.0, gb = 0.0;
        for (int n = 0; n < input.n(); ++n) {
            const float* src = input.channel(n, c);
            const float* g = grad_out.channel(n, c);
            for (int i = 0; i < h; ++i) {
                const float y = static_cast<float>(i) + a;
                const int y0 = static_cast<int>(std::floor(y));
                const float fy = y - static_cast<float>(y0);
                // Sign(n - i - alpha): -1 for the lower neighbor unless the
                // sample sits exactly on it (Sign(0) := +1), +1 for the upper.
                const float sy0 = fy == 0.0f ? 1.0f : -1.0f;
                for (int j = 0; j < w; ++j) {
                    const float xpos = static_cast<float>(j) + b;
                    const int x0 = static_cast<int>(std::floor(xpos));
                    const float fx = xpos - static_cast<float>(x0);
                    const float sx0 = fx == 0.0f ? 1.0f : -1.0f;

                    const bool y0_in = y0 >= 0 && y0 < h;
                    const bool y1_in = y0 + 1 >= 0 && y0 + 1 < h;
                    const bool x0_in = x0 >= 0 && x0 < w;
                    const bool x1_in = x0 + 1 >= 0 && x0 + 1 < w;
                    const float i00 = y0_in && x0_in ? src[y0 * w + x0] : 0.0f;
                    const float i01 = y0_in && x1_in ? src[y0 * w + x0 + 1] : 0.0f;
                    const float i10 = y1_in && x0_in ? src[(y0 + 1) * w + x0] : 0.0f;
                    const float i11 = y1_in && x1_in ? src[(y0 + 1) * w + x0 + 1] : 0.0f;

                    const float wx0 = 1.0f - fx, wx1 = fx;
                    const float wy0 = 1.0f - fy, wy1 = fy;
                    const float da = sy0 * (wx0 * i00 + wx1 * i01) + (wx0 * i10 + wx1 * i11);
                    const float db = sx0 * (wy0 * i00 + wy1 * i10) + (wy0 * i01 + wy1 * i11);
                    ga += static_cast<double>(g[i * w + j]) * da;
                    gb += static_cast<double>(g[i * w + j]) * db;
                }
            }
        }
        sp.grad_alpha[c] += static_cast<float>(ga);
        sp.grad_beta[c] += static_cast<float>(gb);
    }
}

Tensor shift_backward_input(const ShiftParams& sp, const Tensor& grad_out) {
    check_channels(grad_out, sp, "shift_backward_input");
    Tensor out(grad_out.shape());
    for (int n = 0; n < grad_out.n(); ++n) {
        for (int c = 0; c < grad_out.c(); ++c) {
            shift_channel(grad_out.channel(n, c), out.channel(n, c), grad_out.h(), grad_out.w(),
                          -round_displacement(sp.alpha[c]), -round_displacement(sp.beta[c]));
        }
    }
    return out;
}

Tensor shift_backward_input_bilinear(const ShiftParams& sp, const Tensor& grad_out) {
    ShiftParams neg = sp;
    for (int c = 0; c < sp.channels(); ++c) {
        neg.alpha[c] = -sp.alpha[c];
        neg.beta[c] = -sp.beta[c];
    }
    return shift_forward_bilinear(grad_out, neg);
}

float penalty_value(const ShiftParams& sp, const PenaltyConfig& cfg) {
    double acc = 0.0;
    if (cfg.norm == PenaltyConfig::Norm::L1) {
        for (float v : sp.alpha) acc += std::fabs(v);
        for (float v : sp.beta) acc += std::fabs(v);
    } else {
        for (float v : sp.alpha) acc += static_cast<double>(v) * v;
        for (float v : sp.beta) acc += static_cast<double>(v) * v;
    }
    return static_cast<float>(cfg.lambda * acc);
}

void penalty_grad_accumulate(ShiftParams& sp, const PenaltyConfig& cfg) {
    if (sp.frozen || cfg.lambda == 0.0f) return;
    const int c = sp.channels();
    if (cfg.norm == PenaltyConfig::Norm::L1) {
        auto sgn = [](float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); };
        for (int i = 0; i < c; ++i) {
            sp.grad_alpha[i] += cfg.lambda * sgn(sp.alpha[i]);
            sp.grad_beta[i] += cfg.lambda * sgn(sp.beta[i]);
        }
    } else {
        for (int i = 0; i < c; ++i) {
            sp.grad_alpha[i] += 2.0f * cfg.lambda * sp.alpha[i];
            sp.grad_beta[i] += 2.0f * cfg.lambda * sp.beta[i];
        }
    }
}

double shift_sparsity(const ShiftParams& sp) {
    const int c = sp.channels();
    if (c == 0) return 1.0;
    int unshifted = 0;
    for (int i = 0; i < c; ++i) {
        if (round_displacement(sp.alpha[i]) == 0 && round_displacement(sp.beta[i]) == 0) ++unshifted;
    }
    return static_cast<double>(unshifted) / c;
}

ShiftParams round_displacements(const ShiftParams& sp) {
    ShiftParams out = sp;
    for (int c = 0; c < sp.channels(); ++c) {
        out.alpha[c] = static_cast<float>(round_displacement(sp.alpha[c]));
        out.beta[c] = static_cast<float>(round_displacement(sp.beta[c]));
    }
    return out;
}

}  // namespace sslnet
