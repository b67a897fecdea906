#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "sslnet/tensor.hpp"

namespace sslnet {

// ---------------------------------------------------------------------------
// Parameter blocks. Gradient buffers live next to the values they belong to;
// backward passes accumulate (+=) so callers zero them once per step.
// ---------------------------------------------------------------------------

struct ConvParams {
    int in_c = 0, out_c = 0, k = 1, stride = 1, pad = 0;
    std::vector<float> weight;  // out_c * in_c * k * k
    std::vector<float> bias;    // empty or out_c
    std::vector<float> grad_weight;
    std::vector<float> grad_bias;

    static ConvParams make(int in_c, int out_c, int k, int stride, int pad, bool with_bias);
    void zero_grads();
    float wt(int oc, int ic, int ki, int kj) const {
        return weight[((static_cast<std::size_t>(oc) * in_c + ic) * k + ki) * k + kj];
    }
};

struct DepthwiseParams {
    int c = 0, k = 3, stride = 1, pad = 1;
    std::vector<float> weight;  // c * k * k
    std::vector<float> bias;    // empty or c
    std::vector<float> grad_weight;
    std::vector<float> grad_bias;

    static DepthwiseParams make(int c, int k, int stride, int pad, bool with_bias);
    void zero_grads();
};

struct BNParams {
    int c = 0;
    float epsilon = 1e-5f;
    float momentum = 0.9f;  // running <- momentum*running + (1-momentum)*batch
    std::vector<float> gamma, beta;
    std::vector<float> running_mean, running_var;
    std::vector<float> grad_gamma, grad_beta;

    static BNParams make(int c);
    void zero_grads();
};

struct FCParams {
    int in = 0, out = 0;
    std::vector<float> weight;  // out * in
    std::vector<float> bias;    // out
    std::vector<float> grad_weight;
    std::vector<float> grad_bias;

    static FCParams make(int in, int out);
    void zero_grads();
};

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, zero padding)
// ---------------------------------------------------------------------------

Tensor conv2d_forward(const Tensor& input, const ConvParams& p);
// Returns grad_input; accumulates grad_weight / grad_bias into p.
Tensor conv2d_backward(const Tensor& input, ConvParams& p, const Tensor& grad_out);

Tensor depthwise_forward(const Tensor& input, const DepthwiseParams& p);
Tensor depthwise_backward(const Tensor& input, DepthwiseParams& p, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Batch norm. Train mode uses batch statistics and updates running stats;
// eval mode uses running stats and touches nothing.
// ---------------------------------------------------------------------------

struct BNCache {
    std::vector<float> mean, inv_std;  // per channel
    Tensor xhat;
};

Tensor batchnorm_forward(const Tensor& input, BNParams& p, bool train, BNCache* cache);
Tensor batchnorm_backward(const Tensor& grad_out, BNParams& p, const BNCache& cache);

// ---------------------------------------------------------------------------
// Pointwise nonlinearities
// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

Tensor sigmoid_forward(const Tensor& input);
// Takes the forward *output* y; dy/dx = y(1-y).
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Pooling (2x2 windows, stride 2, odd trailing row/col dropped)
// ---------------------------------------------------------------------------

Tensor maxpool2x2(const Tensor& input, std::vector<std::int64_t>* argmax);
Tensor maxpool2x2_backward(const Tensor& grad_out, Shape4 input_shape,
                           const std::vector<std::int64_t>& argmax);

Tensor avgpool2x2(const Tensor& input);
Tensor avgpool2x2_backward(const Tensor& grad_out, Shape4 input_shape);

Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Tensor& grad_out, Shape4 input_shape);

// ---------------------------------------------------------------------------
// Fully connected over flattened (c*h*w) features; output is (n, out, 1, 1).
// ---------------------------------------------------------------------------

Tensor fc_forward(const Tensor& input, const FCParams& p);
Tensor fc_backward(const Tensor& input, FCParams& p, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Loss. logits: (n, classes, 1, 1). Returns mean loss and d(loss)/d(logits).
// ---------------------------------------------------------------------------

std::pair<float, Tensor> softmax_cross_entropy(const Tensor& logits,
                                               const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Channel split / concat. concat(split(x, k)) == x bitwise.
// ---------------------------------------------------------------------------

std::pair<Tensor, Tensor> channel_split(const Tensor& input, int first_count);
Tensor channel_concat(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Inverted dropout: scales survivors by 1/(1-rate) at train time, identity in
// eval mode. mask_out (optional) receives the applied scale per element.
// ---------------------------------------------------------------------------

Tensor dropout(const Tensor& input, float rate, bool train, Rng& rng, Tensor* mask_out = nullptr);

}  // namespace sslnet
