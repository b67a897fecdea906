#pragma once

#include <cmath>
#include <vector>

#include "sslnet/tensor.hpp"

namespace sslnet {

/// Per-channel learnable displacement pair. alpha moves a channel along the
/// row axis (O[c,i,j] = I[c,i+alpha_c,j+beta_c]), beta along the column axis.
/// Gradient buffers accumulate; a frozen layer ignores all updates.
struct ShiftParams {
    std::vector<float> alpha, beta;
    std::vector<float> grad_alpha, grad_beta;
    bool frozen = false;

    static ShiftParams zeros(int channels);
    int channels() const { return static_cast<int>(alpha.size()); }
    void zero_grads();
};

enum class ShiftKind { Grouped, ActiveBilinear, SparseQuantized };

/// How grouped displacements map channels to the K^2 offsets of a KxK kernel.
/// EvenPartition: channels split into K^2 contiguous groups of
/// floor(C/K^2); leftover channels stay at (0,0). Eq2Literal: group index is
/// floor(c/K^2), i.e. fixed group size K^2 regardless of C.
enum class GroupAssign { EvenPartition, Eq2Literal };

ShiftParams grouped_displacements(int channels, int K, GroupAssign mode = GroupAssign::EvenPartition);

/// Standard shift: O[c,i,j] = I[c, i+a_c, j+b_c] with zero fill for reads
/// that fall outside the map. Displacements are rounded half away from zero;
/// moved content is copied as row blocks, never interpolated.
Tensor shift_forward_integer(const Tensor& input, const ShiftParams& sp);

/// Bilinear relaxation: each output samples the four integer neighbors of
/// (i+a_c, j+b_c) with hat weights. Collapses bitwise to the integer shift
/// when all displacements are integral.
Tensor shift_forward_bilinear(const Tensor& input, const ShiftParams& sp);

/// Quantized feed-forward: integer shift of round(alpha), round(beta).
/// This is the inference form; no multiplications occur.
Tensor shift_forward_quantized(const Tensor& input, const ShiftParams& sp);

/// Displacement gradients of the bilinear relaxation, accumulated into
/// sp.grad_alpha / sp.grad_beta and summed over batch and space. Sign(0) is
/// taken as +1. Frozen params accumulate nothing.
void shift_backward_params(const Tensor& input, ShiftParams& sp, const Tensor& grad_out);

/// Input gradient of the quantized forward: the inverse memory movement,
/// i.e. an integer shift of grad_out by the negated rounded displacements.
/// Exact adjoint of shift_forward_quantized.
Tensor shift_backward_input(const ShiftParams& sp, const Tensor& grad_out);

/// Input gradient of the bilinear forward (adjoint of the hat-weight
/// gather): a bilinear shift of grad_out by the negated displacements.
Tensor shift_backward_input_bilinear(const ShiftParams& sp, const Tensor& grad_out);

struct PenaltyConfig {
    enum class Norm { L1, L2 };
    float lambda = 0.0f;
    Norm norm = Norm::L2;
};

/// L1: lambda*(sum|a|+sum|b|).  L2: lambda*(sum a^2 + sum b^2).
float penalty_value(const ShiftParams& sp, const PenaltyConfig& cfg);

/// Adds the penalty (sub)gradient into grad_alpha/grad_beta.
/// L1 subgradient: lambda*sign with sign(0)=0.  L2: 2*lambda*value.
/// No-op when frozen.
void penalty_grad_accumulate(ShiftParams& sp, const PenaltyConfig& cfg);

/// Fraction of channels whose rounded displacement is (0,0) — the channels
/// that cost no memory movement at inference.
double shift_sparsity(const ShiftParams& sp);

/// In-place integer shift of one h*w channel: row blocks are moved in an
/// order that never reads an overwritten row, and the vacated band is
/// zero-filled. This is the inference kernel the sparsity argument is about —
/// an unshifted channel needs no call at all.
void shift_channel_inplace(float* chan, int h, int w, int a, int b);

/// Round half away from zero, the quantizer used everywhere here.
inline int round_displacement(float v) {
    return static_cast<int>(std::lround(v));
}

ShiftParams round_displacements(const ShiftParams& sp);

}  // namespace sslnet
