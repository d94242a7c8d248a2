#pragma once

#include <cstdint>

#include "roadfusion/tape.hpp"
#include "roadfusion/tensor.hpp"

namespace rf::dfm {

// Learnable parameters of the two-stage dynamic fusion module.
//
// omega1 is a same-padded 3x3 convolution taking the feature-to-fuse
// (C channels) to K*K*C channels: the per-position channel-wise kernels W1.
// Channel layout of its output: entry for kernel offset q and feature
// channel c lives at q*C + c (offsets row-major over the K x K window).
//
// omega2 is a fully connected layer taking the globally pooled feature
// (C values) to C'*C values: the cross-channel kernel W2, row-major C' x C.
struct DfmParams {
    Tensor omega1_w;  // (3, 3, C, K*K*C)
    Tensor omega1_b;  // (K*K*C)
    Tensor omega2_w;  // (C'*C, C)
    Tensor omega2_b;  // (C'*C)
    int k = 3;
    int c_in = 0;
    int c_out = 0;

    static DfmParams zeros(int c, int c_out, int k = 3);
    // Zero weights, biases set so the module is the identity at start:
    // W1 = center tap per channel, W2 = identity matrix, hence the residual
    // form outputs exactly 2 * F_r.
    static DfmParams identity_init(int c, int c_out, int k = 3);
    static DfmParams random_init(int c, int c_out, Rng& rng, int k = 3, double stddev = 0.1);
};

// Parameters of the unfactorized variant: one kernel-generating convolution
// emitting the full K*K*C*C' kernel per position. Entry for output channel o,
// offset q, input channel c lives at o*(K*K*C) + q*C + c.
struct NaiveDfmParams {
    Tensor w;  // (3, 3, C, K*K*C*C')
    Tensor b;  // (K*K*C*C')
    int k = 3;
    int c_in = 0;
    int c_out = 0;

    static NaiveDfmParams random_init(int c, int c_out, Rng& rng, int k = 3, double stddev = 0.1);
};

// Spatially variant channel-wise convolution: each position applies its own
// K x K kernel per channel (same zero padding).
Tensor dynamic_channelwise_conv(const Tensor& f_r, const Tensor& w1, int k);

// Applies the C' x C matrix at every position (1x1 cross-channel mix).
Tensor per_pixel_channel_mix(const Tensor& f_fp, const Tensor& w2);

struct Stage1Result {
    Tensor fused;  // F_f', H x W x C
    Tensor w1;     // H x W x K*K*C
};
Stage1Result dfm_stage1(const Tensor& f_r, const Tensor& f_t, const DfmParams& params);

struct Stage2Result {
    Tensor fused;  // F_f, H x W x C'
    Tensor w2;     // C' x C
};
Stage2Result dfm_stage2(const Tensor& f_fp, const Tensor& f_t, const DfmParams& params);

// Residual two-stage forward: F_r + stage2(stage1(F_r, F_t), F_t).
Tensor dfm_forward(const Tensor& f_r, const Tensor& f_t, const DfmParams& params);

// Unfactorized reference: generates the full per-position cross-channel
// kernel from F_t and applies it to F_r.
Tensor naive_generate(const Tensor& f_t, const NaiveDfmParams& params);
Tensor naive_apply(const Tensor& f_r, const Tensor& w, int k, int c_out);
Tensor dfm_naive_forward(const Tensor& f_r, const Tensor& f_t, const NaiveDfmParams& params);

// Tape nodes for training: forwards match the pure functions above.
Tape::NodeId dynamic_channelwise_conv(Tape& tape, Tape::NodeId f_r, Tape::NodeId w1, int k);
Tape::NodeId per_pixel_channel_mix(Tape& tape, Tape::NodeId f_fp, Tape::NodeId w2);

struct DfmParamNodes {
    Tape::NodeId omega1_w = -1;
    Tape::NodeId omega1_b = -1;
    Tape::NodeId omega2_w = -1;
    Tape::NodeId omega2_b = -1;
};
DfmParamNodes attach_params(Tape& tape, const DfmParams& params);

// Builds the full residual DFM onto the tape and returns the output node.
Tape::NodeId dfm_attach(Tape& tape, Tape::NodeId f_r, Tape::NodeId f_t,
                        const DfmParamNodes& nodes, int k, int c_in, int c_out);

struct DfmGrads {
    Tensor f_r, f_t;
    Tensor omega1_w, omega1_b;
    Tensor omega2_w, omega2_b;
};

// Analytic gradients of the residual forward for a given upstream gradient.
DfmGrads dfm_backward(const Tensor& f_r, const Tensor& f_t, const DfmParams& params,
                      const Tensor& upstream);

enum class CostVariant { naive, factorized };

// Multiply-accumulate count of applying (and optionally generating) the
// dynamic kernel. Application: naive H*W*K^2*C*C'; factorized
// H*W*K^2*C + H*W*C*C'. Generation adds the Omega1 convolution (3x3 from C
// channels), and for the factorized variant the pooling accumulations and
// the fully connected layer.
std::uint64_t cost_model(int h, int w, int c, int c_out, int k, CostVariant variant,
                         bool include_generation = false);

// Per-pixel mean over channels, min-max normalized to [0, 1]; a degenerate
// (constant) map comes back as all zeros.
Tensor mean_activation_map(const Tensor& f);

}  // namespace rf::dfm
