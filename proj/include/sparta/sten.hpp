#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sparta/hilif.hpp"
#include "sparta/kernels.hpp"
#include "sparta/types.hpp"

namespace sparta {

// Spatio-Temporal Encoding Network. Cascading stride-2 conv + HI-LIF stages
// set the token geometry, then three parallel branches extract features:
//   branch 1: 1x1 conv (pointwise channel mixing)
//   branch 2: 3x3 conv followed by an HI-LIF layer
//   branch 3: global average pool, broadcast back over the grid
// Branch outputs are concatenated along the feature axis and mean-reduced
// over time into an N x D token grid. A branch with width 0 is disabled.
struct StenConfig {
    int stages = 2;
    int stage_channels = 16;
    int d1 = 8;  // 1x1 branch width
    int d2 = 16; // 3x3 + HI-LIF branch width
    int d3 = 8;  // pooled branch width
    double init_scale = 2.0; // multiplies the 1/sqrt(fan_in) weight std

    int feature_dim() const { return d1 + d2 + d3; }
};

struct StenParams {
    struct Stage {
        int c_in = 0, c_out = 0;
        std::vector<double> conv_w; // c_out x c_in x 3 x 3
        std::vector<double> conv_b; // c_out
        HilifParams lif;
    };
    StenConfig config;
    std::vector<Stage> stages;
    std::vector<double> b1_w, b1_b; // 1x1: d1 x c
    std::vector<double> b2_w, b2_b; // 3x3: d2 x c x 3 x 3
    HilifParams b2_lif;             // d2 channels
    // Gate over [F_rate, 1-T_first, T_burst]; starts mildly positive so
    // temporally rich tokens are emphasized from the first step.
    std::array<double, 3> theta_ta{0.5, 0.5, 0.5};
};

struct EncodeResult {
    TokenGrid features;       // N x D, N = tokens of the post-stage grid
    SpikeTensor stage_output; // spikes the cues are extracted from
};

// Seeded initialization; HI-LIF layers draw from the given priors.
StenParams init_sten(const StenConfig& config, int c_in, double mu_tau, double sigma_tau,
                     double mu_vth, double sigma_vth, ResetMode reset_mode, uint64_t seed);

// Per-token temporal cues over non-overlapping p_h x p_w x C patches. A
// token spikes at step t iff any of its cells does.
SpikeInfo extract_cues(const SpikeTensor& spikes, int p_h, int p_w,
                       kernels::Exec exec = kernels::Exec::parallel);

// Full encoder: stages, branches, concat, time mean.
EncodeResult encode_multiscale(const SpikeTensor& spikes, const StenParams& params,
                               kernels::Exec exec = kernels::Exec::parallel);

// Scalar gate per token, g = logistic(theta . [F_rate, 1-T_first, T_burst]),
// applied row-wise. Tokens with richer temporal activity get larger gates.
TokenGrid timing_attention(const TokenGrid& features, const SpikeInfo& cues,
                           const std::array<double, 3>& theta);

} // namespace sparta
