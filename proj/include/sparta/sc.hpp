#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sparta/kernels.hpp"
#include "sparta/mlp.hpp"
#include "sparta/types.hpp"

namespace sparta {

// Sparse attention classifier: hard top-K cut by temporal urgency, then L
// attention layers over only the K survivors, then a mean-pool head.
struct ScConfig {
    int d = 32;
    int heads = 4;
    int layers = 2;
    int ffn_dim = 64;
    int classes = 2;
    int prio_hidden = 4; // temporal-integration residual net
};

struct ScParams {
    ScConfig config;
    // Urgency u = w_e*(1-T_first) + w_i*(1-T_interval/T) + w_r*F_rate + residual,
    // weights softplus-reparameterized so they stay nonnegative.
    std::array<double, 3> prio_w_raw{};
    std::array<bool, 3> prio_ablate{false, false, false}; // force w_e/w_i/w_r to zero
    Mlp prio_residual; // 3 -> prio_hidden -> 1, zero-initialized
    double kappa_raw = 0.0; // kappa = softplus(raw) >= 0, attention sharpness

    struct Layer {
        std::vector<double> wq, wk, wv, wo; // d x d
        std::vector<double> ffn_w1, ffn_b1; // ffn_dim x d, ffn_dim
        std::vector<double> ffn_w2, ffn_b2; // d x ffn_dim, d
    };
    std::vector<Layer> layers;
    std::vector<double> head_w, head_b; // classes x d, classes

    std::array<double, 3> prio_w() const {
        return {prio_ablate[0] ? 0.0 : softplus(prio_w_raw[0]),
                prio_ablate[1] ? 0.0 : softplus(prio_w_raw[1]),
                prio_ablate[2] ? 0.0 : softplus(prio_w_raw[2])};
    }
    double kappa() const { return softplus(kappa_raw); }
};

ScParams init_sc(const ScConfig& config, uint64_t seed);

// Priority from the learned weights plus the temporal-integration residual.
std::vector<double> priority_scores(const SpikeInfo& cues, const ScParams& params);

// Same triad with unit weights and no residual; exported to STSG as
// s_temporal for score fusion.
std::vector<double> priority_unit(const SpikeInfo& cues);

struct SelectResult {
    TokenGrid tokens;         // K rows, original relative order
    std::vector<int> indices; // source positions in the input grid
};

// Keeps the K highest-urgency tokens (ties toward the lower index). Dropped
// tokens contribute to nothing downstream.
SelectResult hard_select(const TokenGrid& tokens, const std::vector<double>& urgency, int k);

// Per-stage multiply-accumulate accounting. MACs count multiplies only;
// FLOPs ~ 2x MACs.
struct OpCountReport {
    struct Stage {
        std::string name;
        uint64_t macs = 0;
        int tokens_in = 0;
        int tokens_out = 0;
        double sparsity = 0.0; // fraction of tokens this stage does not touch
    };
    std::vector<Stage> stages;

    uint64_t total_macs() const;
    uint64_t stage_macs(const std::string& name) const;
    std::string to_csv() const;
    std::string summary() const;
};

// L layers of multi-head self-attention with urgency-scaled logits (query
// i's logits are multiplied by 1 + kappa * u_hat[i], u_hat min-max
// normalized), each followed by a residual feed-forward block. mass_out
// accumulates received attention mass per token; scoremix_macs counts the
// multiplies of the quadratic score/value-mixing stage.
TokenGrid sparse_attention_stack(const TokenGrid& selected, const std::vector<double>& u_selected,
                                 const ScParams& params,
                                 kernels::Exec exec = kernels::Exec::parallel,
                                 double* mass_out = nullptr, uint64_t* scoremix_macs = nullptr);

// Mean-pool over tokens, then an affine map to class logits.
std::vector<double> classify(const TokenGrid& features, const ScParams& params);

// Analytic workload description for count_ops, assembled by the pipeline.
struct OpCountConfig {
    int timesteps = 0;
    int n_tokens = 0;  // tokens on the natural grid (STEN, MSP)
    int n_grouped = 0; // tokens after patch grouping (STSG, SC); 0 = n_tokens
    int k = 0;
    // STEN stages and branches
    struct ConvStage {
        int c_in, c_out, h_out, w_out;
    };
    std::vector<ConvStage> stages;
    int enc_c = 0, enc_h = 0, enc_w = 0;
    int d1 = 0, d2 = 0, d3 = 0;
    // MSP attention
    int msp_d = 0;
    // STSG nets
    int pred_hidden = 0, fuse_hidden = 0;
    // SC stack
    int sc_d = 0, sc_layers = 0, sc_ffn = 0, sc_classes = 0, prio_hidden = 0;
};

// Exact MAC counts per stage. One attention layer over K tokens costs
// 4*K*D^2 for the projections plus 2*K^2*D for score and value mixing; the
// quadratic part is reported as its own stage so the scaling exponent is
// measurable in isolation.
OpCountReport count_ops(const OpCountConfig& cfg);

} // namespace sparta
