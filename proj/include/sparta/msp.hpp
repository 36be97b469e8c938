#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sparta/kernels.hpp"
#include "sparta/types.hpp"

namespace sparta {

// Multi-Scale Processing: exponential temporal weighting injected into
// token attention as an additive log-bias on the pre-softmax scores.
struct MspParams {
    // Decay rates are stored as raw values with value = exp(raw), so they
    // stay positive under gradient updates. gamma is unconstrained.
    double alpha_raw = 0.0;
    double beta_raw = 0.0;
    double gamma = 0.0;
    // Ablation switches (Table-5-style "w/o" runs): force the timing or
    // interval factor to 1, or the rate factor to 0.5 (gamma = 0).
    bool ablate_timing = false;
    bool ablate_interval = false;
    bool ablate_rate = false;

    int d = 0;
    int heads = 1;
    std::vector<double> wq, wk, wv, wo; // d x d each

    double alpha() const { return std::exp(alpha_raw); }
    double beta() const { return std::exp(beta_raw); }
};

struct TemporalWeights {
    std::vector<double> w_timing;   // exp(-alpha * T_first)
    std::vector<double> w_interval; // exp(-beta * T_interval)
    std::vector<double> w_combined; // timing * interval * logistic(gamma * F_rate)
};

MspParams init_msp(int d, int heads, double alpha, double beta, double gamma, uint64_t seed);

TemporalWeights temporal_weights(const SpikeInfo& cues, const MspParams& params);

// Multi-head self-attention over all N tokens where key j's pre-softmax
// score gets the additive bias log(w_combined[j] + 1e-8). Uniform weights
// reduce exactly to unbiased attention. mass_out, when given, accumulates
// the attention mass each token receives (length N).
TokenGrid bias_attention(const TokenGrid& tokens, const TemporalWeights& weights,
                         const MspParams& params, kernels::Exec exec = kernels::Exec::parallel,
                         double* mass_out = nullptr, uint64_t* scoremix_macs = nullptr);

constexpr double kLogBiasEpsilon = 1e-8;

} // namespace sparta
