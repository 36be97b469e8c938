#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sparta/kernels.hpp"
#include "sparta/types.hpp"

namespace sparta {

enum class ResetMode { hard, soft };

// Per-channel neuron parameters. The membrane time constant is stored
// reparameterized as w = -log(tau - 1), so tau_inv = logistic(w) stays in
// (0,1) no matter what gradient updates do to w.
struct HilifParams {
    int channels = 0;
    std::vector<double> w;    // one per channel
    std::vector<double> v_th; // one per channel, kept >= kVthFloor
    double mu_tau = 2.0;
    double sigma_tau = 0.0;
    double mu_vth = 1.0;
    double sigma_vth = 0.0;
    ResetMode reset_mode = ResetMode::soft;
    double v_reset = 0.0;

    std::vector<double> tau_inv() const;
    std::vector<double> tau() const;
};

// Thresholds never drop below this, whether from sampling, feedback, or
// gradient projection; a non-positive threshold fires unconditionally.
constexpr double kVthFloor = 0.01;
constexpr double kTauFloor = 1.01;

// Membrane potentials for one layer instance, shape (C, H, W).
struct HilifState {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    HilifState() = default;
    HilifState(int c_, int h_, int w_)
        : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0) {}
};

// Activity-feedback controller state (EMA of observed firing rate).
struct FeedbackState {
    double ema_activity = 0.0; // in [0, 1]
    double lambda = 0.9;       // EMA decay
    double eta = 0.05;         // adjustment gain
    double r_target = 0.2;     // target firing rate
};

// Draws per-channel tau and v_th from the normal priors (Algorithm 1 style:
// tau clamped to >= 1.01 before reparameterization, v_th clamped to
// >= kVthFloor). Deterministic for a fixed seed.
HilifParams init_heterogeneous(int channels, double mu_tau, double sigma_tau, double mu_vth,
                               double sigma_vth, ResetMode reset_mode, uint64_t seed);

// One timestep: charge v += (x - v) * tau_inv, fire where v >= v_th
// (inclusive), then reset (hard: v = v_reset; soft: v -= v_th).
void step(HilifState& state, const Tensor& x_t, const HilifParams& params, uint8_t* spikes,
          kernels::Exec exec = kernels::Exec::parallel);

// Unrolls step over a (T, C, H, W) input starting from v = 0. When trace is
// non-null it receives the post-step membrane history, same shape as x.
SpikeTensor run_sequence(const Tensor& x, const HilifParams& params,
                         kernels::Exec exec = kernels::Exec::parallel, Tensor* trace = nullptr);

// Same dynamics with a spike-tensor input (values 0/1 scaled by gain).
SpikeTensor run_sequence(const SpikeTensor& x, const HilifParams& params, double input_gain = 1.0,
                         kernels::Exec exec = kernels::Exec::parallel, Tensor* trace = nullptr);

// EMA update plus multiplicative threshold scaling:
//   ema' = lambda * ema + (1 - lambda) * observed_rate
//   v_th <- max(kVthFloor, v_th * (1 + eta * (ema' - r_target)))
// The shared factor preserves threshold ordering across channels.
std::pair<HilifParams, FeedbackState> feedback_adjust(const HilifParams& params,
                                                      double observed_rate,
                                                      const FeedbackState& fb);

// Flat key=value checkpoint records for one layer (hilif.w.<c>, hilif.vth.<c>,
// priors, reset mode), matching the grammar in docs/formats.md.
std::string save_params(const HilifParams& params, const std::string& prefix = "hilif");
HilifParams load_params(const std::map<std::string, std::string>& kv,
                        const std::string& prefix = "hilif");

} // namespace sparta
