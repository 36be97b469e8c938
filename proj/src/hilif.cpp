#include "sparta/hilif.hpp"

#include <cmath>

#include "sparta/rng.hpp"

namespace sparta {

std::vector<double> HilifParams::tau_inv() const {
    std::vector<double> out(w.size());
    for (size_t i = 0; i < w.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-w[i]));
    return out;
}

std::vector<double> HilifParams::tau() const {
    std::vector<double> out(w.size());
    for (size_t i = 0; i < w.size(); ++i) out[i] = 1.0 + std::exp(-w[i]);
    return out;
}

HilifParams init_heterogeneous(int channels, double mu_tau, double sigma_tau, double mu_vth,
                               double sigma_vth, ResetMode reset_mode, uint64_t seed) {
    require(channels >= 1, "init_heterogeneous: channel count must be positive");
    require(mu_tau > kTauFloor, "init_heterogeneous: mu_tau must exceed 1.01");
    require(sigma_tau >= 0.0 && sigma_vth >= 0.0, "init_heterogeneous: negative sigma");
    require(mu_vth > 0.0, "init_heterogeneous: mu_vth must be positive");

    HilifParams p;
    p.channels = channels;
    p.mu_tau = mu_tau;
    p.sigma_tau = sigma_tau;
    p.mu_vth = mu_vth;
    p.sigma_vth = sigma_vth;
    p.reset_mode = reset_mode;
    p.w.resize(channels);
    p.v_th.resize(channels);

    Rng rng(seed);
    for (int c = 0; c < channels; ++c) {
        double tau_init = std::max(rng.normal(mu_tau, sigma_tau), kTauFloor);
        p.w[c] = -std::log(tau_init - 1.0);
        p.v_th[c] = std::max(rng.normal(mu_vth, sigma_vth), kVthFloor);
    }
    return p;
}

void step(HilifState& state, const Tensor& x_t, const HilifParams& params, uint8_t* spikes,
          kernels::Exec exec) {
    require(x_t.t == 1, "step: input must be a single timestep");
    require(x_t.c == state.c && x_t.h == state.h && x_t.w == state.w,
            "step: input shape does not match state");
    require(params.channels == state.c, "step: parameter channel count mismatch");
    const auto tau_inv = params.tau_inv();
    kernels::lif_step(exec, state.v.data(), x_t.data.data(), tau_inv.data(),
                      params.v_th.data(), params.reset_mode == ResetMode::hard, params.v_reset,
                      spikes, state.c, state.h * state.w);
}

namespace {

SpikeTensor run_impl(const double* x, int t, int c, int h, int w, const HilifParams& params,
                     kernels::Exec exec, Tensor* trace) {
    require(t >= 1, "run_sequence: need at least one timestep");
    require(params.channels == c, "run_sequence: parameter channel count mismatch");
    const auto tau_inv = params.tau_inv();
    const int plane = h * w;
    const size_t step_size = static_cast<size_t>(c) * plane;
    HilifState state(c, h, w);
    SpikeTensor spikes(t, c, h, w);
    if (trace) *trace = Tensor(t, c, h, w);
    for (int ti = 0; ti < t; ++ti) {
        kernels::lif_step(exec, state.v.data(), x + ti * step_size, tau_inv.data(),
                          params.v_th.data(), params.reset_mode == ResetMode::hard,
                          params.v_reset, spikes.data.data() + ti * step_size, c, plane);
        if (trace)
            std::copy(state.v.begin(), state.v.end(), trace->data.begin() + ti * step_size);
    }
    for (double v : state.v)
        if (!std::isfinite(v)) throw NumericError("run_sequence: non-finite membrane potential");
    return spikes;
}

} // namespace

SpikeTensor run_sequence(const Tensor& x, const HilifParams& params, kernels::Exec exec,
                         Tensor* trace) {
    return run_impl(x.data.data(), x.t, x.c, x.h, x.w, params, exec, trace);
}

SpikeTensor run_sequence(const SpikeTensor& x, const HilifParams& params, double input_gain,
                         kernels::Exec exec, Tensor* trace) {
    Tensor real(x.t, x.c, x.h, x.w);
    for (size_t i = 0; i < x.data.size(); ++i) real.data[i] = input_gain * x.data[i];
    return run_impl(real.data.data(), x.t, x.c, x.h, x.w, params, exec, trace);
}

std::pair<HilifParams, FeedbackState> feedback_adjust(const HilifParams& params,
                                                      double observed_rate,
                                                      const FeedbackState& fb) {
    require(observed_rate >= 0.0 && observed_rate <= 1.0,
            "feedback_adjust: observed rate must lie in [0,1]");
    FeedbackState fb2 = fb;
    fb2.ema_activity = fb.lambda * fb.ema_activity + (1.0 - fb.lambda) * observed_rate;
    HilifParams p2 = params;
    const double factor = 1.0 + fb.eta * (fb2.ema_activity - fb.r_target);
    for (double& th : p2.v_th) th = std::max(kVthFloor, th * factor);
    return {std::move(p2), fb2};
}

std::string save_params(const HilifParams& params, const std::string& prefix) {
    std::string out;
    char buf[64];
    auto emit = [&](const std::string& key, double v) {
        snprintf(buf, sizeof(buf), "%.17g", v);
        out += prefix + "." + key + "=" + buf + "\n";
    };
    out += prefix + ".channels=" + std::to_string(params.channels) + "\n";
    out += prefix + ".reset_mode=" + (params.reset_mode == ResetMode::hard ? "hard" : "soft") + "\n";
    emit("v_reset", params.v_reset);
    emit("mu_tau", params.mu_tau);
    emit("sigma_tau", params.sigma_tau);
    emit("mu_vth", params.mu_vth);
    emit("sigma_vth", params.sigma_vth);
    for (int c = 0; c < params.channels; ++c) emit("w." + std::to_string(c), params.w[c]);
    for (int c = 0; c < params.channels; ++c) emit("vth." + std::to_string(c), params.v_th[c]);
    return out;
}

HilifParams load_params(const std::map<std::string, std::string>& kv, const std::string& prefix) {
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(prefix + "." + key);
        if (it == kv.end()) throw FormatError("checkpoint missing key " + prefix + "." + key);
        return it->second;
    };
    HilifParams p;
    p.channels = std::stoi(get("channels"));
    require(p.channels >= 1, "checkpoint: invalid channel count");
    const std::string& mode = get("reset_mode");
    if (mode == "hard")
        p.reset_mode = ResetMode::hard;
    else if (mode == "soft")
        p.reset_mode = ResetMode::soft;
    else
        throw FormatError("checkpoint: unknown reset mode \"" + mode + "\"");
    p.v_reset = std::stod(get("v_reset"));
    p.mu_tau = std::stod(get("mu_tau"));
    p.sigma_tau = std::stod(get("sigma_tau"));
    p.mu_vth = std::stod(get("mu_vth"));
    p.sigma_vth = std::stod(get("sigma_vth"));
    p.w.resize(p.channels);
    p.v_th.resize(p.channels);
    for (int c = 0; c < p.channels; ++c) {
        p.w[c] = std::stod(get("w." + std::to_string(c)));
        p.v_th[c] = std::stod(get("vth." + std::to_string(c)));
        require(p.v_th[c] >= kVthFloor, "checkpoint: threshold below floor");
    }
    return p;
}

} // namespace sparta
