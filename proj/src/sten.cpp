#include "sparta/sten.hpp"

#include <cmath>

#include "sparta/rng.hpp"

namespace sparta {

namespace {

std::vector<double> to_real(const SpikeTensor& s) {
    std::vector<double> out(s.data.size());
    for (size_t i = 0; i < s.data.size(); ++i) out[i] = s.data[i];
    return out;
}

void fill_normal(std::vector<double>& v, Rng& rng, double std_dev) {
    for (double& x : v) x = rng.normal(0.0, std_dev);
}

} // namespace

StenParams init_sten(const StenConfig& config, int c_in, double mu_tau, double sigma_tau,
                     double mu_vth, double sigma_vth, ResetMode reset_mode, uint64_t seed) {
    require(config.stages >= 0, "init_sten: negative stage count");
    require(config.feature_dim() >= 1, "init_sten: all branches disabled");
    require(config.stages == 0 || config.stage_channels >= 1,
            "init_sten: stage channel count must be positive");

    StenParams p;
    p.config = config;
    Rng rng(seed);
    int c = c_in;
    for (int s = 0; s < config.stages; ++s) {
        StenParams::Stage st;
        st.c_in = c;
        st.c_out = config.stage_channels;
        st.conv_w.resize(static_cast<size_t>(st.c_out) * st.c_in * 9);
        st.conv_b.assign(st.c_out, 0.0);
        fill_normal(st.conv_w, rng, config.init_scale / std::sqrt(9.0 * st.c_in));
        st.lif = init_heterogeneous(st.c_out, mu_tau, sigma_tau, mu_vth, sigma_vth, reset_mode,
                                    rng.next_u64());
        p.stages.push_back(std::move(st));
        c = config.stage_channels;
    }
    if (config.d1 > 0) {
        p.b1_w.resize(static_cast<size_t>(config.d1) * c);
        p.b1_b.assign(config.d1, 0.0);
        fill_normal(p.b1_w, rng, config.init_scale / std::sqrt(static_cast<double>(c)));
    }
    if (config.d2 > 0) {
        p.b2_w.resize(static_cast<size_t>(config.d2) * c * 9);
        p.b2_b.assign(config.d2, 0.0);
        fill_normal(p.b2_w, rng, config.init_scale / std::sqrt(9.0 * c));
        p.b2_lif = init_heterogeneous(config.d2, mu_tau, sigma_tau, mu_vth, sigma_vth, reset_mode,
                                      rng.next_u64());
    }
    return p;
}

SpikeInfo extract_cues(const SpikeTensor& spikes, int p_h, int p_w, kernels::Exec exec) {
    require(p_h >= 1 && p_w >= 1, "extract_cues: patch dims must be positive");
    require(spikes.h % p_h == 0 && spikes.w % p_w == 0,
            "extract_cues: patch " + std::to_string(p_w) + "x" + std::to_string(p_h) +
                " does not divide grid " + std::to_string(spikes.w) + "x" +
                std::to_string(spikes.h));
    require(spikes.t >= 1, "extract_cues: need at least one timestep");

    const int ht = spikes.h / p_h;
    const int wt = spikes.w / p_w;
    const int n = ht * wt;
    const int t_steps = spikes.t;

    SpikeInfo info;
    info.timesteps = t_steps;
    info.t_first.resize(n);
    info.t_interval.resize(n);
    info.t_burst.resize(n);
    info.f_rate.resize(n);

    const bool par = exec == kernels::Exec::parallel;
#pragma omp parallel for schedule(static) if (par)
    for (int tok = 0; tok < n; ++tok) {
        const int ty = tok / wt;
        const int tx = tok % wt;
        int first = -1, last = -1, count = 0, isis = 0, short_isis = 0;
        long isi_sum = 0;
        for (int t = 0; t < t_steps; ++t) {
            uint8_t fired = 0;
            for (int c = 0; c < spikes.c && !fired; ++c)
                for (int py = 0; py < p_h && !fired; ++py)
                    for (int px = 0; px < p_w; ++px)
                        if (spikes.at(t, c, ty * p_h + py, tx * p_w + px)) {
                            fired = 1;
                            break;
                        }
            if (!fired) continue;
            if (first < 0) first = t;
            if (last >= 0) {
                const int isi = t - last;
                isi_sum += isi;
                ++isis;
                if (isi <= 2) ++short_isis;
            }
            last = t;
            ++count;
        }
        if (count == 0) {
            info.t_first[tok] = 1.0;
            info.t_interval[tok] = t_steps;
            info.t_burst[tok] = 0.0;
            info.f_rate[tok] = 0.0;
        } else {
            info.t_first[tok] = static_cast<double>(first) / t_steps;
            info.t_interval[tok] =
                isis > 0 ? static_cast<double>(isi_sum) / isis : static_cast<double>(t_steps);
            info.t_burst[tok] = isis > 0 ? static_cast<double>(short_isis) / isis : 0.0;
            info.f_rate[tok] = static_cast<double>(count) / t_steps;
        }
    }
    return info;
}

EncodeResult encode_multiscale(const SpikeTensor& spikes, const StenParams& params,
                               kernels::Exec exec) {
    require(spikes.t >= 1 && spikes.c >= 1, "encode_multiscale: empty input");

    // Downsampling stages: stride-2 conv, then HI-LIF keeps the tensor binary.
    SpikeTensor cur = spikes;
    for (const auto& st : params.stages) {
        require(st.c_in == cur.c, "encode_multiscale: stage channel mismatch");
        const int ho = kernels::conv3x3_out_dim(cur.h, 2);
        const int wo = kernels::conv3x3_out_dim(cur.w, 2);
        Tensor conv_out(cur.t, st.c_out, ho, wo);
        const auto real = to_real(cur);
        kernels::conv3x3(exec, real.data(), conv_out.data.data(), st.conv_w.data(),
                         st.conv_b.data(), cur.t, st.c_in, st.c_out, cur.h, cur.w, 2);
        cur = run_sequence(conv_out, st.lif, exec);
    }

    const auto& cfg = params.config;
    const int c = cur.c, h = cur.h, w = cur.w, t_steps = cur.t;
    const int n = h * w;
    const int d = cfg.feature_dim();
    TokenGrid grid(n, d, h, w);
    const auto real = to_real(cur);
    const size_t plane = static_cast<size_t>(h) * w;
    const double inv_t = 1.0 / t_steps;

    if (cfg.d1 > 0) {
        Tensor b1(t_steps, cfg.d1, h, w);
        kernels::conv1x1(exec, real.data(), b1.data.data(), params.b1_w.data(),
                         params.b1_b.data(), t_steps, c, cfg.d1, h, w);
        for (int f = 0; f < cfg.d1; ++f)
            for (int tok = 0; tok < n; ++tok) {
                double acc = 0.0;
                for (int t = 0; t < t_steps; ++t) acc += b1.data[(t * cfg.d1 + f) * plane + tok];
                grid.row(tok)[f] = acc * inv_t;
            }
    }
    if (cfg.d2 > 0) {
        Tensor b2(t_steps, cfg.d2, h, w);
        kernels::conv3x3(exec, real.data(), b2.data.data(), params.b2_w.data(),
                         params.b2_b.data(), t_steps, c, cfg.d2, h, w, 1);
        const SpikeTensor b2s = run_sequence(b2, params.b2_lif, exec);
        for (int f = 0; f < cfg.d2; ++f)
            for (int tok = 0; tok < n; ++tok) {
                double acc = 0.0;
                for (int t = 0; t < t_steps; ++t) acc += b2s.data[(t * cfg.d2 + f) * plane + tok];
                grid.row(tok)[cfg.d1 + f] = acc * inv_t;
            }
    }
    if (cfg.d3 > 0) {
        // Global average pool per (t, channel); width adapted by cyclic
        // channel assignment so a constant input passes through unchanged.
        std::vector<double> pooled(c, 0.0);
        for (int t = 0; t < t_steps; ++t)
            for (int ci = 0; ci < c; ++ci) {
                double acc = 0.0;
                const double* src = real.data() + (static_cast<size_t>(t) * c + ci) * plane;
                for (size_t e = 0; e < plane; ++e) acc += src[e];
                pooled[ci] += acc / static_cast<double>(plane);
            }
        for (int ci = 0; ci < c; ++ci) pooled[ci] *= inv_t;
        for (int f = 0; f < cfg.d3; ++f) {
            const double v = pooled[f % c];
            for (int tok = 0; tok < n; ++tok) grid.row(tok)[cfg.d1 + cfg.d2 + f] = v;
        }
    }

    return {std::move(grid), std::move(cur)};
}

TokenGrid timing_attention(const TokenGrid& features, const SpikeInfo& cues,
                           const std::array<double, 3>& theta) {
    require(static_cast<size_t>(features.n) == cues.tokens(),
            "timing_attention: cue/token count mismatch");
    TokenGrid out = features;
    for (int i = 0; i < features.n; ++i) {
        const double z = theta[0] * cues.f_rate[i] + theta[1] * (1.0 - cues.t_first[i]) +
                         theta[2] * cues.t_burst[i];
        const double g = 1.0 / (1.0 + std::exp(-z));
        double* row = out.row(i);
        for (int f = 0; f < features.d; ++f) row[f] *= g;
    }
    return out;
}

} // namespace sparta
