#include "sparta/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sparta/rng.hpp"

namespace sparta {

namespace {

ResetMode parse_reset(const std::string& s) {
    return s == "hard" ? ResetMode::hard : ResetMode::soft;
}

template <class T>
std::vector<T> remap(const std::vector<T>& v, const std::vector<int>& sources) {
    std::vector<T> out(sources.size());
    for (size_t i = 0; i < sources.size(); ++i) out[i] = v[sources[i]];
    return out;
}

} // namespace

Pipeline::Pipeline(const PipelineConfig& config, uint64_t seed) : config_(config) {
    config_.validate();
    Rng seeds(seed);
    StenConfig sten_cfg;
    sten_cfg.stages = config.sten_stages;
    sten_cfg.stage_channels = config.sten_stage_channels;
    sten_cfg.d1 = config.sten_d1;
    sten_cfg.d2 = config.sten_d2;
    sten_cfg.d3 = config.sten_d3;
    sten_cfg.init_scale = config.sten_init_scale;
    params_.sten = init_sten(sten_cfg, 2, config.mu_tau, config.sigma_tau, config.mu_vth,
                             config.sigma_vth, parse_reset(config.reset_mode), seeds.next_u64());
    params_.msp = init_msp(config.feature_dim(), config.msp_heads, config.msp_alpha,
                           config.msp_beta, config.msp_gamma, seeds.next_u64());
    params_.msp.ablate_timing = config.ablate_timing;
    params_.msp.ablate_interval = config.ablate_interval;
    params_.msp.ablate_rate = config.ablate_rate;
    params_.stsg = init_stsg(config.stsg_hidden, config.k_min, seeds.next_u64());
    ScConfig sc_cfg;
    sc_cfg.d = config.feature_dim();
    sc_cfg.heads = config.sc_heads;
    sc_cfg.layers = config.sc_layers;
    sc_cfg.ffn_dim = config.ffn_dim();
    sc_cfg.classes = config.sc_classes;
    sc_cfg.prio_hidden = config.sc_prio_hidden;
    params_.sc = init_sc(sc_cfg, seeds.next_u64());
    params_.sc.prio_ablate = {config.ablate_we, config.ablate_wi, config.ablate_wr};
    fb_.lambda = config.fb_lambda;
    fb_.eta = config.fb_eta;
    fb_.r_target = config.fb_target;
}

SpikeTensor Pipeline::bin(const EventStream& stream) const {
    return bin_to_frames(stream, config_.timesteps, config_.frame_h, config_.frame_w);
}

InferenceResult Pipeline::infer(const EventStream& stream) const {
    return infer_frames(bin(stream));
}

std::pair<int, int> Pipeline::token_grid() const {
    int h = config_.frame_h, w = config_.frame_w;
    for (int s = 0; s < config_.sten_stages; ++s) {
        h = kernels::conv3x3_out_dim(h, 2);
        w = kernels::conv3x3_out_dim(w, 2);
    }
    return {h / config_.patch_h, w / config_.patch_w};
}

InferenceResult Pipeline::infer_frames(const SpikeTensor& frames) const {
    const auto exec = config_.parallel ? kernels::Exec::parallel : kernels::Exec::serial;
    InferenceResult res;

    // Encode: downsampling stages + three branches.
    EncodeResult enc = encode_multiscale(frames, params_.sten, exec);
    const SpikeTensor& spikes = enc.stage_output;
    res.spikes_per_step.assign(spikes.t, 0);
    for (int t = 0; t < spikes.t; ++t) {
        uint64_t n = 0;
        const size_t step = static_cast<size_t>(spikes.c) * spikes.h * spikes.w;
        for (size_t i = 0; i < step; ++i) n += spikes.data[t * step + i];
        res.spikes_per_step[t] = n;
    }

    // Token cues; patches larger than one cell also pool the features.
    SpikeInfo cues = extract_cues(spikes, config_.patch_h, config_.patch_w, exec);
    TokenGrid features = std::move(enc.features);
    if (config_.patch_h > 1 || config_.patch_w > 1) {
        const int ht = spikes.h / config_.patch_h;
        const int wt = spikes.w / config_.patch_w;
        TokenGrid pooled(ht * wt, features.d, ht, wt);
        const double inv = 1.0 / (config_.patch_h * config_.patch_w);
        for (int ty = 0; ty < ht; ++ty)
            for (int tx = 0; tx < wt; ++tx) {
                double* dst = pooled.row(ty * wt + tx);
                for (int py = 0; py < config_.patch_h; ++py)
                    for (int px = 0; px < config_.patch_w; ++px) {
                        const double* src = features.row((ty * config_.patch_h + py) * spikes.w +
                                                         tx * config_.patch_w + px);
                        for (int f = 0; f < features.d; ++f) dst[f] += src[f];
                    }
                for (int f = 0; f < features.d; ++f) dst[f] *= inv;
            }
        features = std::move(pooled);
    }
    const int n0 = features.n;
    res.grid_h = features.ht;
    res.grid_w = features.wt;
    res.rate_map = cues.f_rate;

    // Timing gate and temporally biased attention over all tokens.
    TemporalWeights weights = temporal_weights(cues, params_.msp);
    TokenGrid gated = timing_attention(features, cues, params_.sten.theta_ta);
    TokenGrid mixed = bias_attention(gated, weights, params_.msp, exec);

    // Per-token score ingredients on the natural grid.
    std::vector<double> s_spatial = spatial_scores(cues.f_rate, features.ht, features.wt, exec);
    std::vector<double> s_temporal = priority_unit(cues);

    // Patch grouping to the fixed token budget.
    const int n_target = config_.n_target > 0 ? config_.n_target : n0;
    std::vector<int> sources(n_target);
    if (n_target != n0) {
        GroupResult group = patch_group(mixed, cues.f_rate, n_target);
        mixed = std::move(group.tokens);
        sources = std::move(group.source_index);
        SpikeInfo grouped;
        grouped.timesteps = cues.timesteps;
        grouped.t_first = remap(cues.t_first, sources);
        grouped.t_interval = remap(cues.t_interval, sources);
        grouped.t_burst = remap(cues.t_burst, sources);
        grouped.f_rate = remap(cues.f_rate, sources);
        cues = std::move(grouped);
        s_spatial = remap(s_spatial, sources);
        s_temporal = remap(s_temporal, sources);
        weights.w_combined = remap(weights.w_combined, sources);
        weights.w_timing = remap(weights.w_timing, sources);
        weights.w_interval = remap(weights.w_interval, sources);
    } else {
        for (int i = 0; i < n_target; ++i) sources[i] = i;
    }
    const int n = mixed.n;

    // STSG: sparsity prediction, score fusion, top-K soft gating.
    SparsityDecision dec;
    auto [f_input, rho] = predict_sparsity(cues, params_.stsg.predictor);
    dec.f_input = f_input;
    dec.rho_dynamic = rho;
    dec.s_spatial = std::move(s_spatial);
    dec.s_msp = weights.w_combined;
    dec.s_temporal = std::move(s_temporal);
    dec.s_combined = fuse_scores(dec.s_spatial, dec.s_msp, dec.s_temporal, params_.stsg.fusion);
    if (config_.fixed_k > 0) {
        const int k = std::min(config_.fixed_k, n);
        // Reuse the dynamic selector with the rho that yields exactly k.
        auto [k2, mask] = select_topk(dec.s_combined, 1.0 - static_cast<double>(k) / n, n,
                                      std::min(params_.stsg.k_min, k));
        dec.k = k2;
        dec.mask = std::move(mask);
        dec.rho_dynamic = 1.0 - static_cast<double>(k2) / n;
    } else {
        auto [k, mask] = select_topk(dec.s_combined, rho, n, std::min(params_.stsg.k_min, n));
        dec.k = k;
        dec.mask = std::move(mask);
    }
    TokenGrid soft = gate(mixed, dec.mask, params_.stsg.gate);

    // SC: hard cut by urgency, sparse attention, head.
    std::vector<double> urgency = priority_scores(cues, params_.sc);
    SelectResult sel = hard_select(soft, urgency, dec.k);
    std::vector<double> u_sel = remap(urgency, sel.indices);
    std::vector<double> mass(sel.tokens.n, 0.0);
    TokenGrid attended = sparse_attention_stack(sel.tokens, u_sel, params_.sc, exec, mass.data());
    res.logits = classify(attended, params_.sc);
    res.predicted = static_cast<int>(std::max_element(res.logits.begin(), res.logits.end()) -
                                     res.logits.begin());

    // Diagnostics mapped back onto the natural grid.
    res.selected_map.assign(n0, 0);
    res.attention_mass.assign(n0, 0.0);
    const double mass_norm =
        1.0 / (static_cast<double>(params_.sc.config.layers) * params_.sc.config.heads *
               std::max(1, sel.tokens.n));
    double rate_sum = 0.0;
    for (int i = 0; i < sel.tokens.n; ++i) {
        const int grouped_idx = sel.indices[i];
        res.selected_map[sources[grouped_idx]] = 1;
        res.attention_mass[sources[grouped_idx]] += mass[i] * mass_norm;
        rate_sum += cues.f_rate[grouped_idx];
    }
    res.observed_rate = sel.tokens.n > 0 ? rate_sum / sel.tokens.n : 0.0;
    res.cues = std::move(cues);
    res.decision = std::move(dec);
    res.ops = count_ops(op_config(n, res.decision.k));
    return res;
}

void Pipeline::apply_feedback(double observed_rate) {
    bool first = true;
    FeedbackState next = fb_;
    auto adjust = [&](HilifParams& lif) {
        if (first) {
            auto [p2, fb2] = feedback_adjust(lif, observed_rate, fb_);
            lif = std::move(p2);
            next = fb2;
            first = false;
        } else {
            // Same EMA observation, same factor: scale directly.
            const double factor = 1.0 + fb_.eta * (next.ema_activity - fb_.r_target);
            for (double& th : lif.v_th) th = std::max(kVthFloor, th * factor);
        }
    };
    for (auto& st : params_.sten.stages) adjust(st.lif);
    if (params_.sten.config.d2 > 0) adjust(params_.sten.b2_lif);
    fb_ = next;
}

OpCountConfig Pipeline::op_config(int n_tokens, int k) const {
    OpCountConfig oc;
    oc.timesteps = config_.timesteps;
    auto [ht, wt] = token_grid();
    oc.n_tokens = ht * wt;
    oc.n_grouped = n_tokens;
    oc.k = k;
    int h = config_.frame_h, w = config_.frame_w, c = 2;
    for (const auto& st : params_.sten.stages) {
        h = kernels::conv3x3_out_dim(h, 2);
        w = kernels::conv3x3_out_dim(w, 2);
        oc.stages.push_back({st.c_in, st.c_out, h, w});
        c = st.c_out;
    }
    oc.enc_c = c;
    oc.enc_h = h;
    oc.enc_w = w;
    oc.d1 = config_.sten_d1;
    oc.d2 = config_.sten_d2;
    oc.d3 = config_.sten_d3;
    oc.msp_d = config_.feature_dim();
    oc.pred_hidden = config_.stsg_hidden;
    oc.fuse_hidden = config_.stsg_hidden;
    oc.sc_d = config_.feature_dim();
    oc.sc_layers = config_.sc_layers;
    oc.sc_ffn = config_.ffn_dim();
    oc.sc_classes = config_.sc_classes;
    oc.prio_hidden = config_.sc_prio_hidden;
    return oc;
}

std::vector<ParamBlockRef> param_blocks(PipelineParams& p) {
    std::vector<ParamBlockRef> blocks;
    auto add = [&](const std::string& name, std::vector<double>& v) {
        if (!v.empty()) blocks.push_back({name, v.data(), v.size()});
    };
    auto add_raw = [&](const std::string& name, double* d, size_t n) {
        blocks.push_back({name, d, n});
    };
    for (size_t i = 0; i < p.sten.stages.size(); ++i) {
        auto& st = p.sten.stages[i];
        const std::string prefix = "sten.stage" + std::to_string(i);
        add(prefix + ".conv.w", st.conv_w);
        add(prefix + ".conv.b", st.conv_b);
        add(prefix + ".lif.w", st.lif.w);
        add(prefix + ".lif.vth", st.lif.v_th);
    }
    add("sten.b1.w", p.sten.b1_w);
    add("sten.b1.b", p.sten.b1_b);
    add("sten.b2.w", p.sten.b2_w);
    add("sten.b2.b", p.sten.b2_b);
    add("sten.b2.lif.w", p.sten.b2_lif.w);
    add("sten.b2.lif.vth", p.sten.b2_lif.v_th);
    add_raw("sten.ta", p.sten.theta_ta.data(), 3);
    add_raw("msp.alpha_raw", &p.msp.alpha_raw, 1);
    add_raw("msp.beta_raw", &p.msp.beta_raw, 1);
    add_raw("msp.gamma", &p.msp.gamma, 1);
    add("msp.wq", p.msp.wq);
    add("msp.wk", p.msp.wk);
    add("msp.wv", p.msp.wv);
    add("msp.wo", p.msp.wo);
    add("stsg.pred.w1", p.stsg.predictor.w1);
    add("stsg.pred.b1", p.stsg.predictor.b1);
    add("stsg.pred.w2", p.stsg.predictor.w2);
    add("stsg.pred.b2", p.stsg.predictor.b2);
    add("stsg.fuse.w1", p.stsg.fusion.w1);
    add("stsg.fuse.b1", p.stsg.fusion.b1);
    add("stsg.fuse.w2", p.stsg.fusion.w2);
    add("stsg.fuse.b2", p.stsg.fusion.b2);
    add_raw("stsg.gate_raw", &p.stsg.gate.g_enh_raw, 1);
    add_raw("stsg.sup_raw", &p.stsg.gate.g_sup_raw, 1);
    add_raw("sc.prio.w_raw", p.sc.prio_w_raw.data(), 3);
    add("sc.prio.res.w1", p.sc.prio_residual.w1);
    add("sc.prio.res.b1", p.sc.prio_residual.b1);
    add("sc.prio.res.w2", p.sc.prio_residual.w2);
    add("sc.prio.res.b2", p.sc.prio_residual.b2);
    add_raw("sc.kappa_raw", &p.sc.kappa_raw, 1);
    for (size_t l = 0; l < p.sc.layers.size(); ++l) {
        auto& layer = p.sc.layers[l];
        const std::string prefix = "sc.layer" + std::to_string(l);
        add(prefix + ".wq", layer.wq);
        add(prefix + ".wk", layer.wk);
        add(prefix + ".wv", layer.wv);
        add(prefix + ".wo", layer.wo);
        add(prefix + ".ffn.w1", layer.ffn_w1);
        add(prefix + ".ffn.b1", layer.ffn_b1);
        add(prefix + ".ffn.w2", layer.ffn_w2);
        add(prefix + ".ffn.b2", layer.ffn_b2);
    }
    add("sc.head.w", p.sc.head_w);
    add("sc.head.b", p.sc.head_b);
    return blocks;
}

size_t param_count(const PipelineParams& params) {
    auto& p = const_cast<PipelineParams&>(params);
    size_t n = 0;
    for (const auto& b : param_blocks(p)) n += b.size;
    return n;
}

std::string Pipeline::save_checkpoint() const {
    auto& p = const_cast<PipelineParams&>(params_);
    std::string out = "# sparta checkpoint\n";
    char buf[64];
    for (const auto& b : param_blocks(p)) {
        for (size_t i = 0; i < b.size; ++i) {
            snprintf(buf, sizeof(buf), "%.17g", b.data[i]);
            out += b.name + "." + std::to_string(i) + "=" + buf + "\n";
        }
    }
    // HI-LIF priors and reset modes ride along so a checkpoint is
    // self-describing for the neuron layers.
    for (size_t i = 0; i < p.sten.stages.size(); ++i)
        out += save_params(p.sten.stages[i].lif, "sten.stage" + std::to_string(i) + ".lif.meta");
    if (params_.sten.config.d2 > 0) out += save_params(p.sten.b2_lif, "sten.b2.lif.meta");
    return out;
}

void Pipeline::load_checkpoint(const std::string& text) {
    auto kv = parse_kv(text);
    for (const auto& b : param_blocks(params_)) {
        for (size_t i = 0; i < b.size; ++i) {
            const std::string key = b.name + "." + std::to_string(i);
            auto it = kv.find(key);
            if (it == kv.end()) throw FormatError("checkpoint missing key " + key);
            try {
                size_t pos = 0;
                b.data[i] = std::stod(it->second, &pos);
                if (pos != it->second.size()) throw std::invalid_argument(it->second);
            } catch (const std::exception&) {
                throw FormatError("checkpoint key " + key + ": bad value \"" + it->second + "\"");
            }
        }
    }
    for (auto& st : params_.sten.stages)
        for (double th : st.lif.v_th)
            if (th < kVthFloor) throw FormatError("checkpoint: threshold below floor");
}

bool loglog_slope(const std::vector<double>& x, const std::vector<double>& y, double* slope) {
    if (x.size() != y.size() || x.size() < 2) return false;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto n = static_cast<double>(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) return false;
    *slope = (n * sxy - sx * sy) / denom;
    return true;
}

} // namespace sparta
