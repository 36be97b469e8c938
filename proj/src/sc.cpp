#include "sparta/sc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparta/rng.hpp"

namespace sparta {

ScParams init_sc(const ScConfig& config, uint64_t seed) {
    require(config.d >= 1 && config.heads >= 1 && config.layers >= 1, "init_sc: bad dimensions");
    require(config.d % config.heads == 0, "init_sc: head count must divide feature dim");
    require(config.classes >= 2, "init_sc: need at least two classes");
    ScParams p;
    p.config = config;
    p.prio_residual = Mlp::zeros(3, config.prio_hidden, 1);
    Rng rng(seed);
    const double attn_std = 1.0 / std::sqrt(static_cast<double>(config.d));
    for (int l = 0; l < config.layers; ++l) {
        ScParams::Layer layer;
        for (auto* m : {&layer.wq, &layer.wk, &layer.wv, &layer.wo}) {
            m->resize(static_cast<size_t>(config.d) * config.d);
            for (double& v : *m) v = rng.normal(0.0, attn_std);
        }
        layer.ffn_w1.resize(static_cast<size_t>(config.ffn_dim) * config.d);
        layer.ffn_b1.assign(config.ffn_dim, 0.0);
        layer.ffn_w2.resize(static_cast<size_t>(config.d) * config.ffn_dim);
        layer.ffn_b2.assign(config.d, 0.0);
        for (double& v : layer.ffn_w1) v = rng.normal(0.0, attn_std);
        for (double& v : layer.ffn_w2)
            v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(config.ffn_dim)));
        p.layers.push_back(std::move(layer));
    }
    p.head_w.resize(static_cast<size_t>(config.classes) * config.d);
    p.head_b.assign(config.classes, 0.0);
    for (double& v : p.head_w) v = rng.normal(0.0, attn_std);
    // Unit-ish priority weights to start: softplus(0.5413...) ~= 1.
    const double raw_unit = std::log(std::expm1(1.0));
    p.prio_w_raw = {raw_unit, raw_unit, raw_unit};
    return p;
}

std::vector<double> priority_scores(const SpikeInfo& cues, const ScParams& params) {
    const size_t n = cues.tokens();
    const auto w = params.prio_w();
    const double t = cues.timesteps;
    std::vector<double> u(n);
    for (size_t i = 0; i < n; ++i) {
        const double triad[3] = {1.0 - cues.t_first[i], 1.0 - cues.t_interval[i] / t,
                                 cues.f_rate[i]};
        u[i] = w[0] * triad[0] + w[1] * triad[1] + w[2] * triad[2] +
               params.prio_residual.apply1(triad);
    }
    return u;
}

std::vector<double> priority_unit(const SpikeInfo& cues) {
    const size_t n = cues.tokens();
    const double t = cues.timesteps;
    std::vector<double> u(n);
    for (size_t i = 0; i < n; ++i)
        u[i] = (1.0 - cues.t_first[i]) + (1.0 - cues.t_interval[i] / t) + cues.f_rate[i];
    return u;
}

SelectResult hard_select(const TokenGrid& tokens, const std::vector<double>& urgency, int k) {
    require(urgency.size() == static_cast<size_t>(tokens.n),
            "hard_select: urgency/token count mismatch");
    if (k > tokens.n)
        throw ValidationError("hard_select: K=" + std::to_string(k) + " exceeds N=" +
                              std::to_string(tokens.n));
    require(k >= 1, "hard_select: K must be positive");

    std::vector<int> order(tokens.n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (urgency[a] != urgency[b]) return urgency[a] > urgency[b];
        return a < b;
    });
    std::vector<int> keep(order.begin(), order.begin() + k);
    std::sort(keep.begin(), keep.end()); // original relative order

    SelectResult res;
    res.tokens = TokenGrid(k, tokens.d);
    for (int i = 0; i < k; ++i) {
        const double* src = tokens.row(keep[i]);
        std::copy(src, src + tokens.d, res.tokens.row(i));
    }
    res.indices = std::move(keep);
    return res;
}

TokenGrid sparse_attention_stack(const TokenGrid& selected, const std::vector<double>& u_selected,
                                 const ScParams& params, kernels::Exec exec, double* mass_out,
                                 uint64_t* scoremix_macs) {
    const int k = selected.n;
    require(k >= 1, "sparse_attention_stack: need at least one token");
    require(u_selected.size() == static_cast<size_t>(k),
            "sparse_attention_stack: urgency length mismatch");
    require(selected.d == params.config.d, "sparse_attention_stack: feature dim mismatch");

    // Min-max normalize urgency; a flat vector gets u_hat = 0 (temperature 1).
    const auto [lo_it, hi_it] = std::minmax_element(u_selected.begin(), u_selected.end());
    const double lo = *lo_it, hi = *hi_it;
    const double kappa = params.kappa();
    std::vector<double> query_scale(k, 1.0);
    if (hi > lo)
        for (int i = 0; i < k; ++i)
            query_scale[i] = 1.0 + kappa * (u_selected[i] - lo) / (hi - lo);

    TokenGrid x = selected;
    std::vector<double> attn_out(static_cast<size_t>(k) * selected.d);
    std::vector<double> ffn_hidden(static_cast<size_t>(k) * params.config.ffn_dim);
    for (const auto& layer : params.layers) {
        kernels::AttentionArgs args;
        args.x = x.features.data();
        args.n = k;
        args.d = selected.d;
        args.heads = params.config.heads;
        args.wq = layer.wq.data();
        args.wk = layer.wk.data();
        args.wv = layer.wv.data();
        args.wo = layer.wo.data();
        args.query_scale = query_scale.data();
        args.out = attn_out.data();
        args.mass_out = mass_out;
        args.scoremix_macs = scoremix_macs;
        kernels::attention(exec, args);
        for (size_t i = 0; i < x.features.size(); ++i) x.features[i] += attn_out[i];

        kernels::linear(exec, x.features.data(), ffn_hidden.data(), layer.ffn_w1.data(),
                        layer.ffn_b1.data(), k, selected.d, params.config.ffn_dim);
        for (double& v : ffn_hidden) v = std::tanh(v);
        kernels::linear(exec, ffn_hidden.data(), attn_out.data(), layer.ffn_w2.data(),
                        layer.ffn_b2.data(), k, params.config.ffn_dim, selected.d);
        for (size_t i = 0; i < x.features.size(); ++i) x.features[i] += attn_out[i];
    }
    return x;
}

std::vector<double> classify(const TokenGrid& features, const ScParams& params) {
    require(features.n >= 1, "classify: need at least one token");
    require(features.d == params.config.d, "classify: feature dim mismatch");
    std::vector<double> pooled(features.d, 0.0);
    for (int i = 0; i < features.n; ++i) {
        const double* row = features.row(i);
        for (int f = 0; f < features.d; ++f) pooled[f] += row[f];
    }
    const double inv_n = 1.0 / features.n;
    for (double& v : pooled) v *= inv_n;
    std::vector<double> logits(params.config.classes);
    kernels::serial::linear(pooled.data(), logits.data(), params.head_w.data(),
                            params.head_b.data(), 1, features.d, params.config.classes);
    return logits;
}

uint64_t OpCountReport::total_macs() const {
    uint64_t total = 0;
    for (const auto& s : stages) total += s.macs;
    return total;
}

uint64_t OpCountReport::stage_macs(const std::string& name) const {
    for (const auto& s : stages)
        if (s.name == name) return s.macs;
    return 0;
}

std::string OpCountReport::to_csv() const {
    std::string out = "stage,macs,tokens_in,tokens_out,sparsity\n";
    char buf[160];
    for (const auto& s : stages) {
        snprintf(buf, sizeof(buf), "%s,%llu,%d,%d,%.6f\n", s.name.c_str(),
                 static_cast<unsigned long long>(s.macs), s.tokens_in, s.tokens_out, s.sparsity);
        out += buf;
    }
    snprintf(buf, sizeof(buf), "total,%llu,,,\n",
             static_cast<unsigned long long>(total_macs()));
    out += buf;
    return out;
}

std::string OpCountReport::summary() const {
    char buf[200];
    snprintf(buf, sizeof(buf),
             "total_macs=%llu attention_k2_macs=%llu (MACs count multiplies; FLOPs ~ 2*MACs)",
             static_cast<unsigned long long>(total_macs()),
             static_cast<unsigned long long>(stage_macs("sc_attn_scoremix")));
    return buf;
}

OpCountReport count_ops(const OpCountConfig& cfg) {
    require(cfg.k >= 1, "count_ops: K must be positive");
    const int n_grouped = cfg.n_grouped > 0 ? cfg.n_grouped : cfg.n_tokens;
    require(n_grouped >= cfg.k, "count_ops: K exceeds token count");
    OpCountReport r;
    const auto T = static_cast<uint64_t>(cfg.timesteps);
    const auto N = static_cast<uint64_t>(cfg.n_tokens);
    const auto G = static_cast<uint64_t>(n_grouped);
    const auto K = static_cast<uint64_t>(cfg.k);
    auto add = [&](const std::string& name, uint64_t macs, int tin, int tout, double sp = 0.0) {
        r.stages.push_back({name, macs, tin, tout, sp});
    };

    for (size_t i = 0; i < cfg.stages.size(); ++i) {
        const auto& s = cfg.stages[i];
        const uint64_t plane = static_cast<uint64_t>(s.h_out) * s.w_out;
        add("sten_stage" + std::to_string(i) + "_conv",
            T * s.c_out * plane * (9ull * s.c_in), cfg.n_tokens, cfg.n_tokens);
        add("sten_stage" + std::to_string(i) + "_lif", T * s.c_out * plane, cfg.n_tokens,
            cfg.n_tokens);
    }
    const uint64_t enc_plane = static_cast<uint64_t>(cfg.enc_h) * cfg.enc_w;
    if (cfg.d1 > 0) add("sten_branch1", T * cfg.d1 * enc_plane * cfg.enc_c, cfg.n_tokens, cfg.n_tokens);
    if (cfg.d2 > 0) {
        add("sten_branch2_conv", T * cfg.d2 * enc_plane * (9ull * cfg.enc_c), cfg.n_tokens,
            cfg.n_tokens);
        add("sten_branch2_lif", T * cfg.d2 * enc_plane, cfg.n_tokens, cfg.n_tokens);
    }
    if (cfg.d3 > 0) add("sten_branch3", T * cfg.enc_c, cfg.n_tokens, cfg.n_tokens);
    const uint64_t d_feat = cfg.d1 + cfg.d2 + cfg.d3;
    add("sten_time_mean", N * d_feat, cfg.n_tokens, cfg.n_tokens);
    add("sten_timing_attention", N * (3 + d_feat), cfg.n_tokens, cfg.n_tokens);

    add("msp_weights", 5 * N, cfg.n_tokens, cfg.n_tokens);
    const auto D = static_cast<uint64_t>(cfg.msp_d);
    add("msp_attn_proj", 4 * N * D * D, cfg.n_tokens, cfg.n_tokens);
    add("msp_attn_scoremix", 2 * N * N * D, cfg.n_tokens, cfg.n_tokens);

    add("stsg_predictor", 4ull * cfg.pred_hidden, n_grouped, n_grouped);
    add("stsg_spatial", 25 * N, cfg.n_tokens, cfg.n_tokens);
    add("stsg_fusion", G * 4ull * cfg.fuse_hidden, n_grouped, n_grouped);
    add("stsg_gate", G * d_feat, n_grouped, n_grouped);

    const double sparsity = 1.0 - static_cast<double>(K) / G;
    add("sc_priority", G * (3 + 4ull * cfg.prio_hidden), n_grouped, n_grouped);
    const auto Ds = static_cast<uint64_t>(cfg.sc_d);
    const auto L = static_cast<uint64_t>(cfg.sc_layers);
    add("sc_attn_proj", L * 4 * K * Ds * Ds, n_grouped, cfg.k, sparsity);
    add("sc_attn_scoremix", L * 2 * K * K * Ds, cfg.k, cfg.k, sparsity);
    add("sc_ffn", L * 2 * K * Ds * cfg.sc_ffn, cfg.k, cfg.k, sparsity);
    add("sc_head", Ds * cfg.sc_classes + Ds, cfg.k, 1, sparsity);
    return r;
}

} // namespace sparta
