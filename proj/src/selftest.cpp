#include "sparta/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "sparta/pipeline.hpp"
#include "sparta/rng.hpp"
#include "sparta/train.hpp"

namespace sparta {

namespace {

using Clock = std::chrono::steady_clock;

struct Failure {
    std::string detail;
};

void expect(bool cond, const std::string& detail) {
    if (!cond) throw Failure{detail};
}

std::string fmt(double v) {
    char buf[40];
    snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// --- criterion 1: membrane trace vs closed form ---------------------------

void check_membrane_oracle() {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const double x = 0.1 + 2.0 * rng.uniform();
        const double tau_inv = 0.05 + 0.9 * rng.uniform();
        HilifParams p;
        p.channels = 1;
        p.w = {std::log(tau_inv / (1.0 - tau_inv))};
        p.v_th = {1e12}; // never fires
        Tensor input(100, 1, 1, 1);
        for (int t = 0; t < 100; ++t) input.data[t] = x;
        Tensor trace;
        run_sequence(input, p, kernels::Exec::serial, &trace);
        for (int t = 0; t < 100; ++t) {
            const double expected = x * (1.0 - std::pow(1.0 - tau_inv, t + 1));
            expect(std::abs(trace.data[t] - expected) < 1e-10,
                   "trace mismatch at step " + std::to_string(t) + ": got " +
                       fmt(trace.data[t]) + " want " + fmt(expected));
        }
    }
}

// --- criterion 2: sigma = 0 collapses to a plain LIF ----------------------

void check_homogeneous_reduction() {
    HilifParams p = init_heterogeneous(8, 2.0, 0.0, 1.0, 0.0, ResetMode::soft, 7);
    Rng rng(13);
    const int t_steps = 20, hw = 16;
    Tensor input(t_steps, 8, 4, 4);
    // Identical input for every channel.
    for (int t = 0; t < t_steps; ++t)
        for (int e = 0; e < hw; ++e) {
            const double v = 2.5 * rng.uniform();
            for (int c = 0; c < 8; ++c) input.data[(t * 8 + c) * hw + e] = v;
        }
    Tensor trace;
    SpikeTensor spikes = run_sequence(input, p, kernels::Exec::serial, &trace);
    for (int t = 0; t < t_steps; ++t)
        for (int c = 1; c < 8; ++c)
            for (int e = 0; e < hw; ++e) {
                expect(spikes.data[(t * 8 + c) * hw + e] == spikes.data[(t * 8) * hw + e],
                       "spike differs across homogeneous channels");
                expect(trace.data[(t * 8 + c) * hw + e] == trace.data[(t * 8) * hw + e],
                       "membrane differs across homogeneous channels");
            }
}

// --- criterion 3: heterogeneous sampling statistics ------------------------

void check_heterogeneous_stats() {
    HilifParams p = init_heterogeneous(10000, 2.0, 0.3, 1.0, 0.2, ResetMode::soft, 2024);
    const auto tau = p.tau();
    double mean = 0.0;
    for (double t : tau) mean += t;
    mean /= tau.size();
    double var = 0.0;
    for (double t : tau) var += (t - mean) * (t - mean);
    var /= tau.size();
    const double sd = std::sqrt(var);
    expect(std::abs(mean - 2.0) < 0.01, "tau sample mean " + fmt(mean) + " not within 2.0+-0.01");
    expect(std::abs(sd - 0.3) < 0.01, "tau sample std " + fmt(sd) + " not within 0.3+-0.01");
}

// --- criterion 4: top-K vs brute force, Table-3 K arithmetic ---------------

std::vector<uint8_t> topk_oracle(const std::vector<double>& scores, int k) {
    // Quadratic reference: repeatedly take the highest remaining score,
    // lower index first.
    const int n = static_cast<int>(scores.size());
    std::vector<uint8_t> mask(n, 0);
    for (int pick = 0; pick < k; ++pick) {
        int best = -1;
        for (int i = 0; i < n; ++i) {
            if (mask[i]) continue;
            if (best < 0 || scores[i] > scores[best]) best = i;
        }
        mask[best] = 1;
    }
    return mask;
}

void check_topk_oracle() {
    // Exhaustive binary score patterns, all N <= 12, all K.
    for (int n = 1; n <= 12; ++n) {
        for (uint32_t bits = 0; bits < (1u << n); ++bits) {
            std::vector<double> scores(n);
            for (int i = 0; i < n; ++i) scores[i] = (bits >> i) & 1u;
            for (int k = 1; k <= n; ++k) {
                const double rho = 1.0 - static_cast<double>(k) / n;
                auto [got_k, mask] = select_topk(scores, rho, n, 1);
                expect(got_k == k, "select_topk K mismatch");
                expect(mask == topk_oracle(scores, k), "select_topk mask differs from oracle");
            }
        }
    }
    // Exhaustive 3-value alphabet for the hard selector.
    TokenGrid tokens;
    for (int n = 1; n <= 12; ++n) {
        tokens = TokenGrid(n, 1);
        for (int i = 0; i < n; ++i) tokens.row(i)[0] = i;
        std::vector<double> scores(n);
        uint64_t total = 1;
        for (int i = 0; i < n; ++i) total *= 3;
        for (uint64_t pattern = 0; pattern < total; ++pattern) {
            uint64_t v = pattern;
            for (int i = 0; i < n; ++i) {
                scores[i] = static_cast<double>(v % 3);
                v /= 3;
            }
            for (int k = 1; k <= n; ++k) {
                SelectResult sel = hard_select(tokens, scores, k);
                const auto mask = topk_oracle(scores, k);
                expect(static_cast<int>(sel.indices.size()) == k, "hard_select size mismatch");
                for (int idx : sel.indices) expect(mask[idx] == 1, "hard_select picked a loser");
            }
        }
    }
    // Table-3 caption arithmetic at N = 256.
    std::vector<double> flat(256, 0.0);
    expect(select_topk(flat, 0.25, 256, 1).first == 192, "sparsity 25% must give K=192");
    expect(select_topk(flat, 0.75, 256, 1).first == 64, "sparsity 75% must give K=64");
    expect(select_topk(flat, 0.654, 256, 16).first == 89, "rho=0.654 must give K=89");
}

// --- criterion 5: gate identities ------------------------------------------

void check_gate_identities() {
    Rng rng(3);
    TokenGrid tokens(6, 4);
    for (double& v : tokens.features) v = rng.normal(0.0, 1.0);
    std::vector<uint8_t> mask = {1, 0, 1, 0, 0, 1};

    GateFactors identity;
    identity.g_enh_raw = -1e9; // softplus -> 0, g_enh = 1
    identity.g_sup_raw = 1e9;  // logistic -> 1
    TokenGrid same = gate(tokens, mask, identity);
    expect(same.features == tokens.features, "gate with (1,1) must be the identity");

    GateFactors crush;
    crush.g_enh_raw = -1e9;
    crush.g_sup_raw = -1e9; // logistic -> 0
    TokenGrid zeroed = gate(tokens, mask, crush);
    for (int i = 0; i < tokens.n; ++i)
        for (int j = 0; j < tokens.d; ++j) {
            const double v = zeroed.row(i)[j];
            expect(mask[i] ? v == tokens.row(i)[j] : v == 0.0,
                   "g_sup = 0 must zero exactly the masked-out rows");
        }
}

// --- criterion 6: uniform weights reduce to unbiased attention -------------

void check_bias_shift_invariance() {
    Rng rng(5);
    const int n = 10, d = 8;
    MspParams p = init_msp(d, 2, 1.0, 1.0, 1.0, 99);
    TokenGrid tokens(n, d);
    for (double& v : tokens.features) v = rng.normal(0.0, 1.0);

    TemporalWeights uniform;
    uniform.w_combined.assign(n, 0.37);
    uniform.w_timing.assign(n, 1.0);
    uniform.w_interval.assign(n, 1.0);
    TokenGrid biased = bias_attention(tokens, uniform, p, kernels::Exec::serial);

    kernels::AttentionArgs args;
    std::vector<double> plain(static_cast<size_t>(n) * d);
    args.x = tokens.features.data();
    args.n = n;
    args.d = d;
    args.heads = p.heads;
    args.wq = p.wq.data();
    args.wk = p.wk.data();
    args.wv = p.wv.data();
    args.wo = p.wo.data();
    args.out = plain.data();
    kernels::serial::attention(args);

    for (size_t i = 0; i < plain.size(); ++i)
        expect(std::abs(plain[i] - biased.features[i]) < 1e-6,
               "uniform-weight attention drifts from the unbiased result by " +
                   fmt(std::abs(plain[i] - biased.features[i])));
}

// --- criterion 7: K^2 scaling ----------------------------------------------

void check_complexity_slope() {
    const std::vector<int> sweep = {16, 32, 64, 128};
    std::vector<double> ks, analytic, measured;
    ScConfig cfg;
    cfg.d = 32;
    cfg.heads = 4;
    cfg.layers = 2;
    cfg.ffn_dim = 64;
    ScParams params = init_sc(cfg, 77);
    Rng rng(6);
    for (int k : sweep) {
        OpCountConfig oc;
        oc.timesteps = 16;
        oc.n_tokens = 256;
        oc.n_grouped = 256;
        oc.k = k;
        oc.enc_c = 16;
        oc.enc_h = 16;
        oc.enc_w = 16;
        oc.d1 = 8;
        oc.d2 = 16;
        oc.d3 = 8;
        oc.msp_d = 32;
        oc.pred_hidden = 16;
        oc.fuse_hidden = 16;
        oc.sc_d = 32;
        oc.sc_layers = 2;
        oc.sc_ffn = 64;
        oc.sc_classes = 2;
        oc.prio_hidden = 4;
        OpCountReport report = count_ops(oc);
        ks.push_back(k);
        analytic.push_back(static_cast<double>(report.stage_macs("sc_attn_scoremix")));
        expect(report.stage_macs("sc_attn_scoremix") ==
                   2ull * cfg.layers * static_cast<uint64_t>(k) * k * cfg.d,
               "analytic score-mix count off for K=" + std::to_string(k));

        TokenGrid tokens(k, cfg.d);
        std::vector<double> urgency(k);
        for (double& v : tokens.features) v = rng.normal(0.0, 1.0);
        for (double& v : urgency) v = rng.uniform();
        uint64_t counted = 0;
        sparse_attention_stack(tokens, urgency, params, kernels::Exec::serial, nullptr, &counted);
        measured.push_back(static_cast<double>(counted));
    }
    double slope_a = 0.0, slope_m = 0.0;
    expect(loglog_slope(ks, analytic, &slope_a), "analytic fit failed");
    expect(loglog_slope(ks, measured, &slope_m), "measured fit failed");
    expect(std::abs(slope_a - 2.0) < 1e-9,
           "analytic slope " + fmt(slope_a) + " must equal 2.000");
    expect(std::abs(slope_m - 2.0) <= 0.05,
           "instrumented slope " + fmt(slope_m) + " outside 2.0 +- 0.05");
}

// --- criterion 8: finite-difference gradient check -------------------------

void check_gradient() {
    PipelineConfig cfg = micro_config();
    Pipeline pipe(cfg, cfg.seed);
    expect(param_count(pipe.params()) <= 200,
           "micro pipeline has " + std::to_string(param_count(pipe.params())) +
               " parameters, need <= 200");
    Dataset data = make_task_dataset(cfg, 501);
    const auto results = gradient_check(pipe, data.train[0].frames, data.train[0].label);
    for (const auto& r : results)
        expect(r.max_rel_err < 1e-4, "block " + r.block + " rel err " + fmt(r.max_rel_err));
}

// --- criterion 9: dropped tokens are really gone ----------------------------

void check_hard_sparsity_isolation() {
    Rng rng(17);
    ScConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.layers = 2;
    cfg.ffn_dim = 16;
    cfg.classes = 3;
    ScParams params = init_sc(cfg, 31);
    const int n = 12, k = 5;
    TokenGrid tokens(n, cfg.d);
    std::vector<double> urgency(n);
    for (double& v : tokens.features) v = rng.normal(0.0, 1.0);
    for (double& v : urgency) v = rng.uniform();

    auto logits_for = [&](const TokenGrid& grid) {
        SelectResult sel = hard_select(grid, urgency, k);
        std::vector<double> u_sel(k);
        for (int i = 0; i < k; ++i) u_sel[i] = urgency[sel.indices[i]];
        TokenGrid out = sparse_attention_stack(sel.tokens, u_sel, params, kernels::Exec::serial);
        return classify(out, params);
    };

    const auto baseline = logits_for(tokens);
    SelectResult sel = hard_select(tokens, urgency, k);
    std::vector<uint8_t> selected(n, 0);
    for (int idx : sel.indices) selected[idx] = 1;
    for (int i = 0; i < n; ++i) {
        if (selected[i]) continue;
        TokenGrid poked = tokens;
        for (int f = 0; f < cfg.d; ++f) poked.row(i)[f] += rng.normal(0.0, 10.0);
        const auto logits = logits_for(poked);
        expect(logits == baseline, "perturbing dropped token " + std::to_string(i) +
                                       " changed the logits");
    }
}

} // namespace

PipelineConfig micro_config() {
    PipelineConfig cfg;
    cfg.seed = 7001;
    cfg.parallel = false;
    cfg.timesteps = 6;
    cfg.frame_h = 8;
    cfg.frame_w = 8;
    cfg.sten_stages = 1;
    cfg.sten_stage_channels = 2;
    cfg.sten_d1 = 1;
    cfg.sten_d2 = 1;
    cfg.sten_d3 = 1;
    cfg.msp_heads = 1;
    cfg.stsg_hidden = 2;
    cfg.k_min = 2;
    cfg.sc_heads = 1;
    cfg.sc_layers = 1;
    cfg.sc_ffn_dim = 1;
    cfg.sc_classes = 2;
    cfg.sc_prio_hidden = 1;
    cfg.sparsity_weight = 0.5;
    cfg.validate();
    return cfg;
}

std::vector<CheckResult> run_selftests(const std::string& filter) {
    using Entry = std::pair<std::string, std::function<void()>>;
    const std::vector<Entry> checks = {
        {"hilif.membrane_oracle", check_membrane_oracle},
        {"hilif.homogeneous_reduction", check_homogeneous_reduction},
        {"hilif.heterogeneous_stats", check_heterogeneous_stats},
        {"stsg.topk_oracle", check_topk_oracle},
        {"stsg.gate_identities", check_gate_identities},
        {"msp.bias_shift_invariance", check_bias_shift_invariance},
        {"sc.complexity_slope", check_complexity_slope},
        {"train.gradient_check", check_gradient},
        {"sc.hard_sparsity_isolation", check_hard_sparsity_isolation},
    };

    std::vector<CheckResult> results;
    for (const auto& [name, fn] : checks) {
        if (!filter.empty() && name.rfind(filter, 0) != 0) continue;
        CheckResult r;
        r.name = name;
        const auto start = Clock::now();
        try {
            fn();
            r.passed = true;
        } catch (const Failure& f) {
            r.passed = false;
            r.detail = f.detail;
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        results.push_back(std::move(r));
    }
    return results;
}

} // namespace sparta
