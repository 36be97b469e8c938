#include "sparta/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "sparta/rng.hpp"
#include "sparta/sten.hpp"

namespace sparta {

using autodiff::constant;
using autodiff::detach;
using autodiff::Tape;
using autodiff::Var;

SurrogateSpec surrogate_from_config(const PipelineConfig& config) {
    SurrogateSpec s;
    s.kind = config.surrogate == "fast_sigmoid" ? SurrogateKind::fast_sigmoid
                                                : SurrogateKind::rectangular;
    s.a = config.surrogate_a;
    return s;
}

double surrogate_grad(double x, const SurrogateSpec& spec) {
    if (spec.kind == SurrogateKind::rectangular)
        return std::abs(x) <= spec.a ? 1.0 / (2.0 * spec.a) : 0.0;
    const double q = 1.0 + std::abs(x) / spec.a;
    return 1.0 / (spec.a * q * q);
}

double surrogate_gate(double x, const SurrogateSpec& spec) {
    if (spec.kind == SurrogateKind::rectangular) {
        const double g = (x + spec.a) / (2.0 * spec.a);
        return g < 0.0 ? 0.0 : (g > 1.0 ? 1.0 : g);
    }
    // Antiderivative of the fast-sigmoid surrogate, centered at 0.5.
    return 0.5 + (x / spec.a) / (1.0 + std::abs(x) / spec.a);
}

namespace {

Var spike(Tape& tape, Var x, const SurrogateSpec& spec, SpikeMode mode) {
    const double val =
        mode == SpikeMode::exact ? (x.val() >= 0.0 ? 1.0 : 0.0) : surrogate_gate(x.val(), spec);
    return {&tape, tape.push(val, x.i, surrogate_grad(x.val(), spec))};
}

// Leaves for every parameter block, pushed in param_blocks order starting at
// node 0, plus name lookup.
struct Leaves {
    std::vector<ParamBlockRef> blocks;
    std::vector<size_t> starts;
    Tape* tape;

    static Leaves create(Tape& tape, PipelineParams& params) {
        require(tape.size() == 0, "forward: tape must be fresh");
        Leaves l;
        l.tape = &tape;
        l.blocks = param_blocks(params);
        l.starts.reserve(l.blocks.size());
        for (const auto& b : l.blocks) {
            l.starts.push_back(tape.size());
            for (size_t i = 0; i < b.size; ++i) tape.push(b.data[i]);
        }
        return l;
    }

    std::vector<Var> get(const std::string& name) const {
        for (size_t i = 0; i < blocks.size(); ++i)
            if (blocks[i].name == name) {
                std::vector<Var> out(blocks[i].size);
                for (size_t j = 0; j < blocks[i].size; ++j)
                    out[j] = Var{tape, static_cast<int>(starts[i] + j)};
                return out;
            }
        throw NumericError("train graph: unknown parameter block " + name);
    }

    Var get1(const std::string& name) const { return get(name)[0]; }

    bool has(const std::string& name) const {
        for (const auto& b : blocks)
            if (b.name == name) return true;
        return false;
    }
};

std::vector<Var> var_constants(Tape& tape, const double* data, size_t n) {
    std::vector<Var> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = constant(tape, data[i]);
    return out;
}

// out[r][o] = bias[o] + sum_e w[o][e] * x[r][e], matching kernels::linear.
std::vector<Var> var_linear(const std::vector<Var>& x, int rows, int d_in,
                            const std::vector<Var>& w, const std::vector<Var>* bias, int d_out) {
    std::vector<Var> out(static_cast<size_t>(rows) * d_out);
    for (int r = 0; r < rows; ++r)
        for (int o = 0; o < d_out; ++o) {
            Var acc = bias ? (*bias)[o] : constant(*x[0].tape, 0.0);
            for (int e = 0; e < d_in; ++e)
                acc = acc + w[static_cast<size_t>(o) * d_in + e] * x[static_cast<size_t>(r) * d_in + e];
            out[static_cast<size_t>(r) * d_out + o] = acc;
        }
    return out;
}

std::vector<Var> var_conv3x3(Tape& tape, const std::vector<Var>& in, int t, int c_in, int h,
                             int w, const std::vector<Var>& weight, const std::vector<Var>& bias,
                             int c_out, int stride) {
    const int ho = kernels::conv3x3_out_dim(h, stride);
    const int wo = kernels::conv3x3_out_dim(w, stride);
    const size_t plane_in = static_cast<size_t>(h) * w;
    const size_t plane_out = static_cast<size_t>(ho) * wo;
    std::vector<Var> out(static_cast<size_t>(t) * c_out * plane_out);
    for (int ti = 0; ti < t; ++ti)
        for (int co = 0; co < c_out; ++co)
            for (int yo = 0; yo < ho; ++yo)
                for (int xo = 0; xo < wo; ++xo) {
                    Var acc = bias[co];
                    for (int ci = 0; ci < c_in; ++ci)
                        for (int ky = 0; ky < 3; ++ky) {
                            const int y = yo * stride + ky - 1;
                            if (y < 0 || y >= h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int x = xo * stride + kx - 1;
                                if (x < 0 || x >= w) continue;
                                acc = acc +
                                      weight[(static_cast<size_t>(co) * c_in + ci) * 9 + ky * 3 + kx] *
                                          in[(static_cast<size_t>(ti) * c_in + ci) * plane_in +
                                             static_cast<size_t>(y) * w + x];
                            }
                        }
                    out[(static_cast<size_t>(ti) * c_out + co) * plane_out +
                        static_cast<size_t>(yo) * wo + xo] = acc;
                }
    (void)tape;
    return out;
}

std::vector<Var> var_conv1x1(const std::vector<Var>& in, int t, int c_in, int h, int w,
                             const std::vector<Var>& weight, const std::vector<Var>& bias,
                             int c_out) {
    const size_t plane = static_cast<size_t>(h) * w;
    std::vector<Var> out(static_cast<size_t>(t) * c_out * plane);
    for (int ti = 0; ti < t; ++ti)
        for (int co = 0; co < c_out; ++co)
            for (size_t e = 0; e < plane; ++e) {
                Var acc = bias[co];
                for (int ci = 0; ci < c_in; ++ci)
                    acc = acc + weight[static_cast<size_t>(co) * c_in + ci] *
                                    in[(static_cast<size_t>(ti) * c_in + ci) * plane + e];
                out[(static_cast<size_t>(ti) * c_out + co) * plane + e] = acc;
            }
    return out;
}

std::vector<Var> var_lif(Tape& tape, const std::vector<Var>& current, int t, int c, int plane,
                         const std::vector<Var>& w, const std::vector<Var>& vth, ResetMode mode,
                         double v_reset, const SurrogateSpec& spec, SpikeMode spike_mode) {
    std::vector<Var> tau_inv(c), spikes(static_cast<size_t>(t) * c * plane);
    for (int ci = 0; ci < c; ++ci) tau_inv[ci] = autodiff::logistic(w[ci]);
    std::vector<Var> v(static_cast<size_t>(c) * plane);
    for (auto& x : v) x = constant(tape, 0.0);
    for (int ti = 0; ti < t; ++ti)
        for (int ci = 0; ci < c; ++ci)
            for (int e = 0; e < plane; ++e) {
                const size_t cell = static_cast<size_t>(ci) * plane + e;
                const Var x = current[static_cast<size_t>(ti) * c * plane + cell];
                const Var vn = v[cell] + (x - v[cell]) * tau_inv[ci];
                const Var s = spike(tape, vn - vth[ci], spec, spike_mode);
                spikes[static_cast<size_t>(ti) * c * plane + cell] = s;
                if (mode == ResetMode::soft)
                    v[cell] = vn - s * vth[ci];
                else
                    v[cell] = vn * (1.0 - s) + s * v_reset;
            }
    return spikes;
}

struct VarAttentionArgs {
    const std::vector<Var>* x;
    int n, d, heads;
    const std::vector<Var>*wq, *wk, *wv, *wo;
    const std::vector<Var>* key_bias = nullptr;    // length n
    const std::vector<Var>* query_scale = nullptr; // length n
};

std::vector<Var> var_attention(Tape& tape, const VarAttentionArgs& a) {
    const int dh = a.d / a.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    auto q = var_linear(*a.x, a.n, a.d, *a.wq, nullptr, a.d);
    auto k = var_linear(*a.x, a.n, a.d, *a.wk, nullptr, a.d);
    auto v = var_linear(*a.x, a.n, a.d, *a.wv, nullptr, a.d);
    std::vector<Var> concat(static_cast<size_t>(a.n) * a.d);
    std::vector<Var> logits(a.n), probs(a.n);
    for (int i = 0; i < a.n; ++i) {
        for (int head = 0; head < a.heads; ++head) {
            double max_logit = -1e300;
            for (int j = 0; j < a.n; ++j) {
                Var dot = constant(tape, 0.0);
                for (int e = 0; e < dh; ++e)
                    dot = dot + q[static_cast<size_t>(i) * a.d + head * dh + e] *
                                    k[static_cast<size_t>(j) * a.d + head * dh + e];
                Var logit = dot * inv_sqrt;
                if (a.query_scale) logit = logit * (*a.query_scale)[i];
                if (a.key_bias) logit = logit + (*a.key_bias)[j];
                logits[j] = logit;
                max_logit = std::max(max_logit, logit.val());
            }
            Var sum = constant(tape, 0.0);
            for (int j = 0; j < a.n; ++j) {
                probs[j] = autodiff::exp(logits[j] - max_logit);
                sum = sum + probs[j];
            }
            const Var inv_sum = 1.0 / sum;
            for (int e = 0; e < dh; ++e) {
                Var acc = constant(tape, 0.0);
                for (int j = 0; j < a.n; ++j)
                    acc = acc + (probs[j] * inv_sum) * v[static_cast<size_t>(j) * a.d + head * dh + e];
                concat[static_cast<size_t>(i) * a.d + head * dh + e] = acc;
            }
        }
    }
    return var_linear(concat, a.n, a.d, *a.wo, nullptr, a.d);
}

Var var_mlp1(Tape& tape, const Mlp& shape, const std::vector<Var>& w1, const std::vector<Var>& b1,
             const std::vector<Var>& w2, const std::vector<Var>& b2,
             const std::array<Var, 3>& in) {
    std::vector<Var> h(shape.hidden);
    for (int i = 0; i < shape.hidden; ++i) {
        Var acc = b1[i];
        for (int j = 0; j < shape.d_in; ++j)
            acc = acc + w1[static_cast<size_t>(i) * shape.d_in + j] * in[j];
        h[i] = shape.hidden_tanh ? autodiff::tanh(acc) : acc;
    }
    Var out = b2[0];
    for (int i = 0; i < shape.hidden; ++i) out = out + w2[i] * h[i];
    (void)tape;
    return out;
}

} // namespace

TrainGraph::TrainGraph(PipelineParams& params, const PipelineConfig& config,
                       SurrogateSpec surrogate, SpikeMode mode)
    : params_(params), config_(config), surrogate_(surrogate), mode_(mode),
      n_params_(param_count(params)) {}

ForwardOutput TrainGraph::forward(Tape& tape, const SpikeTensor& frames, int label) const {
    const Leaves leaves = Leaves::create(tape, params_);
    const ResetMode reset = config_.reset_mode == "hard" ? ResetMode::hard : ResetMode::soft;

    // Stage cascade.
    int t = frames.t, c = frames.c, h = frames.h, w = frames.w;
    std::vector<Var> cur(frames.data.size());
    for (size_t i = 0; i < frames.data.size(); ++i) cur[i] = constant(tape, frames.data[i]);
    for (size_t s = 0; s < params_.sten.stages.size(); ++s) {
        const auto& st = params_.sten.stages[s];
        const std::string prefix = "sten.stage" + std::to_string(s);
        auto conv_w = leaves.get(prefix + ".conv.w");
        auto conv_b = leaves.get(prefix + ".conv.b");
        auto lif_w = leaves.get(prefix + ".lif.w");
        auto lif_vth = leaves.get(prefix + ".lif.vth");
        auto conv = var_conv3x3(tape, cur, t, c, h, w, conv_w, conv_b, st.c_out, 2);
        h = kernels::conv3x3_out_dim(h, 2);
        w = kernels::conv3x3_out_dim(w, 2);
        c = st.c_out;
        cur = var_lif(tape, conv, t, c, h * w, lif_w, lif_vth, reset, config_.v_reset, surrogate_,
                      mode_);
    }

    // Branch features, time-mean reduced.
    const auto& cfg = params_.sten.config;
    const int n_grid = h * w;
    const int d = cfg.feature_dim();
    const size_t plane = static_cast<size_t>(h) * w;
    const double inv_t = 1.0 / t;
    std::vector<Var> features(static_cast<size_t>(n_grid) * d, constant(tape, 0.0));
    if (cfg.d1 > 0) {
        auto conv = var_conv1x1(cur, t, c, h, w, leaves.get("sten.b1.w"), leaves.get("sten.b1.b"),
                                cfg.d1);
        for (int f = 0; f < cfg.d1; ++f)
            for (int tok = 0; tok < n_grid; ++tok) {
                Var acc = constant(tape, 0.0);
                for (int ti = 0; ti < t; ++ti)
                    acc = acc + conv[(static_cast<size_t>(ti) * cfg.d1 + f) * plane + tok];
                features[static_cast<size_t>(tok) * d + f] = acc * inv_t;
            }
    }
    if (cfg.d2 > 0) {
        auto conv = var_conv3x3(tape, cur, t, c, h, w, leaves.get("sten.b2.w"),
                                leaves.get("sten.b2.b"), cfg.d2, 1);
        auto sp = var_lif(tape, conv, t, cfg.d2, n_grid, leaves.get("sten.b2.lif.w"),
                          leaves.get("sten.b2.lif.vth"), reset, config_.v_reset, surrogate_, mode_);
        for (int f = 0; f < cfg.d2; ++f)
            for (int tok = 0; tok < n_grid; ++tok) {
                Var acc = constant(tape, 0.0);
                for (int ti = 0; ti < t; ++ti)
                    acc = acc + sp[(static_cast<size_t>(ti) * cfg.d2 + f) * plane + tok];
                features[static_cast<size_t>(tok) * d + cfg.d1 + f] = acc * inv_t;
            }
    }
    if (cfg.d3 > 0) {
        std::vector<Var> pooled(c, constant(tape, 0.0));
        for (int ti = 0; ti < t; ++ti)
            for (int ci = 0; ci < c; ++ci) {
                Var acc = constant(tape, 0.0);
                for (size_t e = 0; e < plane; ++e)
                    acc = acc + cur[(static_cast<size_t>(ti) * c + ci) * plane + e];
                pooled[ci] = pooled[ci] + acc / static_cast<double>(plane);
            }
        for (int ci = 0; ci < c; ++ci) pooled[ci] = pooled[ci] * inv_t;
        for (int f = 0; f < cfg.d3; ++f)
            for (int tok = 0; tok < n_grid; ++tok)
                features[static_cast<size_t>(tok) * d + cfg.d1 + cfg.d2 + f] = pooled[f % c];
    }

    // Cues from the binarized stage output (gradients stop here; the cue
    // maps are piecewise constant in the parameters).
    SpikeTensor stage_spikes(t, c, h, w);
    for (size_t i = 0; i < stage_spikes.data.size(); ++i)
        stage_spikes.data[i] = cur[i].val() >= 0.5 ? 1 : 0;
    SpikeInfo cues = extract_cues(stage_spikes, config_.patch_h, config_.patch_w,
                                  kernels::Exec::serial);
    int n = n_grid;
    int ht = h, wt = w;
    if (config_.patch_h > 1 || config_.patch_w > 1) {
        ht = h / config_.patch_h;
        wt = w / config_.patch_w;
        const int n_pooled = ht * wt;
        std::vector<Var> pooled(static_cast<size_t>(n_pooled) * d, constant(tape, 0.0));
        const double inv = 1.0 / (config_.patch_h * config_.patch_w);
        for (int ty = 0; ty < ht; ++ty)
            for (int tx = 0; tx < wt; ++tx) {
                const size_t dst = static_cast<size_t>(ty * wt + tx) * d;
                for (int py = 0; py < config_.patch_h; ++py)
                    for (int px = 0; px < config_.patch_w; ++px) {
                        const size_t src = static_cast<size_t>(
                                               (ty * config_.patch_h + py) * w +
                                               tx * config_.patch_w + px) * d;
                        for (int f = 0; f < d; ++f)
                            pooled[dst + f] = pooled[dst + f] + features[src + f];
                    }
                for (int f = 0; f < d; ++f) pooled[dst + f] = pooled[dst + f] * inv;
            }
        features = std::move(pooled);
        n = n_pooled;
    }

    // Timing gate.
    auto ta = leaves.get("sten.ta");
    for (int i = 0; i < n; ++i) {
        const Var z = ta[0] * cues.f_rate[i] + ta[1] * (1.0 - cues.t_first[i]) +
                      ta[2] * cues.t_burst[i];
        const Var g = autodiff::logistic(z);
        for (int f = 0; f < d; ++f)
            features[static_cast<size_t>(i) * d + f] = features[static_cast<size_t>(i) * d + f] * g;
    }

    // Temporal weights and biased attention.
    const Var alpha = autodiff::exp(leaves.get1("msp.alpha_raw"));
    const Var beta = autodiff::exp(leaves.get1("msp.beta_raw"));
    const Var gamma = leaves.get1("msp.gamma");
    std::vector<Var> w_combined(n);
    for (int i = 0; i < n; ++i) {
        const Var wt_i = params_.msp.ablate_timing ? constant(tape, 1.0)
                                                   : autodiff::exp(-(alpha * cues.t_first[i]));
        const Var wi_i = params_.msp.ablate_interval
                             ? constant(tape, 1.0)
                             : autodiff::exp(-(beta * cues.t_interval[i]));
        const Var wr_i = params_.msp.ablate_rate ? constant(tape, 0.5)
                                                 : autodiff::logistic(gamma * cues.f_rate[i]);
        w_combined[i] = wt_i * wi_i * wr_i;
    }
    std::vector<Var> key_bias(n);
    for (int i = 0; i < n; ++i) key_bias[i] = autodiff::log(w_combined[i] + kLogBiasEpsilon);
    auto msp_wq = leaves.get("msp.wq"), msp_wk = leaves.get("msp.wk"),
         msp_wv = leaves.get("msp.wv"), msp_wo = leaves.get("msp.wo");
    VarAttentionArgs margs;
    margs.x = &features;
    margs.n = n;
    margs.d = d;
    margs.heads = params_.msp.heads;
    margs.wq = &msp_wq;
    margs.wk = &msp_wk;
    margs.wv = &msp_wv;
    margs.wo = &msp_wo;
    margs.key_bias = &key_bias;
    std::vector<Var> mixed = var_attention(tape, margs);

    // Score ingredients.
    std::vector<double> s_spatial = spatial_scores(cues.f_rate, ht, wt, kernels::Exec::serial);
    std::vector<double> s_temporal = priority_unit(cues);

    // Patch grouping.
    const int n_target = config_.n_target > 0 ? config_.n_target : n;
    if (n_target != n) {
        TokenGrid probe(n, 1);
        GroupResult group = patch_group(probe, cues.f_rate, n_target);
        const auto& src = group.source_index;
        std::vector<Var> re(static_cast<size_t>(n_target) * d);
        for (int i = 0; i < n_target; ++i)
            for (int f = 0; f < d; ++f)
                re[static_cast<size_t>(i) * d + f] = mixed[static_cast<size_t>(src[i]) * d + f];
        mixed = std::move(re);
        auto remap_d = [&](std::vector<double>& v) {
            std::vector<double> out(n_target);
            for (int i = 0; i < n_target; ++i) out[i] = v[src[i]];
            v = std::move(out);
        };
        remap_d(cues.t_first);
        remap_d(cues.t_interval);
        remap_d(cues.t_burst);
        remap_d(cues.f_rate);
        remap_d(s_spatial);
        remap_d(s_temporal);
        std::vector<Var> wc(n_target);
        for (int i = 0; i < n_target; ++i) wc[i] = w_combined[src[i]];
        w_combined = std::move(wc);
        n = n_target;
    }

    // Sparsity prediction.
    auto [f_input, rho_val] = predict_sparsity(cues, params_.stsg.predictor);
    (void)rho_val;
    const std::array<Var, 3> f_in{constant(tape, f_input[0]), constant(tape, f_input[1]),
                                  constant(tape, f_input[2])};
    const Var rho = autodiff::logistic(
        var_mlp1(tape, params_.stsg.predictor, leaves.get("stsg.pred.w1"),
                 leaves.get("stsg.pred.b1"), leaves.get("stsg.pred.w2"),
                 leaves.get("stsg.pred.b2"), f_in));

    // Score fusion.
    auto fuse_w1 = leaves.get("stsg.fuse.w1"), fuse_b1 = leaves.get("stsg.fuse.b1"),
         fuse_w2 = leaves.get("stsg.fuse.w2"), fuse_b2 = leaves.get("stsg.fuse.b2");
    std::vector<Var> s_combined(n);
    for (int i = 0; i < n; ++i) {
        const std::array<Var, 3> in{constant(tape, s_spatial[i]), w_combined[i],
                                    constant(tape, s_temporal[i])};
        s_combined[i] = var_mlp1(tape, params_.stsg.fusion, fuse_w1, fuse_b1, fuse_w2, fuse_b2, in);
    }
    std::vector<double> s_vals(n);
    for (int i = 0; i < n; ++i) s_vals[i] = s_combined[i].val();

    int k;
    std::vector<uint8_t> mask;
    if (config_.fixed_k > 0) {
        const int kf = std::min(config_.fixed_k, n);
        std::tie(k, mask) = select_topk(s_vals, 1.0 - static_cast<double>(kf) / n, n,
                                        std::min(params_.stsg.k_min, kf));
    } else {
        std::tie(k, mask) = select_topk(s_vals, rho.val(), n, std::min(params_.stsg.k_min, n));
    }

    // Soft gate.
    const Var g_enh = 1.0 + autodiff::softplus(leaves.get1("stsg.gate_raw"));
    const Var g_sup = autodiff::logistic(leaves.get1("stsg.sup_raw"));
    for (int i = 0; i < n; ++i) {
        const Var g = mask[i] ? g_enh : g_sup;
        for (int f = 0; f < d; ++f)
            mixed[static_cast<size_t>(i) * d + f] = mixed[static_cast<size_t>(i) * d + f] * g;
    }

    // Priority urgency.
    auto prio_raw = leaves.get("sc.prio.w_raw");
    auto res_w1 = leaves.get("sc.prio.res.w1"), res_b1 = leaves.get("sc.prio.res.b1"),
         res_w2 = leaves.get("sc.prio.res.w2"), res_b2 = leaves.get("sc.prio.res.b2");
    const double t_steps = cues.timesteps;
    std::vector<Var> urgency(n);
    for (int i = 0; i < n; ++i) {
        const double triad[3] = {1.0 - cues.t_first[i], 1.0 - cues.t_interval[i] / t_steps,
                                 cues.f_rate[i]};
        const std::array<Var, 3> tri{constant(tape, triad[0]), constant(tape, triad[1]),
                                     constant(tape, triad[2])};
        Var u = constant(tape, 0.0);
        for (int j = 0; j < 3; ++j) {
            if (params_.sc.prio_ablate[j]) continue;
            u = u + autodiff::softplus(prio_raw[j]) * tri[j];
        }
        urgency[i] =
            u + var_mlp1(tape, params_.sc.prio_residual, res_w1, res_b1, res_w2, res_b2, tri);
    }

    // Hard top-K cut by urgency value, original order preserved.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (urgency[a].val() != urgency[b].val()) return urgency[a].val() > urgency[b].val();
        return a < b;
    });
    std::vector<int> keep(order.begin(), order.begin() + k);
    std::sort(keep.begin(), keep.end());
    std::vector<Var> sel(static_cast<size_t>(k) * d), u_sel(k);
    for (int i = 0; i < k; ++i) {
        u_sel[i] = urgency[keep[i]];
        for (int f = 0; f < d; ++f)
            sel[static_cast<size_t>(i) * d + f] = mixed[static_cast<size_t>(keep[i]) * d + f];
    }

    // Urgency-scaled attention stack.
    int lo = 0, hi = 0;
    for (int i = 1; i < k; ++i) {
        if (u_sel[i].val() < u_sel[lo].val()) lo = i;
        if (u_sel[i].val() > u_sel[hi].val()) hi = i;
    }
    const Var kappa = autodiff::softplus(leaves.get1("sc.kappa_raw"));
    std::vector<Var> query_scale(k, constant(tape, 1.0));
    if (u_sel[hi].val() > u_sel[lo].val()) {
        const Var range = u_sel[hi] - u_sel[lo];
        for (int i = 0; i < k; ++i)
            query_scale[i] = 1.0 + kappa * ((u_sel[i] - u_sel[lo]) / range);
    }
    std::vector<Var> x = std::move(sel);
    for (size_t l = 0; l < params_.sc.layers.size(); ++l) {
        const std::string prefix = "sc.layer" + std::to_string(l);
        auto wq = leaves.get(prefix + ".wq"), wk = leaves.get(prefix + ".wk"),
             wv = leaves.get(prefix + ".wv"), wo = leaves.get(prefix + ".wo");
        VarAttentionArgs sargs;
        sargs.x = &x;
        sargs.n = k;
        sargs.d = d;
        sargs.heads = params_.sc.config.heads;
        sargs.wq = &wq;
        sargs.wk = &wk;
        sargs.wv = &wv;
        sargs.wo = &wo;
        sargs.query_scale = &query_scale;
        auto attn = var_attention(tape, sargs);
        for (size_t i = 0; i < x.size(); ++i) x[i] = x[i] + attn[i];
        auto ffn_b1 = leaves.get(prefix + ".ffn.b1");
        auto hidden = var_linear(x, k, d, leaves.get(prefix + ".ffn.w1"), &ffn_b1,
                                 params_.sc.config.ffn_dim);
        for (auto& node : hidden) node = autodiff::tanh(node);
        auto ffn_b2 = leaves.get(prefix + ".ffn.b2");
        auto ffn = var_linear(hidden, k, params_.sc.config.ffn_dim,
                              leaves.get(prefix + ".ffn.w2"), &ffn_b2, d);
        for (size_t i = 0; i < x.size(); ++i) x[i] = x[i] + ffn[i];
    }

    // Head: mean pool + affine.
    std::vector<Var> pooled(d, constant(tape, 0.0));
    for (int i = 0; i < k; ++i)
        for (int f = 0; f < d; ++f) pooled[f] = pooled[f] + x[static_cast<size_t>(i) * d + f];
    const double inv_k = 1.0 / k;
    for (int f = 0; f < d; ++f) pooled[f] = pooled[f] * inv_k;
    auto head_b = leaves.get("sc.head.b");
    auto logits = var_linear(pooled, 1, d, leaves.get("sc.head.w"), &head_b,
                             params_.sc.config.classes);

    // Cross-entropy plus the sparsity regularizer.
    double max_logit = logits[0].val();
    for (const auto& lg : logits) max_logit = std::max(max_logit, lg.val());
    Var sum_exp = constant(tape, 0.0);
    for (const auto& lg : logits) sum_exp = sum_exp + autodiff::exp(lg - max_logit);
    Var loss = max_logit + autodiff::log(sum_exp) - logits[label];
    if (config_.sparsity_weight > 0.0)
        loss = loss + config_.sparsity_weight * autodiff::square(rho - config_.rho_target);

    ForwardOutput out;
    out.loss = loss;
    out.logits.resize(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) out.logits[i] = logits[i].val();
    out.rho = rho.val();
    out.k = k;
    out.predicted = static_cast<int>(std::max_element(out.logits.begin(), out.logits.end()) -
                                     out.logits.begin());
    return out;
}

void TrainGraph::read_grads(const Tape& tape, std::vector<double>& grads) const {
    require(grads.size() == n_params_, "read_grads: gradient buffer size mismatch");
    auto blocks = param_blocks(params_);
    size_t idx = 0;
    for (const auto& b : blocks) {
        for (size_t j = 0; j < b.size; ++j, ++idx) {
            const double g = tape.grad(static_cast<int>(idx));
            if (!std::isfinite(g))
                throw NumericError("non-finite gradient in parameter block " + b.name);
            grads[idx] += g;
        }
    }
}

// ---------------------------------------------------------------------------
// Synthetic tasks.
// ---------------------------------------------------------------------------

namespace {

// Samples live on a 16x16 sensor split into a 4x4 grid of emitter patches.
// One signal patch carries the class information; several distractor
// patches carry matched statistics; patch (0,0) emits anchor bursts in the
// first and last bin so the binning window is pinned. Every burst is a tiny
// moving-bar sweep confined to its patch.
constexpr Geometry kTaskGeometry{16, 16};
constexpr int kTaskBins = 12;
constexpr int kPatchSide = 4;
constexpr int kPatchGrid = 4;
constexpr uint32_t kBinUs = 8000;

// A 1.5 ms sweep across one 4x4 patch, dropped into the given bin.
EventStream patch_burst(int patch_y, int patch_x, int bin, Rng& rng) {
    EventStream sweep = synth_moving_bar({kPatchSide, kPatchSide}, 3000.0, 0.0015, 0.0,
                                         rng.next_u64());
    const uint32_t offset = static_cast<uint32_t>(bin) * kBinUs + 500 +
                            static_cast<uint32_t>(rng.uniform_u64(2000));
    return shift_space(shift_time(sweep, offset), static_cast<uint16_t>(patch_x * kPatchSide),
                       static_cast<uint16_t>(patch_y * kPatchSide), kTaskGeometry);
}

EventStream emit_patch(int token, const std::vector<int>& bins, Rng& rng) {
    const int py = token / kPatchGrid;
    const int px = token % kPatchGrid;
    EventStream out;
    out.width = kTaskGeometry.width;
    out.height = kTaskGeometry.height;
    for (int b : bins) out = merge_streams(out, patch_burst(py, px, b, rng));
    return out;
}

std::vector<int> consecutive(int first, int count) {
    std::vector<int> bins(count);
    for (int i = 0; i < count; ++i) bins[i] = first + i;
    return bins;
}

SpikeTensor render_sample(const std::string& task, int label, uint64_t seed,
                          const PipelineConfig& cfg) {
    Rng rng(seed);

    // Anchor patch pins [t_min, t_max]; identical for both classes.
    EventStream stream = emit_patch(0, {0, kTaskBins - 1}, rng);

    // Emitters sit on the checkerboard sub-lattice so no two patches share
    // an edge; edge-adjacent patches would merge into one oversized token
    // through the stride-2 receptive-field overlap.
    std::vector<int> spots;
    for (int tok = 1; tok < kPatchGrid * kPatchGrid; ++tok)
        if ((tok / kPatchGrid + tok % kPatchGrid) % 2 == 0) spots.push_back(tok);
    for (size_t i = spots.size(); i > 1; --i)
        std::swap(spots[i - 1], spots[rng.uniform_u64(i)]);

    std::vector<int> signal_bins;
    std::vector<std::vector<int>> distractor_bins;
    if (task == "early_late") {
        // The signal patch fires early (class 0) or late (class 1); the
        // distractors sit in between with a higher rate, so a selector
        // blind to first-spike timing keeps only distractors.
        signal_bins = label == 0 ? std::vector<int>{1, 2, 3} : std::vector<int>{9, 10, 11};
        for (int i = 0; i < 5; ++i) distractor_bins.push_back(consecutive(5, 5));
    } else if (task == "burst_regular") {
        // Same first spike; the signal is a tight burst (class 0) or two
        // spread pairs (class 1). The class reaches the classifier through
        // the interval-driven attention bias, not through selection.
        signal_bins = label == 0 ? std::vector<int>{1, 2, 3} : std::vector<int>{1, 2, 10, 11};
        for (int i = 0; i < 4; ++i) distractor_bins.push_back({1, 2, 5, 6, 9, 10});
    } else { // dense_sparse
        // Class 0 has one early token firing far above the early field
        // rate; class 1 does not. A late jammer runs at the signal's rate
        // so the maximum token rate carries no class information, and the
        // early distractor lengths are randomized so neither does the
        // global event count. Only the combination "early and dense"
        // separates the classes.
        signal_bins = label == 0 ? consecutive(1, 8)
                                 : consecutive(1, 3 + static_cast<int>(rng.uniform_u64(3)));
        for (int i = 0; i < 4; ++i)
            distractor_bins.push_back(consecutive(1, 2 + static_cast<int>(rng.uniform_u64(5))));
        distractor_bins.push_back(consecutive(4, 8));
    }

    stream = merge_streams(stream, emit_patch(spots[0], signal_bins, rng));
    for (size_t i = 0; i < distractor_bins.size(); ++i)
        stream = merge_streams(stream, emit_patch(spots[1 + i], distractor_bins[i], rng));

    return bin_to_frames(stream, cfg.timesteps, cfg.frame_h, cfg.frame_w);
}

} // namespace

Dataset make_task_dataset(const PipelineConfig& config, uint64_t seed) {
    require(kTaskGeometry.height % config.frame_h == 0 &&
                kTaskGeometry.width % config.frame_w == 0,
            "make_task_dataset: frame geometry must divide the 16x16 sensor");
    require(config.timesteps == kTaskBins,
            "make_task_dataset: tasks are laid out for io.timesteps=12");
    Dataset data;
    Rng rng(seed);
    for (int i = 0; i < config.train_samples; ++i) {
        const int label = i % 2;
        data.train.push_back({render_sample(config.train_task, label, rng.next_u64(), config),
                              label});
    }
    for (int i = 0; i < config.test_samples; ++i) {
        const int label = i % 2;
        data.test.push_back({render_sample(config.train_task, label, rng.next_u64(), config),
                             label});
    }
    return data;
}

// ---------------------------------------------------------------------------
// Optimizer and training loop.
// ---------------------------------------------------------------------------

AdamW::AdamW(size_t n_params, double lr, double weight_decay)
    : lr_(lr), weight_decay_(weight_decay), m_(n_params, 0.0), v_(n_params, 0.0) {}

void AdamW::step(std::vector<ParamBlockRef>& blocks, const std::vector<double>& grads,
                 double lr_scale) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    const double lr = lr_ * lr_scale;
    size_t idx = 0;
    for (auto& b : blocks) {
        const bool is_vth = b.name.size() >= 7 && b.name.rfind("lif.vth") == b.name.size() - 7;
        for (size_t j = 0; j < b.size; ++j, ++idx) {
            const double g = grads[idx];
            m_[idx] = beta1 * m_[idx] + (1.0 - beta1) * g;
            v_[idx] = beta2 * v_[idx] + (1.0 - beta2) * g * g;
            const double mhat = m_[idx] / bc1;
            const double vhat = v_[idx] / bc2;
            b.data[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay_ * b.data[j]);
            if (is_vth && b.data[j] < kVthFloor) b.data[j] = kVthFloor;
        }
    }
}

EpochMetrics evaluate(const Pipeline& pipeline, const std::vector<Sample>& samples, int epoch,
                      const std::string& split) {
    EpochMetrics m;
    m.epoch = epoch;
    m.split = split;
    for (const auto& s : samples) {
        InferenceResult r = pipeline.infer_frames(s.frames);
        double max_logit = r.logits[0];
        for (double lg : r.logits) max_logit = std::max(max_logit, lg);
        double sum_exp = 0.0;
        for (double lg : r.logits) sum_exp += std::exp(lg - max_logit);
        m.loss += max_logit + std::log(sum_exp) - r.logits[s.label];
        m.accuracy += r.predicted == s.label ? 1.0 : 0.0;
        m.mean_rho += r.decision.rho_dynamic;
        m.mean_k += r.decision.k;
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    m.loss *= inv;
    m.accuracy *= inv;
    m.mean_rho *= inv;
    m.mean_k *= inv;
    return m;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
    std::string out = "epoch,split,loss,accuracy,mean_rho,mean_K\n";
    char buf[160];
    for (const auto& m : history) {
        snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f,%.6f,%.3f\n", m.epoch, m.split.c_str(), m.loss,
                 m.accuracy, m.mean_rho, m.mean_k);
        out += buf;
    }
    return out;
}

TrainOutcome train_synthetic(Pipeline& pipeline, const Dataset& data, std::ostream* log) {
    const PipelineConfig& cfg = pipeline.config();
    const SurrogateSpec spec = surrogate_from_config(cfg);
    TrainGraph graph(pipeline.params(), cfg, spec, SpikeMode::exact);
    const size_t n_params = graph.n_params();
    AdamW opt(n_params, cfg.lr, cfg.weight_decay);
    Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<int> index(data.train.size());
    std::iota(index.begin(), index.end(), 0);
    TrainOutcome outcome;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the deterministic engine.
        for (size_t i = index.size(); i > 1; --i)
            std::swap(index[i - 1], index[shuffle_rng.uniform_u64(i)]);
        const double lr_scale =
            0.5 * (1.0 + std::cos(3.14159265358979323846 * epoch / cfg.epochs));

        for (size_t start = 0; start < index.size(); start += cfg.batch) {
            const size_t stop = std::min(index.size(), start + cfg.batch);
            const int batch_n = static_cast<int>(stop - start);
            std::vector<std::vector<double>> sample_grads(batch_n);
            std::vector<double> sample_loss(batch_n, 0.0);

            // Per-sample tapes; gradients reduced in index order afterwards,
            // so the result does not depend on thread scheduling.
#pragma omp parallel for schedule(dynamic, 1)
            for (int bi = 0; bi < batch_n; ++bi) {
                const Sample& s = data.train[index[start + bi]];
                Tape tape;
                ForwardOutput out = graph.forward(tape, s.frames, s.label);
                tape.backward(out.loss.i);
                sample_grads[bi].assign(n_params, 0.0);
                graph.read_grads(tape, sample_grads[bi]);
                sample_loss[bi] = out.loss.val();
            }

            std::vector<double> grads(n_params, 0.0);
            double batch_loss = 0.0;
            for (int bi = 0; bi < batch_n; ++bi) {
                batch_loss += sample_loss[bi];
                for (size_t p = 0; p < n_params; ++p) grads[p] += sample_grads[bi][p];
            }
            if (!std::isfinite(batch_loss))
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch));
            const double inv_batch = 1.0 / batch_n;
            for (double& g : grads) g *= inv_batch;
            auto blocks = param_blocks(pipeline.params());
            opt.step(blocks, grads, lr_scale);
        }

        if (cfg.train_feedback) {
            // Controller runs between epochs only, from the train-split
            // activity reaching the attention stage.
            double rate = 0.0;
            for (const auto& s : data.train)
                rate += pipeline.infer_frames(s.frames).observed_rate;
            pipeline.apply_feedback(rate / static_cast<double>(data.train.size()));
        }

        EpochMetrics train_m = evaluate(pipeline, data.train, epoch, "train");
        EpochMetrics test_m = evaluate(pipeline, data.test, epoch, "test");
        outcome.history.push_back(train_m);
        outcome.history.push_back(test_m);
        if (log)
            *log << "epoch " << epoch << " train_acc=" << train_m.accuracy
                 << " test_acc=" << test_m.accuracy << " rho=" << test_m.mean_rho << "\n";
    }

    if (!outcome.history.empty()) {
        const auto& last = outcome.history.back();
        outcome.test_accuracy = last.accuracy;
        outcome.test_mean_rho = last.mean_rho;
        outcome.test_mean_k = last.mean_k;
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle.
// ---------------------------------------------------------------------------

std::vector<GradCheckResult> gradient_check(Pipeline& pipeline, const SpikeTensor& frames,
                                            int label, double fd_step) {
    const SurrogateSpec spec = surrogate_from_config(pipeline.config());
    TrainGraph graph(pipeline.params(), pipeline.config(), spec, SpikeMode::smoothed);
    const size_t n_params = graph.n_params();

    Tape tape;
    ForwardOutput out = graph.forward(tape, frames, label);
    tape.backward(out.loss.i);
    std::vector<double> ad(n_params, 0.0);
    graph.read_grads(tape, ad);

    auto loss_at = [&]() {
        Tape t2;
        return graph.forward(t2, frames, label).loss.val();
    };

    std::vector<GradCheckResult> results;
    auto blocks = param_blocks(pipeline.params());
    size_t idx = 0;
    for (const auto& b : blocks) {
        GradCheckResult r;
        r.block = b.name;
        for (size_t j = 0; j < b.size; ++j, ++idx) {
            const double saved = b.data[j];
            b.data[j] = saved + fd_step;
            const double up = loss_at();
            b.data[j] = saved - fd_step;
            const double down = loss_at();
            b.data[j] = saved;
            const double fd = (up - down) / (2.0 * fd_step);
            const double denom = std::max({std::abs(ad[idx]), std::abs(fd), 1e-3});
            r.max_rel_err = std::max(r.max_rel_err, std::abs(ad[idx] - fd) / denom);
            ++r.checked;
        }
        results.push_back(r);
    }
    return results;
}

} // namespace sparta
