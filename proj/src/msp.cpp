#include "sparta/msp.hpp"

#include <cmath>

#include "sparta/mlp.hpp"
#include "sparta/rng.hpp"

namespace sparta {

MspParams init_msp(int d, int heads, double alpha, double beta, double gamma, uint64_t seed) {
    require(d >= 1 && heads >= 1, "init_msp: bad dimensions");
    require(d % heads == 0, "init_msp: head count must divide feature dim");
    require(alpha > 0.0 && beta > 0.0, "init_msp: decay rates must be positive");
    MspParams p;
    p.d = d;
    p.heads = heads;
    p.alpha_raw = std::log(alpha);
    p.beta_raw = std::log(beta);
    p.gamma = gamma;
    Rng rng(seed);
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto* m : {&p.wq, &p.wk, &p.wv, &p.wo}) {
        m->resize(static_cast<size_t>(d) * d);
        for (double& v : *m) v = rng.normal(0.0, std_dev);
    }
    return p;
}

TemporalWeights temporal_weights(const SpikeInfo& cues, const MspParams& params) {
    const size_t n = cues.tokens();
    const double alpha = params.alpha();
    const double beta = params.beta();
    TemporalWeights w;
    w.w_timing.resize(n);
    w.w_interval.resize(n);
    w.w_combined.resize(n);
    for (size_t i = 0; i < n; ++i) {
        w.w_timing[i] = params.ablate_timing ? 1.0 : std::exp(-alpha * cues.t_first[i]);
        w.w_interval[i] = params.ablate_interval ? 1.0 : std::exp(-beta * cues.t_interval[i]);
        const double rate_factor =
            params.ablate_rate ? 0.5 : logistic(params.gamma * cues.f_rate[i]);
        w.w_combined[i] = w.w_timing[i] * w.w_interval[i] * rate_factor;
    }
    return w;
}

TokenGrid bias_attention(const TokenGrid& tokens, const TemporalWeights& weights,
                         const MspParams& params, kernels::Exec exec, double* mass_out,
                         uint64_t* scoremix_macs) {
    require(weights.w_combined.size() == static_cast<size_t>(tokens.n),
            "bias_attention: weight/token count mismatch");
    require(tokens.d == params.d, "bias_attention: feature dim mismatch");
    for (double v : tokens.features)
        if (!std::isfinite(v)) throw ValidationError("bias_attention: non-finite features");

    std::vector<double> key_bias(tokens.n);
    for (int i = 0; i < tokens.n; ++i)
        key_bias[i] = std::log(weights.w_combined[i] + kLogBiasEpsilon);

    TokenGrid out(tokens.n, tokens.d, tokens.ht, tokens.wt);
    kernels::AttentionArgs args;
    args.x = tokens.features.data();
    args.n = tokens.n;
    args.d = tokens.d;
    args.heads = params.heads;
    args.wq = params.wq.data();
    args.wk = params.wk.data();
    args.wv = params.wv.data();
    args.wo = params.wo.data();
    args.key_bias = key_bias.data();
    args.out = out.features.data();
    args.mass_out = mass_out;
    args.scoremix_macs = scoremix_macs;
    kernels::attention(exec, args);
    return out;
}

} // namespace sparta
