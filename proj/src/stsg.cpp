#include "sparta/stsg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparta/rng.hpp"

namespace sparta {

StsgParams init_stsg(int hidden, int k_min, uint64_t seed) {
    require(hidden >= 1, "init_stsg: hidden size must be positive");
    require(k_min >= 1, "init_stsg: k_min must be positive");
    StsgParams p;
    p.k_min = k_min;
    p.predictor = Mlp::zeros(3, hidden, 1);
    p.fusion = Mlp::zeros(3, hidden, 1);
    Rng rng(seed);
    auto init = [&](Mlp& m) {
        const double s1 = 1.0 / std::sqrt(3.0);
        const double s2 = 1.0 / std::sqrt(static_cast<double>(m.hidden));
        for (double& v : m.w1) v = rng.normal(0.0, s1);
        for (double& v : m.w2) v = rng.normal(0.0, s2);
    };
    init(p.predictor);
    init(p.fusion);
    return p;
}

std::pair<std::array<double, 3>, double> predict_sparsity(const SpikeInfo& cues,
                                                          const Mlp& predictor) {
    const size_t n = cues.tokens();
    require(n >= 1, "predict_sparsity: need at least one token");
    double mean_rate = 0.0, mean_interval = 0.0, mean_first = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mean_rate += cues.f_rate[i];
        mean_interval += cues.t_interval[i];
        mean_first += cues.t_first[i];
    }
    mean_rate /= n;
    mean_interval /= n;
    mean_first /= n;
    double var_first = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = cues.t_first[i] - mean_first;
        var_first += d * d;
    }
    var_first /= n; // population variance
    std::array<double, 3> f_input{mean_rate, std::sqrt(var_first), mean_interval};
    const double rho = logistic(predictor.apply1(f_input.data()));
    return {f_input, rho};
}

std::array<double, 25> dog_kernel() {
    constexpr double sigma_c = 0.8;
    constexpr double sigma_s = 1.6;
    std::array<double, 25> center{}, surround{}, out{};
    double sum_c = 0.0, sum_s = 0.0;
    for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
            const int i = (dy + 2) * 5 + (dx + 2);
            const double r2 = dx * dx + dy * dy;
            center[i] = std::exp(-r2 / (2.0 * sigma_c * sigma_c));
            surround[i] = std::exp(-r2 / (2.0 * sigma_s * sigma_s));
            sum_c += center[i];
            sum_s += surround[i];
        }
    for (int i = 0; i < 25; ++i) out[i] = center[i] / sum_c - surround[i] / sum_s;
    return out;
}

std::vector<double> spatial_scores(const std::vector<double>& f_rate_grid, int ht, int wt,
                                   kernels::Exec exec) {
    require(ht >= 1 && wt >= 1 && f_rate_grid.size() == static_cast<size_t>(ht) * wt,
            "spatial_scores: grid geometry mismatch");
    static const std::array<double, 25> kernel = dog_kernel();
    std::vector<double> out(f_rate_grid.size());
    kernels::conv5x5_grid(exec, f_rate_grid.data(), out.data(), kernel.data(), ht, wt);
    return out;
}

std::vector<double> fuse_scores(const std::vector<double>& s_spatial,
                                const std::vector<double>& s_msp,
                                const std::vector<double>& s_temporal, const Mlp& fusion) {
    const size_t n = s_spatial.size();
    require(s_msp.size() == n && s_temporal.size() == n, "fuse_scores: score length mismatch");
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        const double in[3] = {s_spatial[i], s_msp[i], s_temporal[i]};
        out[i] = fusion.apply1(in);
    }
    return out;
}

std::pair<int, std::vector<uint8_t>> select_topk(const std::vector<double>& s_combined,
                                                 double rho_dynamic, int n, int k_min) {
    require(n >= 1 && k_min >= 1 && n >= k_min, "select_topk: need N >= K_min >= 1");
    require(s_combined.size() == static_cast<size_t>(n), "select_topk: score length mismatch");
    int k = static_cast<int>(std::floor(n * (1.0 - rho_dynamic) + 0.5));
    k = std::max(k, k_min);
    k = std::min(k, n);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (s_combined[a] != s_combined[b]) return s_combined[a] > s_combined[b];
        return a < b;
    });
    std::vector<uint8_t> mask(n, 0);
    for (int i = 0; i < k; ++i) mask[order[i]] = 1;
    return {k, std::move(mask)};
}

TokenGrid gate(const TokenGrid& tokens, const std::vector<uint8_t>& mask,
               const GateFactors& factors) {
    require(mask.size() == static_cast<size_t>(tokens.n), "gate: mask/token count mismatch");
    const double enh = factors.g_enh();
    const double sup = factors.g_sup();
    TokenGrid out = tokens;
    for (int i = 0; i < tokens.n; ++i) {
        const double f = mask[i] ? enh : sup;
        double* row = out.row(i);
        for (int j = 0; j < tokens.d; ++j) row[j] *= f;
    }
    return out;
}

GroupResult patch_group(const TokenGrid& tokens, const std::vector<double>& f_rate,
                        int n_target) {
    require(n_target >= 1, "patch_group: target token count must be positive");
    require(f_rate.size() == static_cast<size_t>(tokens.n), "patch_group: rate length mismatch");

    std::vector<int> sources;
    sources.reserve(n_target);
    if (tokens.n >= n_target) {
        // Keep the n_target highest-rate tokens, original relative order.
        std::vector<int> order(tokens.n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (f_rate[a] != f_rate[b]) return f_rate[a] > f_rate[b];
            return a < b;
        });
        std::vector<uint8_t> keep(tokens.n, 0);
        for (int i = 0; i < n_target; ++i) keep[order[i]] = 1;
        for (int i = 0; i < tokens.n; ++i)
            if (keep[i]) sources.push_back(i);
    } else {
        // Originals first, then duplicates of the highest-rate token; tokens
        // tied at the top rate take turns (round-robin by index).
        for (int i = 0; i < tokens.n; ++i) sources.push_back(i);
        const double top_rate = *std::max_element(f_rate.begin(), f_rate.end());
        std::vector<int> top_tokens;
        for (int i = 0; i < tokens.n; ++i)
            if (f_rate[i] == top_rate) top_tokens.push_back(i);
        int cursor = 0;
        while (static_cast<int>(sources.size()) < n_target) {
            sources.push_back(top_tokens[cursor % top_tokens.size()]);
            ++cursor;
        }
    }

    GroupResult res;
    res.tokens = TokenGrid(n_target, tokens.d);
    for (int i = 0; i < n_target; ++i) {
        const double* src = tokens.row(sources[i]);
        std::copy(src, src + tokens.d, res.tokens.row(i));
    }
    res.source_index = std::move(sources);
    return res;
}

} // namespace sparta
