#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "sparta/kernels.hpp"
#include "sparta/mlp.hpp"
#include "sparta/types.hpp"

namespace sparta {

// Lateral-inhibition gate factors. Reparameterized so the enhancement never
// drops below 1 and the suppression stays in [0, 1].
struct GateFactors {
    double g_enh_raw = 0.0; // g_enh = 1 + softplus(raw)
    double g_sup_raw = 0.0; // g_sup = logistic(raw)

    double g_enh() const { return 1.0 + softplus(g_enh_raw); }
    double g_sup() const { return logistic(g_sup_raw); }
};

struct StsgParams {
    Mlp predictor; // 3 -> hidden -> 1, feeds the sparsity logistic
    Mlp fusion;    // 3 -> hidden -> 1, per-token score fusion
    GateFactors gate;
    int k_min = 16;
};

// Everything the selection stage decided for one sample.
struct SparsityDecision {
    std::array<double, 3> f_input{}; // [mean F_rate, std T_first, mean T_interval]
    double rho_dynamic = 0.0;        // predicted sparsity fraction in (0, 1)
    int k = 0;                       // max(k_min, round(N * (1 - rho)))
    std::vector<double> s_spatial;
    std::vector<double> s_msp;      // w_combined from MSP
    std::vector<double> s_temporal; // priority triad with unit weights
    std::vector<double> s_combined;
    std::vector<uint8_t> mask; // exactly k ones, ties broken toward lower index
};

StsgParams init_stsg(int hidden, int k_min, uint64_t seed);

// Eq-style cue summary and the learned sparsity fraction.
std::pair<std::array<double, 3>, double> predict_sparsity(const SpikeInfo& cues,
                                                          const Mlp& predictor);

// Center-surround competition: fixed 5x5 difference-of-Gaussians
// (sigma 0.8 / 1.6, unit-normalized lobes) over the F_rate token grid,
// zero-padded. Positive where a token out-fires its neighborhood.
std::array<double, 25> dog_kernel();
std::vector<double> spatial_scores(const std::vector<double>& f_rate_grid, int ht, int wt,
                                   kernels::Exec exec = kernels::Exec::parallel);

std::vector<double> fuse_scores(const std::vector<double>& s_spatial,
                                const std::vector<double>& s_msp,
                                const std::vector<double>& s_temporal, const Mlp& fusion);

// K = max(k_min, round-half-up(N * (1 - rho))). The mask marks the K largest
// scores; ties go to the lower index.
std::pair<int, std::vector<uint8_t>> select_topk(const std::vector<double>& s_combined,
                                                 double rho_dynamic, int n, int k_min);

// Eq. 9 soft gate: masked-in rows scale by g_enh, masked-out by g_sup. No
// token is removed here; the hard cut happens in the classifier stage.
TokenGrid gate(const TokenGrid& tokens, const std::vector<uint8_t>& mask,
               const GateFactors& factors);

// Adjusts the token count to exactly n_target without zero-padding: keeps
// the highest-F_rate tokens when shrinking, duplicates the highest-F_rate
// token (ties cycling round-robin) when growing. source_index[i] names the
// input token each output row came from.
struct GroupResult {
    TokenGrid tokens;
    std::vector<int> source_index;
};
GroupResult patch_group(const TokenGrid& tokens, const std::vector<double>& f_rate, int n_target);

} // namespace sparta
