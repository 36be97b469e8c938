#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace sparta {

// Flat key=value pipeline configuration. Unknown keys are rejected and every
// value is validated against its module's preconditions at load time.
// save() -> load() round-trips exactly.
struct PipelineConfig {
    uint64_t seed = 42;
    bool parallel = true;

    // event binning
    int timesteps = 16;
    int frame_h = 64;
    int frame_w = 64;
    int csv_width = 0; // 0 = infer geometry from CSV events
    int csv_height = 0;

    // STEN
    int sten_stages = 2;
    int sten_stage_channels = 16;
    int sten_d1 = 8;
    int sten_d2 = 16;
    int sten_d3 = 8;
    double sten_init_scale = 2.0;
    int patch_h = 1;
    int patch_w = 1;

    // HI-LIF priors (shared by every HI-LIF layer) and feedback controller
    double mu_tau = 2.0;
    double sigma_tau = 0.3;
    double mu_vth = 1.0;
    double sigma_vth = 0.2;
    std::string reset_mode = "soft";
    double v_reset = 0.0;
    double fb_lambda = 0.9;
    double fb_eta = 0.05;
    double fb_target = 0.2;

    // MSP
    double msp_alpha = 1.0;
    double msp_beta = 0.25;
    double msp_gamma = 2.0;
    int msp_heads = 4;
    bool ablate_timing = false;
    bool ablate_interval = false;
    bool ablate_rate = false;

    // STSG
    int stsg_hidden = 16;
    int k_min = 16;
    int n_target = 0; // 0 = keep the natural token count
    int fixed_k = 0;  // 0 = dynamic policy

    // SC
    int sc_heads = 4;
    int sc_layers = 2;
    int sc_ffn_dim = 0; // 0 = 2 * D
    int sc_classes = 2;
    int sc_prio_hidden = 4;
    bool ablate_we = false;
    bool ablate_wi = false;
    bool ablate_wr = false;

    // training
    std::string train_task = "early_late";
    double lr = 0.01;
    int epochs = 15;
    int batch = 8;
    int train_samples = 64;
    int test_samples = 32;
    double weight_decay = 1e-3;
    std::string surrogate = "rectangular";
    double surrogate_a = 0.5;
    double rho_target = 0.654;
    double sparsity_weight = 0.0;
    bool train_feedback = false;

    int feature_dim() const { return sten_d1 + sten_d2 + sten_d3; }
    int ffn_dim() const { return sc_ffn_dim > 0 ? sc_ffn_dim : 2 * feature_dim(); }

    static PipelineConfig load(const std::string& text);
    static PipelineConfig load_file(const std::string& path);
    std::string save() const;
    void validate() const;
};

// Shared helper for the flat key=value grammar (also used by checkpoints):
// one `key=value` pair per line, '#' starts a comment, blank lines ignored.
std::map<std::string, std::string> parse_kv(const std::string& text);

} // namespace sparta
