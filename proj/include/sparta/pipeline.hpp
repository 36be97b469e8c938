#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparta/config.hpp"
#include "sparta/event_io.hpp"
#include "sparta/hilif.hpp"
#include "sparta/msp.hpp"
#include "sparta/sc.hpp"
#include "sparta/sten.hpp"
#include "sparta/stsg.hpp"

namespace sparta {

struct PipelineParams {
    StenParams sten;
    MspParams msp;
    StsgParams stsg;
    ScParams sc;
};

// A named view into one learnable parameter block. Blocks are enumerated in
// a fixed order; the trainer, the optimizer, the gradient checker and the
// checkpoint writer all walk the same list.
struct ParamBlockRef {
    std::string name;
    double* data;
    size_t size;
};
std::vector<ParamBlockRef> param_blocks(PipelineParams& params);
size_t param_count(const PipelineParams& params);

struct InferenceResult {
    int predicted = 0;
    std::vector<double> logits;
    SparsityDecision decision;
    SpikeInfo cues; // post-grouping, aligned with decision vectors
    OpCountReport ops;
    double observed_rate = 0.0; // mean F_rate of the selected tokens

    // diagnostics on the token grid (pre-grouping layout)
    int grid_h = 0, grid_w = 0;
    std::vector<double> rate_map;       // F_rate per token
    std::vector<double> attention_mass; // mean received attention mass per token
    std::vector<uint8_t> selected_map;  // 1 where the SC kept the token
    std::vector<uint64_t> spikes_per_step;
};

class Pipeline {
public:
    Pipeline(const PipelineConfig& config, uint64_t seed);

    const PipelineConfig& config() const { return config_; }
    PipelineParams& params() { return params_; }
    const PipelineParams& params() const { return params_; }
    FeedbackState& feedback_state() { return fb_; }

    SpikeTensor bin(const EventStream& stream) const;
    InferenceResult infer(const EventStream& stream) const;
    InferenceResult infer_frames(const SpikeTensor& frames) const;

    // EMA update from an observed firing rate, then threshold scaling on
    // every HI-LIF layer (shared multiplicative factor).
    void apply_feedback(double observed_rate);

    OpCountConfig op_config(int n_tokens, int k) const;
    std::pair<int, int> token_grid() const; // (ht, wt) for the configured frames

    std::string save_checkpoint() const;
    void load_checkpoint(const std::string& text);

private:
    PipelineConfig config_;
    PipelineParams params_;
    FeedbackState fb_;
};

// Fits a least-squares slope to (log x, log y); used for the K^2 scaling
// report. Returns false when fewer than two distinct x values are given.
bool loglog_slope(const std::vector<double>& x, const std::vector<double>& y, double* slope);

} // namespace sparta
