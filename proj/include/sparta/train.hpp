#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "sparta/autodiff.hpp"
#include "sparta/pipeline.hpp"

namespace sparta {

enum class SurrogateKind { rectangular, fast_sigmoid };

// Backward-pass stand-in for the Heaviside derivative. The forward pass
// always emits exact spikes during training; the surrogate only shapes
// gradients.
struct SurrogateSpec {
    SurrogateKind kind = SurrogateKind::rectangular;
    double a = 0.5;
};

SurrogateSpec surrogate_from_config(const PipelineConfig& config);

// Pseudo-derivative at v - v_th = x:
//   rectangular: 1/(2a) on |x| <= a, else 0
//   fast-sigmoid: (1/a) / (1 + |x|/a)^2
double surrogate_grad(double x, const SurrogateSpec& spec);

// Smooth gate whose exact derivative is surrogate_grad; replaces the
// Heaviside in smoothed mode so finite differences have something
// differentiable to probe.
double surrogate_gate(double x, const SurrogateSpec& spec);

// exact: Heaviside forward, surrogate backward (training).
// smoothed: surrogate_gate forward, its true derivative backward (checks).
enum class SpikeMode { exact, smoothed };

struct Sample {
    SpikeTensor frames;
    int label = 0;
};

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

// Synthetic two-class tasks built from the moving-bar synthesizer:
//   early_late:    bar sweep in the early vs late part of the window
//   burst_regular: same number of sweeps, clustered vs evenly spaced
//   dense_sparse:  many vs few sweeps
// plus a shared background-noise anchor stream. Deterministic per seed.
Dataset make_task_dataset(const PipelineConfig& config, uint64_t seed);

struct ForwardOutput {
    autodiff::Var loss;
    std::vector<double> logits;
    double rho = 0.0;
    int k = 0;
    int predicted = 0;
};

// Tape-based mirror of the inference pipeline. One forward per tape; leaves
// for every learnable parameter are pushed first, in param_blocks order, so
// gradients land at node indices [0, param_count).
class TrainGraph {
public:
    TrainGraph(PipelineParams& params, const PipelineConfig& config, SurrogateSpec surrogate,
               SpikeMode mode);

    ForwardOutput forward(autodiff::Tape& tape, const SpikeTensor& frames, int label) const;

    // Adds d(loss)/d(param) into grads (layout = concatenated param_blocks).
    // Throws NumericError naming the offending block on non-finite gradients.
    void read_grads(const autodiff::Tape& tape, std::vector<double>& grads) const;

    size_t n_params() const { return n_params_; }

private:
    PipelineParams& params_;
    const PipelineConfig& config_;
    SurrogateSpec surrogate_;
    SpikeMode mode_;
    size_t n_params_;
};

// Decoupled-weight-decay adaptive optimizer with a cosine learning-rate
// schedule and a post-step projection keeping every v_th at or above the
// floor.
class AdamW {
public:
    AdamW(size_t n_params, double lr, double weight_decay);
    void step(std::vector<ParamBlockRef>& blocks, const std::vector<double>& grads,
              double lr_scale);

private:
    double lr_, weight_decay_;
    int64_t t_ = 0;
    std::vector<double> m_, v_;
};

struct EpochMetrics {
    int epoch = 0;
    std::string split;
    double loss = 0.0;
    double accuracy = 0.0;
    double mean_rho = 0.0;
    double mean_k = 0.0;
};

struct TrainOutcome {
    std::vector<EpochMetrics> history;
    double test_accuracy = 0.0;
    double test_mean_rho = 0.0;
    double test_mean_k = 0.0;
};

// Full training loop: shuffled batches, data-parallel sample gradients
// summed in index order, AdamW updates, optional feedback-controller pass
// between epochs. Bitwise deterministic for a fixed seed.
TrainOutcome train_synthetic(Pipeline& pipeline, const Dataset& data, std::ostream* log = nullptr);

std::string metrics_csv(const std::vector<EpochMetrics>& history);

// Evaluation via the inference path (exact spikes).
EpochMetrics evaluate(const Pipeline& pipeline, const std::vector<Sample>& samples, int epoch,
                      const std::string& split);

struct GradCheckResult {
    std::string block;
    size_t checked = 0;
    double max_rel_err = 0.0;
};

// Central finite differences on the surrogate-smoothed forward, every
// parameter of every block. rel = |ad - fd| / max(|ad|, |fd|, 1e-3).
std::vector<GradCheckResult> gradient_check(Pipeline& pipeline, const SpikeTensor& frames,
                                            int label, double fd_step = 1e-4);

} // namespace sparta
