#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "sparta/pgm.hpp"
#include "sparta/pipeline.hpp"
#include "sparta/rng.hpp"
#include "sparta/selftest.hpp"
#include "sparta/train.hpp"

namespace fs = std::filesystem;
using namespace sparta;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string out_dir = ".";
    uint64_t seed = 0;
    bool seed_set = false;
    int fixed_k = -1;
};

PipelineConfig load_config(const GlobalOpts& g) {
    PipelineConfig cfg =
        g.config_path.empty() ? PipelineConfig{} : PipelineConfig::load_file(g.config_path);
    if (g.seed_set) cfg.seed = g.seed;
    if (g.fixed_k >= 0) cfg.fixed_k = g.fixed_k;
    cfg.validate();
    return cfg;
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
    fs::create_directories(g.out_dir);
    return (fs::path(g.out_dir) / name).string();
}

EventStream load_events(const PipelineConfig& cfg, const std::string& path) {
    std::optional<Geometry> geom;
    if (cfg.csv_width > 0 && cfg.csv_height > 0)
        geom = Geometry{static_cast<uint16_t>(cfg.csv_width),
                        static_cast<uint16_t>(cfg.csv_height)};
    return parse_event_file(read_file(path), geom);
}

std::string scores_csv(const SparsityDecision& d) {
    std::string out = "index,s_spatial,s_msp,s_temporal,s_combined,selected\n";
    char buf[160];
    for (size_t i = 0; i < d.mask.size(); ++i) {
        snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%d\n", i, d.s_spatial[i], d.s_msp[i],
                 d.s_temporal[i], d.s_combined[i], static_cast<int>(d.mask[i]));
        out += buf;
    }
    return out;
}

int cmd_synth(const GlobalOpts& g, int width, int height, double velocity, double duration,
              double noise_rate, const std::string& name) {
    PipelineConfig cfg = load_config(g);
    EventStream stream = synth_moving_bar(
        {static_cast<uint16_t>(width), static_cast<uint16_t>(height)}, velocity, duration,
        noise_rate, cfg.seed);
    const std::string path = out_path(g, name);
    write_text_file(path, serialize_spk1(stream));
    std::cout << "wrote " << stream.events.size() << " events to " << path << "\n";
    return 0;
}

int cmd_encode(const GlobalOpts& g, const std::string& input) {
    PipelineConfig cfg = load_config(g);
    EventStream stream = load_events(cfg, input);
    SpikeTensor frames = bin_to_frames(stream, cfg.timesteps, cfg.frame_h, cfg.frame_w);
    std::string csv = "t,off_count,on_count\n";
    const size_t plane = static_cast<size_t>(frames.h) * frames.w;
    for (int t = 0; t < frames.t; ++t) {
        uint64_t off = 0, on = 0;
        for (size_t e = 0; e < plane; ++e) {
            off += frames.data[(t * 2 + 0) * plane + e];
            on += frames.data[(t * 2 + 1) * plane + e];
        }
        csv += std::to_string(t) + "," + std::to_string(off) + "," + std::to_string(on) + "\n";
    }
    const std::string path = out_path(g, "encode_counts.csv");
    write_text_file(path, csv);
    std::cout << "binned " << stream.events.size() << " events into (" << frames.t << ",2,"
              << frames.h << "," << frames.w << "), " << frames.count_spikes()
              << " active cells; per-bin counts in " << path << "\n";
    return 0;
}

int cmd_infer(const GlobalOpts& g, const std::string& input, const std::string& checkpoint) {
    PipelineConfig cfg = load_config(g);
    Pipeline pipe(cfg, cfg.seed);
    if (!checkpoint.empty()) pipe.load_checkpoint(read_file(checkpoint));
    InferenceResult res = pipe.infer(load_events(cfg, input));
    const double sparsity = 1.0 - static_cast<double>(res.decision.k) / res.decision.mask.size();
    printf("class=%d K=%d N=%zu sparsity=%.1f%% rho=%.4f\n", res.predicted, res.decision.k,
           res.decision.mask.size(), 100.0 * sparsity, res.decision.rho_dynamic);
    std::cout << res.ops.summary() << "\n";
    write_text_file(out_path(g, "scores.csv"), scores_csv(res.decision));
    write_text_file(out_path(g, "opcounts.csv"), res.ops.to_csv());
    return 0;
}

int cmd_train(const GlobalOpts& g) {
    PipelineConfig cfg = load_config(g);
    Pipeline pipe(cfg, cfg.seed);
    Dataset data = make_task_dataset(cfg, cfg.seed + 1);
    TrainOutcome outcome = train_synthetic(pipe, data, &std::cout);
    write_text_file(out_path(g, "metrics.csv"), metrics_csv(outcome.history));
    write_text_file(out_path(g, "checkpoint.txt"), pipe.save_checkpoint());
    printf("final test accuracy %.4f, mean rho %.4f, mean K %.1f\n", outcome.test_accuracy,
           outcome.test_mean_rho, outcome.test_mean_k);
    return 0;
}

int cmd_profile(const GlobalOpts& g, std::vector<int> sweep, int dynamic_samples) {
    PipelineConfig cfg = load_config(g);
    Pipeline pipe(cfg, cfg.seed);
    auto [ht, wt] = pipe.token_grid();
    const int n = ht * wt;

    std::vector<double> ks, macs;
    printf("%8s %16s %16s\n", "K", "scoremix_macs", "total_macs");
    for (int k : sweep) {
        if (k > n) throw ValidationError("profile: sweep value " + std::to_string(k) +
                                         " exceeds token count " + std::to_string(n));
        OpCountReport report = count_ops(pipe.op_config(n, k));
        printf("%8d %16llu %16llu\n", k,
               static_cast<unsigned long long>(report.stage_macs("sc_attn_scoremix")),
               static_cast<unsigned long long>(report.total_macs()));
        ks.push_back(k);
        macs.push_back(static_cast<double>(report.stage_macs("sc_attn_scoremix")));
    }
    double slope = 0.0;
    if (loglog_slope(ks, macs, &slope))
        printf("attention-stage log-log slope: %.3f\n", slope);
    else
        printf("attention-stage log-log slope: undefined (need >= 2 distinct K values)\n");

    if (dynamic_samples > 0) {
        Rng rng(cfg.seed + 99);
        double mean_sparsity = 0.0;
        for (int i = 0; i < dynamic_samples; ++i) {
            EventStream stream = synth_moving_bar(
                {static_cast<uint16_t>(cfg.frame_w * 2), static_cast<uint16_t>(cfg.frame_h * 2)},
                100.0 + 400.0 * rng.uniform(), 0.1, 20.0 + 30.0 * rng.uniform(), rng.next_u64());
            InferenceResult res = pipe.infer(stream);
            mean_sparsity += 1.0 - static_cast<double>(res.decision.k) / res.decision.mask.size();
        }
        printf("dynamic policy over %d samples: mean sparsity %.1f%%\n", dynamic_samples,
               100.0 * mean_sparsity / dynamic_samples);
    }
    return 0;
}

int cmd_variance(const GlobalOpts& g, const std::string& dataset, const std::string& checkpoint) {
    PipelineConfig cfg = load_config(g);
    Pipeline pipe(cfg, cfg.seed);
    if (!checkpoint.empty()) pipe.load_checkpoint(read_file(checkpoint));

    std::vector<std::string> files;
    if (fs::is_directory(dataset)) {
        for (const auto& entry : fs::directory_iterator(dataset))
            if (entry.is_regular_file()) files.push_back(entry.path().string());
        std::sort(files.begin(), files.end());
    } else if (fs::exists(dataset)) {
        files.push_back(dataset);
    }
    if (files.empty()) throw ValidationError("variance: no samples found at " + dataset);

    double timing_var = 0.0, interval_var = 0.0;
    for (const auto& f : files) {
        InferenceResult res = pipe.infer(load_events(cfg, f));
        const auto& cues = res.cues;
        const size_t n = cues.tokens();
        double mf = 0.0, mi = 0.0;
        for (size_t i = 0; i < n; ++i) {
            mf += cues.t_first[i];
            mi += cues.t_interval[i];
        }
        mf /= n;
        mi /= n;
        double vf = 0.0, vi = 0.0;
        for (size_t i = 0; i < n; ++i) {
            vf += (cues.t_first[i] - mf) * (cues.t_first[i] - mf);
            vi += (cues.t_interval[i] - mi) * (cues.t_interval[i] - mi);
        }
        timing_var += vf / n;
        interval_var += vi / n;
    }
    printf("timing_variance=%.6f interval_variance=%.6f over %zu samples\n",
           timing_var / files.size(), interval_var / files.size(), files.size());
    return 0;
}

int cmd_dump_maps(const GlobalOpts& g, const std::string& input) {
    PipelineConfig cfg = load_config(g);
    Pipeline pipe(cfg, cfg.seed);
    InferenceResult res = pipe.infer(load_events(cfg, input));

    write_pgm(out_path(g, "rate_map.pgm"), quantize_gray(res.rate_map), res.grid_w, res.grid_h);
    write_pgm(out_path(g, "attention_map.pgm"), quantize_gray(res.attention_mass), res.grid_w,
              res.grid_h);
    std::vector<uint8_t> mask(res.selected_map.size());
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = res.selected_map[i] ? 255 : 0;
    write_pgm(out_path(g, "selection_mask.pgm"), mask, res.grid_w, res.grid_h);

    std::string csv = "t,spike_count\n";
    for (size_t t = 0; t < res.spikes_per_step.size(); ++t)
        csv += std::to_string(t) + "," + std::to_string(res.spikes_per_step[t]) + "\n";
    write_text_file(out_path(g, "spike_counts.csv"), csv);
    std::cout << "wrote rate_map.pgm, attention_map.pgm, selection_mask.pgm, spike_counts.csv to "
              << g.out_dir << "\n";
    return 0;
}

int cmd_selftest(const std::string& filter) {
    const auto results = run_selftests(filter);
    if (results.empty()) {
        std::cerr << "no checks match filter \"" << filter << "\"\n";
        return 3;
    }
    bool all_ok = true;
    for (const auto& r : results) {
        printf("[%s] %-28s (%.2fs)%s%s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
               r.detail.empty() ? "" : " ", r.detail.c_str());
        all_ok &= r.passed;
    }
    return all_ok ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SPARTA spiking-attention pipeline"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_option("--config", g.config_path, "pipeline config file (key=value lines)");
    app.add_option("--out", g.out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--fixed-k", g.fixed_k, "override the dynamic sparsity policy with a fixed K");

    int width = 64, height = 64;
    double velocity = 200.0, duration = 0.5, noise = 50.0;
    std::string synth_name = "synth.spk";
    auto* synth = app.add_subcommand("synth", "write a synthetic moving-bar event file");
    synth->add_option("--width", width);
    synth->add_option("--height", height);
    synth->add_option("--velocity", velocity, "bar speed in px/s");
    synth->add_option("--duration", duration, "seconds");
    synth->add_option("--noise-rate", noise, "events/pixel/second");
    synth->add_option("--name", synth_name, "output file name");

    std::string encode_input;
    auto* encode = app.add_subcommand("encode", "bin an event file into spike frames");
    encode->add_option("input", encode_input)->required();

    std::string infer_input, infer_ckpt;
    auto* infer = app.add_subcommand("infer", "run the pipeline on an event file");
    infer->add_option("input", infer_input)->required();
    infer->add_option("--checkpoint", infer_ckpt, "load parameters before inference");

    auto* train = app.add_subcommand("train", "train on the configured synthetic task");

    std::vector<int> sweep = {16, 32, 64, 128};
    int dynamic_samples = 0;
    auto* profile = app.add_subcommand("profile", "MAC accounting and K^2 scaling report");
    profile->add_option("--k-sweep", sweep, "K values to sweep");
    profile->add_option("--dynamic-samples", dynamic_samples,
                        "also report mean dynamic sparsity over N synthetic samples");

    std::string var_dataset, var_ckpt;
    auto* variance = app.add_subcommand("variance", "first-spike / interval variance report");
    variance->add_option("dataset", var_dataset, "event file or directory of event files")
        ->required();
    variance->add_option("--checkpoint", var_ckpt);

    std::string maps_input;
    auto* maps = app.add_subcommand("dump-maps", "write rate/attention/mask PGMs and spike curve");
    maps->add_option("input", maps_input)->required();

    std::string filter;
    auto* selftest = app.add_subcommand("selftest", "run the fast invariant suite");
    selftest->add_option("--filter", filter, "run only checks with this name prefix");

    CLI11_PARSE(app, argc, argv);
    g.seed_set = seed_opt->count() > 0;

    try {
        if (synth->parsed()) return cmd_synth(g, width, height, velocity, duration, noise, synth_name);
        if (encode->parsed()) return cmd_encode(g, encode_input);
        if (infer->parsed()) return cmd_infer(g, infer_input, infer_ckpt);
        if (train->parsed()) return cmd_train(g);
        if (profile->parsed()) return cmd_profile(g, sweep, dynamic_samples);
        if (variance->parsed()) return cmd_variance(g, var_dataset, var_ckpt);
        if (maps->parsed()) return cmd_dump_maps(g, maps_input);
        if (selftest->parsed()) return cmd_selftest(filter);
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
