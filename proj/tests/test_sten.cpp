#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparta/rng.hpp"
#include "sparta/sten.hpp"

using namespace sparta;

namespace {

// One-token tensor spiking at the given steps.
SpikeTensor train_of(const std::vector<int>& steps, int t_total) {
    SpikeTensor s(t_total, 1, 1, 1);
    for (int t : steps) s.at(t, 0, 0, 0) = 1;
    return s;
}

SpikeTensor random_spikes(int t, int c, int h, int w, double density, uint64_t seed) {
    SpikeTensor s(t, c, h, w);
    Rng rng(seed);
    for (auto& v : s.data) v = rng.bernoulli(density) ? 1 : 0;
    return s;
}

} // namespace

TEST_CASE("cues for the 2-5-8 spike train") {
    SpikeInfo info = extract_cues(train_of({2, 5, 8}, 10), 1, 1);
    CHECK(info.t_first[0] == doctest::Approx(0.2));
    CHECK(info.t_interval[0] == doctest::Approx(3.0));
    CHECK(info.t_burst[0] == doctest::Approx(0.0));
    CHECK(info.f_rate[0] == doctest::Approx(0.3));
}

TEST_CASE("silent token gets sentinels") {
    SpikeInfo info = extract_cues(train_of({}, 10), 1, 1);
    CHECK(info.t_first[0] == 1.0);
    CHECK(info.t_interval[0] == 10.0);
    CHECK(info.t_burst[0] == 0.0);
    CHECK(info.f_rate[0] == 0.0);
}

TEST_CASE("saturated token pins every cue") {
    SpikeInfo info = extract_cues(train_of({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 10), 1, 1);
    CHECK(info.t_first[0] == 0.0);
    CHECK(info.t_interval[0] == 1.0);
    CHECK(info.t_burst[0] == 1.0);
    CHECK(info.f_rate[0] == 1.0);
}

TEST_CASE("token spikes when any cell in the patch spikes") {
    SpikeTensor s(4, 2, 2, 2);
    s.at(1, 0, 0, 0) = 1;
    s.at(3, 1, 1, 1) = 1;
    SpikeInfo info = extract_cues(s, 2, 2);
    REQUIRE(info.tokens() == 1);
    CHECK(info.f_rate[0] == doctest::Approx(0.5));
    CHECK(info.t_first[0] == doctest::Approx(0.25));
}

TEST_CASE("cue ranges hold on random tensors") {
    for (uint64_t seed = 0; seed < 6; ++seed) {
        SpikeTensor s = random_spikes(12, 3, 4, 4, 0.15 * (seed + 1) / 6.0 + 0.05, seed);
        SpikeInfo info = extract_cues(s, 2, 2);
        for (size_t i = 0; i < info.tokens(); ++i) {
            CHECK(info.t_first[i] >= 0.0);
            CHECK(info.t_first[i] <= 1.0);
            CHECK(info.t_interval[i] >= 1.0);
            CHECK(info.t_interval[i] <= 12.0);
            CHECK(info.f_rate[i] >= 0.0);
            CHECK(info.f_rate[i] <= 1.0);
            CHECK((info.f_rate[i] == 0.0) == (info.t_first[i] == 1.0));
        }
    }
}

TEST_CASE("cue extraction is permutation-equivariant over tokens") {
    SpikeTensor s = random_spikes(8, 2, 4, 4, 0.2, 77);
    SpikeInfo info = extract_cues(s, 2, 2, kernels::Exec::serial);
    // Swap the two top patches in space, cues must swap identically.
    SpikeTensor swapped = s;
    for (int t = 0; t < s.t; ++t)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x)
                    std::swap(swapped.at(t, c, y, x), swapped.at(t, c, y, x + 2));
    SpikeInfo info2 = extract_cues(swapped, 2, 2, kernels::Exec::serial);
    CHECK(info2.f_rate[0] == info.f_rate[1]);
    CHECK(info2.f_rate[1] == info.f_rate[0]);
    CHECK(info2.t_first[0] == info.t_first[1]);
}

TEST_CASE("cues ignore channel permutations") {
    SpikeTensor s = random_spikes(8, 3, 2, 2, 0.2, 78);
    SpikeTensor p(8, 3, 2, 2);
    for (int t = 0; t < 8; ++t)
        for (int c = 0; c < 3; ++c)
            for (int e = 0; e < 4; ++e)
                p.data[(t * 3 + (c + 1) % 3) * 4 + e] = s.data[(t * 3 + c) * 4 + e];
    CHECK(extract_cues(s, 1, 1).f_rate == extract_cues(p, 1, 1).f_rate);
}

TEST_CASE("indivisible patch is rejected") {
    SpikeTensor s(2, 1, 4, 4);
    CHECK_THROWS_AS(extract_cues(s, 3, 2), ValidationError);
}

TEST_CASE("all-zero spikes with zero kernels encode to zero") {
    StenConfig cfg;
    cfg.stages = 1;
    cfg.stage_channels = 4;
    cfg.d1 = 2;
    cfg.d2 = 2;
    cfg.d3 = 2;
    StenParams p = init_sten(cfg, 2, 2.0, 0.3, 1.0, 0.2, ResetMode::soft, 9);
    SpikeTensor zeros(6, 2, 8, 8);
    EncodeResult enc = encode_multiscale(zeros, p, kernels::Exec::serial);
    for (double v : enc.features.features) CHECK(v == 0.0);
    CHECK(enc.stage_output.count_spikes() == 0);
}

TEST_CASE("identity 1x1 branch alone reproduces the time-mean map") {
    StenConfig cfg;
    cfg.stages = 0;
    cfg.d1 = 1;
    cfg.d2 = 0;
    cfg.d3 = 0;
    StenParams p = init_sten(cfg, 1, 2.0, 0.0, 1.0, 0.0, ResetMode::soft, 9);
    p.b1_w = {1.0};
    p.b1_b = {0.0};
    SpikeTensor s = random_spikes(10, 1, 4, 4, 0.3, 55);
    EncodeResult enc = encode_multiscale(s, p, kernels::Exec::serial);
    REQUIRE(enc.features.n == 16);
    for (int tok = 0; tok < 16; ++tok) {
        double mean = 0.0;
        for (int t = 0; t < 10; ++t) mean += s.data[t * 16 + tok];
        CHECK(enc.features.row(tok)[0] == doctest::Approx(mean / 10.0).epsilon(1e-12));
    }
}

TEST_CASE("pooled branch passes a constant through unchanged") {
    StenConfig cfg;
    cfg.stages = 0;
    cfg.d1 = 0;
    cfg.d2 = 0;
    cfg.d3 = 3;
    StenParams p = init_sten(cfg, 2, 2.0, 0.0, 1.0, 0.0, ResetMode::soft, 9);
    SpikeTensor s(4, 2, 4, 4);
    for (auto& v : s.data) v = 1;
    EncodeResult enc = encode_multiscale(s, p, kernels::Exec::serial);
    for (int tok = 0; tok < enc.features.n; ++tok)
        for (int f = 0; f < 3; ++f) CHECK(enc.features.row(tok)[f] == doctest::Approx(1.0));
}

TEST_CASE("feature dim always equals the declared branch-width sum") {
    for (int stages = 0; stages <= 2; ++stages) {
        StenConfig cfg;
        cfg.stages = stages;
        cfg.stage_channels = 3;
        cfg.d1 = 2;
        cfg.d2 = 3;
        cfg.d3 = 1;
        StenParams p = init_sten(cfg, 2, 2.0, 0.3, 1.0, 0.2, ResetMode::soft, stages);
        SpikeTensor s = random_spikes(5, 2, 8, 8, 0.3, stages);
        EncodeResult enc = encode_multiscale(s, p, kernels::Exec::serial);
        CHECK(enc.features.d == cfg.feature_dim());
        CHECK(enc.features.n == enc.stage_output.h * enc.stage_output.w);
    }
}

TEST_CASE("timing gate: zero parameters halve every row") {
    TokenGrid grid(3, 2);
    std::iota(grid.features.begin(), grid.features.end(), 1.0);
    SpikeInfo cues;
    cues.timesteps = 10;
    cues.t_first = {0.1, 0.5, 1.0};
    cues.t_interval = {1, 2, 10};
    cues.t_burst = {1, 0, 0};
    cues.f_rate = {0.9, 0.2, 0.0};
    TokenGrid out = timing_attention(grid, cues, {0.0, 0.0, 0.0});
    for (size_t i = 0; i < grid.features.size(); ++i)
        CHECK(out.features[i] == doctest::Approx(0.5 * grid.features[i]));
}

TEST_CASE("timing gate is monotone in F_rate") {
    TokenGrid grid(2, 1);
    grid.features = {1.0, 1.0};
    SpikeInfo cues;
    cues.timesteps = 10;
    cues.t_first = {0.3, 0.3};
    cues.t_interval = {2, 2};
    cues.t_burst = {0.5, 0.5};
    cues.f_rate = {0.9, 0.1};
    TokenGrid out = timing_attention(grid, cues, {1.0, 0.4, 0.2});
    CHECK(out.features[0] > out.features[1]);
}

TEST_CASE("timing gate scalar check: logistic(0.3)") {
    TokenGrid grid(1, 1);
    grid.features = {1.0};
    SpikeInfo cues;
    cues.timesteps = 10;
    cues.t_first = {1.0};
    cues.t_interval = {10};
    cues.t_burst = {0};
    cues.f_rate = {0.3};
    TokenGrid out = timing_attention(grid, cues, {1.0, 0.0, 0.0});
    CHECK(out.features[0] == doctest::Approx(1.0 / (1.0 + std::exp(-0.3))));
    CHECK(out.features[0] == doctest::Approx(0.574443).epsilon(1e-5));
}

TEST_CASE("timing gate keeps shape") {
    TokenGrid grid(5, 3, 5, 1);
    SpikeInfo cues;
    cues.timesteps = 4;
    cues.t_first.assign(5, 0.5);
    cues.t_interval.assign(5, 2.0);
    cues.t_burst.assign(5, 0.0);
    cues.f_rate.assign(5, 0.5);
    TokenGrid out = timing_attention(grid, cues, {1, 1, 1});
    CHECK(out.n == 5);
    CHECK(out.d == 3);
}
