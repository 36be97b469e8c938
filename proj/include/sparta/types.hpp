#pragma once

#include <cstdint>
#include <vector>

#include "sparta/errors.hpp"

namespace sparta {

// Dense real tensor, shape (T, C, H, W), row-major with W fastest.
struct Tensor {
    int t = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int t_, int c_, int h_, int w_)
        : t(t_), c(c_), h(h_), w(w_),
          data(static_cast<size_t>(t_) * c_ * h_ * w_, 0.0) {}

    size_t size() const { return data.size(); }
    size_t idx(int ti, int ci, int yi, int xi) const {
        return ((static_cast<size_t>(ti) * c + ci) * h + yi) * w + xi;
    }
    double& at(int ti, int ci, int yi, int xi) { return data[idx(ti, ci, yi, xi)]; }
    double at(int ti, int ci, int yi, int xi) const { return data[idx(ti, ci, yi, xi)]; }
};

// Binary spike activations, shape (T, C, H, W). Values are 0 or 1.
struct SpikeTensor {
    int t = 0, c = 0, h = 0, w = 0;
    std::vector<uint8_t> data;

    SpikeTensor() = default;
    SpikeTensor(int t_, int c_, int h_, int w_)
        : t(t_), c(c_), h(h_), w(w_),
          data(static_cast<size_t>(t_) * c_ * h_ * w_, 0) {}

    size_t size() const { return data.size(); }
    size_t idx(int ti, int ci, int yi, int xi) const {
        return ((static_cast<size_t>(ti) * c + ci) * h + yi) * w + xi;
    }
    uint8_t& at(int ti, int ci, int yi, int xi) { return data[idx(ti, ci, yi, xi)]; }
    uint8_t at(int ti, int ci, int yi, int xi) const { return data[idx(ti, ci, yi, xi)]; }

    uint64_t count_spikes() const {
        uint64_t n = 0;
        for (uint8_t v : data) n += v;
        return n;
    }
};

// Token features, N rows by D columns, plus the grid the tokens came from.
// After patch grouping the grid geometry no longer applies; ht/wt are kept
// only for operations that need spatial layout (DoG scoring, map dumps).
struct TokenGrid {
    int n = 0, d = 0;
    int ht = 0, wt = 0;
    std::vector<double> features; // n * d, row-major

    TokenGrid() = default;
    TokenGrid(int n_, int d_, int ht_ = 0, int wt_ = 0)
        : n(n_), d(d_), ht(ht_), wt(wt_),
          features(static_cast<size_t>(n_) * d_, 0.0) {}

    double* row(int i) { return features.data() + static_cast<size_t>(i) * d; }
    const double* row(int i) const { return features.data() + static_cast<size_t>(i) * d; }
};

// Per-token temporal cues. Sentinels: a silent token has t_first = 1.0,
// t_interval = T, t_burst = 0, f_rate = 0, so it ranks lowest on every cue.
struct SpikeInfo {
    int timesteps = 0; // T used when the cues were extracted
    std::vector<double> t_first;    // normalized first-spike step in [0, 1]
    std::vector<double> t_interval; // mean inter-spike interval in steps, [1, T]
    std::vector<double> t_burst;    // fraction of ISIs <= 2 steps, [0, 1]
    std::vector<double> f_rate;     // spiking steps / T, [0, 1]

    size_t tokens() const { return f_rate.size(); }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

} // namespace sparta
