#pragma once

#include <cmath>
#include <vector>

#include "sparta/types.hpp"

namespace sparta {

// Two-layer perceptron applied independently per row. hidden_tanh = false
// makes it affine end to end, which the tests use to express fixed linear
// fusions exactly.
struct Mlp {
    int d_in = 0, hidden = 0, d_out = 0;
    bool hidden_tanh = true;
    std::vector<double> w1, b1; // hidden x d_in, hidden
    std::vector<double> w2, b2; // d_out x hidden, d_out

    static Mlp zeros(int d_in, int hidden, int d_out, bool hidden_tanh = true) {
        Mlp m;
        m.d_in = d_in;
        m.hidden = hidden;
        m.d_out = d_out;
        m.hidden_tanh = hidden_tanh;
        m.w1.assign(static_cast<size_t>(hidden) * d_in, 0.0);
        m.b1.assign(hidden, 0.0);
        m.w2.assign(static_cast<size_t>(d_out) * hidden, 0.0);
        m.b2.assign(d_out, 0.0);
        return m;
    }

    void apply(const double* in, double* out) const {
        std::vector<double> h(hidden);
        for (int i = 0; i < hidden; ++i) {
            double acc = b1[i];
            for (int j = 0; j < d_in; ++j) acc += w1[static_cast<size_t>(i) * d_in + j] * in[j];
            h[i] = hidden_tanh ? std::tanh(acc) : acc;
        }
        for (int o = 0; o < d_out; ++o) {
            double acc = b2[o];
            for (int i = 0; i < hidden; ++i) acc += w2[static_cast<size_t>(o) * hidden + i] * h[i];
            out[o] = acc;
        }
    }

    double apply1(const double* in) const {
        require(d_out == 1, "Mlp::apply1 needs a scalar output");
        double out;
        apply(in, &out);
        return out;
    }
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

} // namespace sparta
