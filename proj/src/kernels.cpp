#include "sparta/kernels.hpp"

#include <cmath>
#include <cstring>

namespace sparta::kernels {

namespace {

// One query row of multi-head attention. Both execution paths call this, so
// per-row arithmetic (and therefore rounding) is identical; the paths differ
// only in how rows are scheduled.
void attention_row(const AttentionArgs& a, const double* q, const double* k,
                   const double* v, int i, double* concat_row, double* mass_out,
                   uint64_t* macs, double* logits, double* probs) {
    const int dh = a.d / a.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const double qs = a.query_scale ? a.query_scale[i] : 1.0;
    uint64_t m = 0;
    for (int head = 0; head < a.heads; ++head) {
        const double* qi = q + static_cast<size_t>(i) * a.d + head * dh;
        double max_logit = -1e300;
        for (int j = 0; j < a.n; ++j) {
            const double* kj = k + static_cast<size_t>(j) * a.d + head * dh;
            double dot = 0.0;
            for (int e = 0; e < dh; ++e) dot += qi[e] * kj[e];
            double logit = dot * inv_sqrt * qs;
            if (a.key_bias) logit += a.key_bias[j];
            logits[j] = logit;
            if (logit > max_logit) max_logit = logit;
            m += static_cast<uint64_t>(dh) + 2;
        }
        double sum = 0.0;
        for (int j = 0; j < a.n; ++j) {
            probs[j] = std::exp(logits[j] - max_logit);
            sum += probs[j];
        }
        const double inv_sum = 1.0 / sum;
        double* dst = concat_row + head * dh;
        for (int e = 0; e < dh; ++e) dst[e] = 0.0;
        for (int j = 0; j < a.n; ++j) {
            const double p = probs[j] * inv_sum;
            const double* vj = v + static_cast<size_t>(j) * a.d + head * dh;
            for (int e = 0; e < dh; ++e) dst[e] += p * vj[e];
            if (mass_out) mass_out[j] += p;
            m += static_cast<uint64_t>(dh) + 1;
        }
    }
    if (macs) *macs += m;
}

} // namespace

// ---------------------------------------------------------------------------
// Serial reference implementations.
// ---------------------------------------------------------------------------

namespace serial {

void lif_step(double* v, const double* x, const double* tau_inv, const double* v_th,
              bool hard_reset, double v_reset, uint8_t* spikes, int channels, int plane) {
    for (int c = 0; c < channels; ++c) {
        const double ti = tau_inv[c];
        const double th = v_th[c];
        const size_t base = static_cast<size_t>(c) * plane;
        for (int e = 0; e < plane; ++e) {
            const size_t k = base + e;
            double vn = v[k] + (x[k] - v[k]) * ti;
            if (vn >= th) {
                spikes[k] = 1;
                v[k] = hard_reset ? v_reset : vn - th;
            } else {
                spikes[k] = 0;
                v[k] = vn;
            }
        }
    }
}

void conv1x1(const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w) {
    const size_t plane = static_cast<size_t>(h) * w;
    for (int ti = 0; ti < t; ++ti) {
        const double* src = in + static_cast<size_t>(ti) * c_in * plane;
        double* dst = out + static_cast<size_t>(ti) * c_out * plane;
        for (int co = 0; co < c_out; ++co) {
            for (size_t e = 0; e < plane; ++e) {
                double acc = bias ? bias[co] : 0.0;
                for (int ci = 0; ci < c_in; ++ci)
                    acc += weight[static_cast<size_t>(co) * c_in + ci] * src[ci * plane + e];
                dst[co * plane + e] = acc;
            }
        }
    }
}

void conv3x3(const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w, int stride) {
    const int ho = conv3x3_out_dim(h, stride);
    const int wo = conv3x3_out_dim(w, stride);
    const size_t plane_in = static_cast<size_t>(h) * w;
    const size_t plane_out = static_cast<size_t>(ho) * wo;
    for (int ti = 0; ti < t; ++ti) {
        const double* src = in + static_cast<size_t>(ti) * c_in * plane_in;
        double* dst = out + static_cast<size_t>(ti) * c_out * plane_out;
        for (int co = 0; co < c_out; ++co) {
            for (int yo = 0; yo < ho; ++yo) {
                for (int xo = 0; xo < wo; ++xo) {
                    double acc = bias ? bias[co] : 0.0;
                    for (int ci = 0; ci < c_in; ++ci) {
                        const double* wk = weight + (static_cast<size_t>(co) * c_in + ci) * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int y = yo * stride + ky - 1;
                            if (y < 0 || y >= h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int x = xo * stride + kx - 1;
                                if (x < 0 || x >= w) continue;
                                acc += wk[ky * 3 + kx] * src[ci * plane_in + y * w + x];
                            }
                        }
                    }
                    dst[co * plane_out + static_cast<size_t>(yo) * wo + xo] = acc;
                }
            }
        }
    }
}

void linear(const double* in, double* out, const double* weight, const double* bias,
            int rows, int d_in, int d_out, uint64_t* macs) {
    for (int r = 0; r < rows; ++r) {
        const double* src = in + static_cast<size_t>(r) * d_in;
        double* dst = out + static_cast<size_t>(r) * d_out;
        for (int o = 0; o < d_out; ++o) {
            double acc = bias ? bias[o] : 0.0;
            const double* wr = weight + static_cast<size_t>(o) * d_in;
            for (int e = 0; e < d_in; ++e) acc += wr[e] * src[e];
            dst[o] = acc;
        }
    }
    if (macs) *macs += static_cast<uint64_t>(rows) * d_in * d_out;
}

void conv5x5_grid(const double* in, double* out, const double* kernel, int h, int w) {
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int ky = 0; ky < 5; ++ky) {
                const int yy = y + ky - 2;
                if (yy < 0 || yy >= h) continue;
                for (int kx = 0; kx < 5; ++kx) {
                    const int xx = x + kx - 2;
                    if (xx < 0 || xx >= w) continue;
                    acc += kernel[ky * 5 + kx] * in[yy * w + xx];
                }
            }
            out[y * w + x] = acc;
        }
    }
}

void attention(const AttentionArgs& a) {
    const size_t nd = static_cast<size_t>(a.n) * a.d;
    std::vector<double> q(nd), k(nd), v(nd), concat(nd);
    linear(a.x, q.data(), a.wq, nullptr, a.n, a.d, a.d);
    linear(a.x, k.data(), a.wk, nullptr, a.n, a.d, a.d);
    linear(a.x, v.data(), a.wv, nullptr, a.n, a.d, a.d);
    std::vector<double> logits(a.n), probs(a.n);
    for (int i = 0; i < a.n; ++i)
        attention_row(a, q.data(), k.data(), v.data(), i,
                      concat.data() + static_cast<size_t>(i) * a.d, a.mass_out,
                      a.scoremix_macs, logits.data(), probs.data());
    linear(concat.data(), a.out, a.wo, nullptr, a.n, a.d, a.d);
}

} // namespace serial

// ---------------------------------------------------------------------------
// OpenMP implementations. Parallelism is always over independent output
// elements; no reductions, so results match the serial path bit for bit.
// ---------------------------------------------------------------------------

namespace omp {

void lif_step(double* v, const double* x, const double* tau_inv, const double* v_th,
              bool hard_reset, double v_reset, uint8_t* spikes, int channels, int plane) {
    const size_t total = static_cast<size_t>(channels) * plane;
#pragma omp parallel for schedule(static)
    for (size_t k = 0; k < total; ++k) {
        const int c = static_cast<int>(k / plane);
        double vn = v[k] + (x[k] - v[k]) * tau_inv[c];
        if (vn >= v_th[c]) {
            spikes[k] = 1;
            v[k] = hard_reset ? v_reset : vn - v_th[c];
        } else {
            spikes[k] = 0;
            v[k] = vn;
        }
    }
}

void conv1x1(const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w) {
    const size_t plane = static_cast<size_t>(h) * w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int ti = 0; ti < t; ++ti) {
        for (int co = 0; co < c_out; ++co) {
            const double* src = in + static_cast<size_t>(ti) * c_in * plane;
            double* dst = out + static_cast<size_t>(ti) * c_out * plane + co * plane;
            for (size_t e = 0; e < plane; ++e) {
                double acc = bias ? bias[co] : 0.0;
                for (int ci = 0; ci < c_in; ++ci)
                    acc += weight[static_cast<size_t>(co) * c_in + ci] * src[ci * plane + e];
                dst[e] = acc;
            }
        }
    }
}

void conv3x3(const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w, int stride) {
    const int ho = conv3x3_out_dim(h, stride);
    const int wo = conv3x3_out_dim(w, stride);
    const size_t plane_in = static_cast<size_t>(h) * w;
    const size_t plane_out = static_cast<size_t>(ho) * wo;
#pragma omp parallel for collapse(3) schedule(static)
    for (int ti = 0; ti < t; ++ti) {
        for (int co = 0; co < c_out; ++co) {
            for (int yo = 0; yo < ho; ++yo) {
                const double* src = in + static_cast<size_t>(ti) * c_in * plane_in;
                double* dst = out + static_cast<size_t>(ti) * c_out * plane_out;
                for (int xo = 0; xo < wo; ++xo) {
                    double acc = bias ? bias[co] : 0.0;
                    for (int ci = 0; ci < c_in; ++ci) {
                        const double* wk = weight + (static_cast<size_t>(co) * c_in + ci) * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int y = yo * stride + ky - 1;
                            if (y < 0 || y >= h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int x = xo * stride + kx - 1;
                                if (x < 0 || x >= w) continue;
                                acc += wk[ky * 3 + kx] * src[ci * plane_in + y * w + x];
                            }
                        }
                    }
                    dst[co * plane_out + static_cast<size_t>(yo) * wo + xo] = acc;
                }
            }
        }
    }
}

void linear(const double* in, double* out, const double* weight, const double* bias,
            int rows, int d_in, int d_out, uint64_t* macs) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        const double* src = in + static_cast<size_t>(r) * d_in;
        double* dst = out + static_cast<size_t>(r) * d_out;
        for (int o = 0; o < d_out; ++o) {
            double acc = bias ? bias[o] : 0.0;
            const double* wr = weight + static_cast<size_t>(o) * d_in;
            for (int e = 0; e < d_in; ++e) acc += wr[e] * src[e];
            dst[o] = acc;
        }
    }
    if (macs) *macs += static_cast<uint64_t>(rows) * d_in * d_out;
}

void conv5x5_grid(const double* in, double* out, const double* kernel, int h, int w) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int ky = 0; ky < 5; ++ky) {
                const int yy = y + ky - 2;
                if (yy < 0 || yy >= h) continue;
                for (int kx = 0; kx < 5; ++kx) {
                    const int xx = x + kx - 2;
                    if (xx < 0 || xx >= w) continue;
                    acc += kernel[ky * 5 + kx] * in[yy * w + xx];
                }
            }
            out[y * w + x] = acc;
        }
    }
}

void attention(const AttentionArgs& a) {
    const size_t nd = static_cast<size_t>(a.n) * a.d;
    std::vector<double> q(nd), k(nd), v(nd), concat(nd);
    linear(a.x, q.data(), a.wq, nullptr, a.n, a.d, a.d);
    linear(a.x, k.data(), a.wk, nullptr, a.n, a.d, a.d);
    linear(a.x, v.data(), a.wv, nullptr, a.n, a.d, a.d);
#pragma omp parallel
    {
        std::vector<double> logits(a.n), probs(a.n);
#pragma omp for schedule(static)
        for (int i = 0; i < a.n; ++i)
            attention_row(a, q.data(), k.data(), v.data(), i,
                          concat.data() + static_cast<size_t>(i) * a.d, nullptr,
                          nullptr, logits.data(), probs.data());
    }
    linear(concat.data(), a.out, a.wo, nullptr, a.n, a.d, a.d);
}

} // namespace omp

// ---------------------------------------------------------------------------
// Dispatch.
// ---------------------------------------------------------------------------

void lif_step(Exec e, double* v, const double* x, const double* tau_inv, const double* v_th,
              bool hard_reset, double v_reset, uint8_t* spikes, int channels, int plane) {
    if (e == Exec::parallel)
        omp::lif_step(v, x, tau_inv, v_th, hard_reset, v_reset, spikes, channels, plane);
    else
        serial::lif_step(v, x, tau_inv, v_th, hard_reset, v_reset, spikes, channels, plane);
}

void conv1x1(Exec e, const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w) {
    if (e == Exec::parallel)
        omp::conv1x1(in, out, weight, bias, t, c_in, c_out, h, w);
    else
        serial::conv1x1(in, out, weight, bias, t, c_in, c_out, h, w);
}

void conv3x3(Exec e, const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w, int stride) {
    if (e == Exec::parallel)
        omp::conv3x3(in, out, weight, bias, t, c_in, c_out, h, w, stride);
    else
        serial::conv3x3(in, out, weight, bias, t, c_in, c_out, h, w, stride);
}

void linear(Exec e, const double* in, double* out, const double* weight, const double* bias,
            int rows, int d_in, int d_out, uint64_t* macs) {
    if (e == Exec::parallel && !macs)
        omp::linear(in, out, weight, bias, rows, d_in, d_out, nullptr);
    else
        serial::linear(in, out, weight, bias, rows, d_in, d_out, macs);
}

void conv5x5_grid(Exec e, const double* in, double* out, const double* kernel, int h, int w) {
    if (e == Exec::parallel)
        omp::conv5x5_grid(in, out, kernel, h, w);
    else
        serial::conv5x5_grid(in, out, kernel, h, w);
}

void attention(Exec e, const AttentionArgs& args) {
    // Mass accumulation and multiply counting write shared state per key; the
    // serial path keeps those exact.
    if (e == Exec::parallel && !args.mass_out && !args.scoremix_macs)
        omp::attention(args);
    else
        serial::attention(args);
}

} // namespace sparta::kernels
