#pragma once

#include <cstdint>
#include <vector>

namespace sparta::kernels {

// Every kernel exists twice: kernels::serial is the reference used by tests
// and instrumented profiling, kernels::omp is the OpenMP version used by
// default. Both compute each output element with identical arithmetic, so
// results are bit-equal; the test suite asserts that.
enum class Exec { serial, parallel };

struct AttentionArgs {
    const double* x;  // n x d input features
    int n = 0;
    int d = 0;
    int heads = 1;
    const double* wq; // d x d, row-major [out][in]
    const double* wk;
    const double* wv;
    const double* wo;
    const double* key_bias = nullptr;    // length n, added to every logit column
    const double* query_scale = nullptr; // length n, multiplies row i's logits
    double* out = nullptr;               // n x d
    double* mass_out = nullptr;          // length n, sum over heads/queries of A[i][j]
    uint64_t* scoremix_macs = nullptr;   // instrumented multiply count (QK^T, A*V)
};

namespace serial {

void lif_step(double* v, const double* x, const double* tau_inv, const double* v_th,
              bool hard_reset, double v_reset, uint8_t* spikes, int channels, int plane);

void conv1x1(const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w);

void conv3x3(const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w, int stride);

void linear(const double* in, double* out, const double* weight, const double* bias,
            int rows, int d_in, int d_out, uint64_t* macs = nullptr);

void conv5x5_grid(const double* in, double* out, const double* kernel, int h, int w);

void attention(const AttentionArgs& args);

} // namespace serial

namespace omp {

void lif_step(double* v, const double* x, const double* tau_inv, const double* v_th,
              bool hard_reset, double v_reset, uint8_t* spikes, int channels, int plane);

void conv1x1(const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w);

void conv3x3(const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w, int stride);

void linear(const double* in, double* out, const double* weight, const double* bias,
            int rows, int d_in, int d_out, uint64_t* macs = nullptr);

void conv5x5_grid(const double* in, double* out, const double* kernel, int h, int w);

void attention(const AttentionArgs& args);

} // namespace omp

// Dispatchers. Calls carrying an instrumentation counter are routed to the
// serial path so counts are exact and race-free.
void lif_step(Exec e, double* v, const double* x, const double* tau_inv, const double* v_th,
              bool hard_reset, double v_reset, uint8_t* spikes, int channels, int plane);
void conv1x1(Exec e, const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w);
void conv3x3(Exec e, const double* in, double* out, const double* weight, const double* bias,
             int t, int c_in, int c_out, int h, int w, int stride);
void linear(Exec e, const double* in, double* out, const double* weight, const double* bias,
            int rows, int d_in, int d_out, uint64_t* macs = nullptr);
void conv5x5_grid(Exec e, const double* in, double* out, const double* kernel, int h, int w);
void attention(Exec e, const AttentionArgs& args);

// Output side length of a padded stride-s 3x3 convolution.
inline int conv3x3_out_dim(int dim, int stride) { return (dim - 1) / stride + 1; }

} // namespace sparta::kernels
