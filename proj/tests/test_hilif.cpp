#include <doctest.h>

#include <cmath>

#include "sparta/hilif.hpp"
#include "sparta/rng.hpp"
#include "sparta/config.hpp"

using namespace sparta;

namespace {

HilifParams single(double tau_inv, double v_th, ResetMode mode = ResetMode::soft) {
    HilifParams p;
    p.channels = 1;
    p.w = {std::log(tau_inv / (1.0 - tau_inv))};
    p.v_th = {v_th};
    p.reset_mode = mode;
    return p;
}

} // namespace

TEST_CASE("homogeneous degenerate init gives w=0, tau_inv=0.5") {
    HilifParams p = init_heterogeneous(4, 2.0, 0.0, 1.0, 0.0, ResetMode::soft, 1);
    for (double w : p.w) CHECK(w == doctest::Approx(0.0).epsilon(1e-12));
    for (double ti : p.tau_inv()) CHECK(ti == doctest::Approx(0.5));
    for (double th : p.v_th) CHECK(th == doctest::Approx(1.0));
}

TEST_CASE("init validates its preconditions") {
    CHECK_THROWS_AS(init_heterogeneous(0, 2.0, 0.1, 1.0, 0.1, ResetMode::soft, 1),
                    ValidationError);
    CHECK_THROWS_AS(init_heterogeneous(4, 1.0, 0.1, 1.0, 0.1, ResetMode::soft, 1),
                    ValidationError);
    CHECK_THROWS_AS(init_heterogeneous(4, 2.0, -0.1, 1.0, 0.1, ResetMode::soft, 1),
                    ValidationError);
}

TEST_CASE("paper configuration samples stay above the clamps") {
    HilifParams p = init_heterogeneous(256, 2.0, 0.3, 1.0, 0.2, ResetMode::soft, 5);
    for (double t : p.tau()) CHECK(t >= 1.01);
    for (double th : p.v_th) CHECK(th >= kVthFloor);
    for (double ti : p.tau_inv()) {
        CHECK(ti > 0.0);
        CHECK(ti < 1.0);
    }
}

TEST_CASE("one step charges without firing below threshold") {
    HilifParams p = single(0.5, 1.0);
    HilifState st(1, 1, 1);
    Tensor x(1, 1, 1, 1);
    x.data[0] = 1.0;
    uint8_t spike = 9;
    step(st, x, p, &spike, kernels::Exec::serial);
    CHECK(st.v[0] == doctest::Approx(0.5));
    CHECK(spike == 0);
}

TEST_CASE("boundary fire with soft reset lands at zero") {
    HilifParams p = single(0.5, 1.0, ResetMode::soft);
    HilifState st(1, 1, 1);
    Tensor x(1, 1, 1, 1);
    x.data[0] = 2.0; // charge to exactly 1.0
    uint8_t spike = 0;
    step(st, x, p, &spike, kernels::Exec::serial);
    CHECK(spike == 1);
    CHECK(st.v[0] == doctest::Approx(0.0));
}

TEST_CASE("hard reset parks spiking cells at v_reset") {
    HilifParams p = single(0.5, 1.0, ResetMode::hard);
    p.v_reset = 0.25;
    HilifState st(1, 1, 1);
    Tensor x(1, 1, 1, 1);
    x.data[0] = 4.0;
    uint8_t spike = 0;
    step(st, x, p, &spike, kernels::Exec::serial);
    CHECK(spike == 1);
    CHECK(st.v[0] == 0.25);
}

TEST_CASE("leak-only input decays and never fires") {
    HilifParams p = single(0.25, 1.0);
    HilifState st(1, 1, 1);
    st.v[0] = 0.9;
    Tensor x(1, 1, 1, 1);
    double prev = st.v[0];
    for (int i = 0; i < 20; ++i) {
        uint8_t spike = 0;
        step(st, x, p, &spike, kernels::Exec::serial);
        CHECK(spike == 0);
        CHECK(st.v[0] < prev);
        prev = st.v[0];
    }
    CHECK(prev < 0.01);
}

TEST_CASE("constant-drive trace follows v_t = x(1-(1-tau_inv)^t)") {
    HilifParams p = single(0.5, 10.0);
    Tensor x(6, 1, 1, 1);
    for (int t = 0; t < 6; ++t) x.data[t] = 1.0;
    Tensor trace;
    run_sequence(x, p, kernels::Exec::serial, &trace);
    CHECK(trace.data[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(trace.data[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(trace.data[2] == doctest::Approx(0.875).epsilon(1e-12));
}

TEST_CASE("all-zero input yields all-zero spikes and trace") {
    HilifParams p = init_heterogeneous(3, 2.0, 0.3, 1.0, 0.2, ResetMode::soft, 3);
    Tensor x(5, 3, 2, 2);
    Tensor trace;
    SpikeTensor spikes = run_sequence(x, p, kernels::Exec::serial, &trace);
    CHECK(spikes.count_spikes() == 0);
    for (double v : trace.data) CHECK(v == 0.0);
}

TEST_CASE("tau_inv -> 1 limit is memoryless") {
    HilifParams p = single(0.0, 100.0);
    p.w = {40.0}; // logistic(40) == 1 to double precision
    Tensor x(4, 1, 1, 1);
    x.data = {0.3, 0.9, 0.1, 0.7};
    Tensor trace;
    run_sequence(x, p, kernels::Exec::serial, &trace);
    for (int t = 0; t < 4; ++t) CHECK(trace.data[t] == doctest::Approx(x.data[t]).epsilon(1e-12));
}

TEST_CASE("soft-reset membranes stay bounded by v_th plus input magnitude") {
    HilifParams p = init_heterogeneous(4, 2.0, 0.3, 1.0, 0.2, ResetMode::soft, 11);
    Rng rng(12);
    Tensor x(50, 4, 3, 3);
    double max_in = 0.0;
    for (double& v : x.data) {
        v = 3.0 * rng.uniform();
        max_in = std::max(max_in, v);
    }
    Tensor trace;
    run_sequence(x, p, kernels::Exec::serial, &trace);
    const double max_th = *std::max_element(p.v_th.begin(), p.v_th.end());
    for (double v : trace.data) CHECK(v < max_th + max_in);
}

TEST_CASE("spike output is binary for wild inputs") {
    HilifParams p = init_heterogeneous(2, 2.0, 0.5, 1.0, 0.3, ResetMode::hard, 21);
    Rng rng(22);
    Tensor x(20, 2, 4, 4);
    for (double& v : x.data) v = rng.normal(0.0, 5.0);
    SpikeTensor spikes = run_sequence(x, p, kernels::Exec::serial);
    for (uint8_t s : spikes.data) CHECK((s == 0 || s == 1));
}

TEST_CASE("feedback: hand-computed update") {
    HilifParams p = single(0.5, 1.0);
    FeedbackState fb;
    fb.ema_activity = 0.5;
    fb.lambda = 0.9;
    fb.eta = 0.1;
    fb.r_target = 0.2;
    auto [p2, fb2] = feedback_adjust(p, 1.0, fb);
    CHECK(fb2.ema_activity == doctest::Approx(0.55).epsilon(1e-12));
    CHECK(p2.v_th[0] == doctest::Approx(1.035).epsilon(1e-12));
}

TEST_CASE("feedback: zero gain leaves thresholds, still updates ema") {
    HilifParams p = single(0.5, 1.3);
    FeedbackState fb;
    fb.eta = 0.0;
    auto [p2, fb2] = feedback_adjust(p, 0.8, fb);
    CHECK(p2.v_th[0] == 1.3);
    CHECK(fb2.ema_activity > 0.0);
}

TEST_CASE("feedback: target activity is a fixed point") {
    HilifParams p = single(0.5, 1.3);
    FeedbackState fb;
    fb.ema_activity = 0.2;
    fb.r_target = 0.2;
    auto [p2, fb2] = feedback_adjust(p, 0.2, fb);
    CHECK(fb2.ema_activity == doctest::Approx(0.2));
    CHECK(p2.v_th[0] == doctest::Approx(1.3));
}

TEST_CASE("feedback preserves threshold ordering") {
    HilifParams p = init_heterogeneous(16, 2.0, 0.3, 1.0, 0.2, ResetMode::soft, 31);
    std::vector<int> order(16);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return p.v_th[a] < p.v_th[b]; });
    FeedbackState fb;
    auto [p2, fb2] = feedback_adjust(p, 0.9, fb);
    for (int i = 1; i < 16; ++i) CHECK(p2.v_th[order[i - 1]] <= p2.v_th[order[i]]);
}

TEST_CASE("checkpoint grammar round-trips") {
    HilifParams p = init_heterogeneous(5, 2.0, 0.3, 1.0, 0.2, ResetMode::hard, 41);
    p.v_reset = 0.1;
    const std::string text = save_params(p, "hilif");
    HilifParams q = load_params(parse_kv(text), "hilif");
    CHECK(q.channels == p.channels);
    CHECK(q.reset_mode == p.reset_mode);
    CHECK(q.w == p.w);
    CHECK(q.v_th == p.v_th);
    CHECK(q.v_reset == p.v_reset);
}
