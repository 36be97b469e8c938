#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sparta/errors.hpp"

namespace sparta::autodiff {

// Minimal reverse-mode tape over scalars. Each node remembers up to two
// parents with their local partials; backward() is one reverse sweep. Sized
// for desk-scale graphs (a few hundred thousand nodes per sample).
class Tape {
public:
    struct Node {
        double val;
        double grad;
        int32_t a, b;
        double da, db;
    };

    explicit Tape(size_t reserve = 1 << 16) { nodes_.reserve(reserve); }

    int push(double val, int32_t a = -1, double da = 0.0, int32_t b = -1, double db = 0.0) {
        nodes_.push_back({val, 0.0, a, b, da, db});
        return static_cast<int>(nodes_.size()) - 1;
    }

    double val(int i) const { return nodes_[i].val; }
    double grad(int i) const { return nodes_[i].grad; }
    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    void backward(int root) {
        for (auto& n : nodes_) n.grad = 0.0;
        nodes_[root].grad = 1.0;
        for (int i = root; i >= 0; --i) {
            const Node& n = nodes_[i];
            if (n.grad == 0.0) continue;
            if (n.a >= 0) nodes_[n.a].grad += n.da * n.grad;
            if (n.b >= 0) nodes_[n.b].grad += n.db * n.grad;
        }
    }

private:
    std::vector<Node> nodes_;
};

struct Var {
    Tape* tape = nullptr;
    int i = -1;

    double val() const { return tape->val(i); }
    double grad() const { return tape->grad(i); }
};

inline Var leaf(Tape& t, double v) { return {&t, t.push(v)}; }
inline Var constant(Tape& t, double v) { return {&t, t.push(v)}; }

inline Var operator+(Var x, Var y) { return {x.tape, x.tape->push(x.val() + y.val(), x.i, 1.0, y.i, 1.0)}; }
inline Var operator-(Var x, Var y) { return {x.tape, x.tape->push(x.val() - y.val(), x.i, 1.0, y.i, -1.0)}; }
inline Var operator*(Var x, Var y) {
    return {x.tape, x.tape->push(x.val() * y.val(), x.i, y.val(), y.i, x.val())};
}
inline Var operator/(Var x, Var y) {
    const double inv = 1.0 / y.val();
    return {x.tape, x.tape->push(x.val() * inv, x.i, inv, y.i, -x.val() * inv * inv)};
}

inline Var operator+(Var x, double c) { return {x.tape, x.tape->push(x.val() + c, x.i, 1.0)}; }
inline Var operator+(double c, Var x) { return x + c; }
inline Var operator-(Var x, double c) { return x + (-c); }
inline Var operator-(double c, Var x) { return {x.tape, x.tape->push(c - x.val(), x.i, -1.0)}; }
inline Var operator*(Var x, double c) { return {x.tape, x.tape->push(x.val() * c, x.i, c)}; }
inline Var operator*(double c, Var x) { return x * c; }
inline Var operator/(Var x, double c) { return x * (1.0 / c); }
inline Var operator/(double c, Var x) {
    const double inv = 1.0 / x.val();
    return {x.tape, x.tape->push(c * inv, x.i, -c * inv * inv)};
}
inline Var operator-(Var x) { return {x.tape, x.tape->push(-x.val(), x.i, -1.0)}; }

inline Var exp(Var x) {
    const double e = std::exp(x.val());
    return {x.tape, x.tape->push(e, x.i, e)};
}
inline Var log(Var x) { return {x.tape, x.tape->push(std::log(x.val()), x.i, 1.0 / x.val())}; }
inline Var tanh(Var x) {
    const double t = std::tanh(x.val());
    return {x.tape, x.tape->push(t, x.i, 1.0 - t * t)};
}
inline Var logistic(Var x) {
    const double s = 1.0 / (1.0 + std::exp(-x.val()));
    return {x.tape, x.tape->push(s, x.i, s * (1.0 - s))};
}
inline Var softplus(Var x) {
    const double v = x.val() > 30.0 ? x.val() : std::log1p(std::exp(x.val()));
    const double s = 1.0 / (1.0 + std::exp(-x.val()));
    return {x.tape, x.tape->push(v, x.i, s)};
}
inline Var square(Var x) { return x * x; }

// Value passes through, gradient stops here.
inline Var detach(Var x) { return {x.tape, x.tape->push(x.val())}; }

} // namespace sparta::autodiff
