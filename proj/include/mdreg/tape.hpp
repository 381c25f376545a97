/*
Copyright 2026 the mdreg authors
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mdreg/tensor.hpp"

namespace mdreg {

// A trainable tensor with its gradient slot. The grad always has the value's
// shape and is zeroed by the optimizer between steps.
template <typename T>
struct ParamTensor {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    ParamTensor() = default;
    ParamTensor(std::string n, Tensor<T> v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

    void zero_grad() { grad.fill(T(0)); }
};

// Handle to a node on a tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Record of one forward pass. Ops append nodes holding the forward value and
// a closure that routes the node's output gradient into its parents' grads.
// backward() replays the closures in exact reverse execution order.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape<T> &)>;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad; // allocated during backward
        BackwardFn backward;
        ParamTensor<T> *param = nullptr;
        const char *op = "";
    };

    Var push(Tensor<T> value, const char *op_name) {
        Node node;
        node.value = std::move(value);
        node.op = op_name;
        nodes_.push_back(std::move(node));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    void set_backward(Var v, BackwardFn bw) {
        nodes_[static_cast<std::size_t>(v.id)].backward = std::move(bw);
    }

    // A constant or data input; its gradient is tracked but goes nowhere.
    Var input(Tensor<T> value, const char *op_name = "input") {
        return push(std::move(value), op_name);
    }

    // A parameter leaf; backward adds the node gradient into p.grad.
    Var leaf(ParamTensor<T> &p) {
        Var v = push(p.value, "leaf");
        nodes_[static_cast<std::size_t>(v.id)].param = &p;
        set_backward(v, [v](Tape<T> &t) {
            Node &self = t.nodes_[static_cast<std::size_t>(v.id)];
            const Tensor<T> &g = self.grad;
            Tensor<T> &dst = self.param->grad;
            for (std::int64_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        });
        return v;
    }

    Tensor<T> &value(Var v) { return nodes_[static_cast<std::size_t>(v.id)].value; }
    const Tensor<T> &value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    Tensor<T> &grad(Var v) { return nodes_[static_cast<std::size_t>(v.id)].grad; }
    const char *op_name(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].op; }
    int size() const { return static_cast<int>(nodes_.size()); }

    T scalar(Var v) const {
        const Tensor<T> &t = value(v);
        if (t.size() != 1) throw invalid_input("scalar() on non-scalar node");
        return t[0];
    }

    // Reverse pass from `loss` (a scalar node), seeding its gradient.
    void backward(Var loss, T seed = T(1)) {
        if (!loss.valid() || loss.id >= size())
            throw invalid_input("backward: invalid loss node");
        if (value(loss).size() != 1)
            throw invalid_input("backward: loss node is not scalar");
        for (int i = 0; i <= loss.id; ++i) {
            Node &n = nodes_[static_cast<std::size_t>(i)];
            n.grad = Tensor<T>(n.value.shape);
        }
        grad(loss)[0] = seed;
        for (int i = loss.id; i >= 0; --i) {
            Node &n = nodes_[static_cast<std::size_t>(i)];
            for (const T &g : n.grad.data)
                if (!std::isfinite(static_cast<double>(g)))
                    throw numeric_error(std::string("non-finite gradient at op '") + n.op + "'");
            if (n.backward) n.backward(*this);
        }
    }

private:
    std::vector<Node> nodes_;
};

namespace detail {

template <typename T>
void check_same_shape(const Tensor<T> &a, const Tensor<T> &b, const char *op) {
    if (a.shape != b.shape)
        throw invalid_input(std::string(op) + ": operand shapes differ");
}

} // namespace detail

// ---- elementwise and reduction tape ops -----------------------------------

template <typename T>
Var op_add(Tape<T> &t, Var a, Var b) {
    detail::check_same_shape(t.value(a), t.value(b), "add");
    Tensor<T> out = t.value(a);
    const Tensor<T> &vb = t.value(b);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    Var o = t.push(std::move(out), "add");
    t.set_backward(o, [o, a, b](Tape<T> &tt) {
        const Tensor<T> &g = tt.grad(o);
        Tensor<T> &ga = tt.grad(a);
        Tensor<T> &gb = tt.grad(b);
        for (std::int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
    return o;
}

template <typename T>
Var op_sub(Tape<T> &t, Var a, Var b) {
    detail::check_same_shape(t.value(a), t.value(b), "sub");
    Tensor<T> out = t.value(a);
    const Tensor<T> &vb = t.value(b);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
    Var o = t.push(std::move(out), "sub");
    t.set_backward(o, [o, a, b](Tape<T> &tt) {
        const Tensor<T> &g = tt.grad(o);
        Tensor<T> &ga = tt.grad(a);
        Tensor<T> &gb = tt.grad(b);
        for (std::int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
    return o;
}

template <typename T>
Var op_mul(Tape<T> &t, Var a, Var b) {
    detail::check_same_shape(t.value(a), t.value(b), "mul");
    Tensor<T> out = t.value(a);
    const Tensor<T> &vb = t.value(b);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    Var o = t.push(std::move(out), "mul");
    t.set_backward(o, [o, a, b](Tape<T> &tt) {
        const Tensor<T> &g = tt.grad(o);
        const Tensor<T> &va = tt.value(a);
        const Tensor<T> &vb2 = tt.value(b);
        Tensor<T> &ga = tt.grad(a);
        Tensor<T> &gb = tt.grad(b);
        for (std::int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * vb2[i];
            gb[i] += g[i] * va[i];
        }
    });
    return o;
}

template <typename T>
Var op_div(Tape<T> &t, Var a, Var b) {
    detail::check_same_shape(t.value(a), t.value(b), "div");
    Tensor<T> out = t.value(a);
    const Tensor<T> &vb = t.value(b);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] /= vb[i];
    Var o = t.push(std::move(out), "div");
    t.set_backward(o, [o, a, b](Tape<T> &tt) {
        const Tensor<T> &g = tt.grad(o);
        const Tensor<T> &vo = tt.value(o);
        const Tensor<T> &vb2 = tt.value(b);
        Tensor<T> &ga = tt.grad(a);
        Tensor<T> &gb = tt.grad(b);
        for (std::int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] / vb2[i];
            gb[i] -= g[i] * vo[i] / vb2[i];
        }
    });
    return o;
}

template <typename T>
Var op_scale(Tape<T> &t, Var a, T s) {
    Tensor<T> out = t.value(a);
    for (auto &v : out.data) v *= s;
    Var o = t.push(std::move(out), "scale");
    t.set_backward(o, [o, a, s](Tape<T> &tt) {
        const Tensor<T> &g = tt.grad(o);
        Tensor<T> &ga = tt.grad(a);
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
    return o;
}

template <typename T>
Var op_add_scalar(Tape<T> &t, Var a, T s) {
    Tensor<T> out = t.value(a);
    for (auto &v : out.data) v += s;
    Var o = t.push(std::move(out), "add_scalar");
    t.set_backward(o, [o, a](Tape<T> &tt) {
        const Tensor<T> &g = tt.grad(o);
        Tensor<T> &ga = tt.grad(a);
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return o;
}

template <typename T>
Var op_sum_all(Tape<T> &t, Var a) {
    T s = T(0);
    for (const T &v : t.value(a).data) s += v;
    Tensor<T> out({1});
    out[0] = s;
    Var o = t.push(std::move(out), "sum_all");
    t.set_backward(o, [o, a](Tape<T> &tt) {
        const T g = tt.grad(o)[0];
        Tensor<T> &ga = tt.grad(a);
        for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
    return o;
}

template <typename T>
Var op_mean_all(Tape<T> &t, Var a) {
    const std::int64_t n = t.value(a).size();
    return op_scale(t, op_sum_all(t, a), T(1) / static_cast<T>(n));
}

} // namespace mdreg
