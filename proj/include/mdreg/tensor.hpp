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

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mdreg/common.hpp"

namespace mdreg {

// Dense flat tensor. The shape is interpreted per operation; spatial data is
// stored channel-major with x fastest within a channel.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(count(shape)), T(0));
    }
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != count(shape))
            throw invalid_input("tensor data length does not match shape");
    }

    static std::int64_t count(const std::vector<int> &s) {
        std::int64_t n = 1;
        for (int v : s) n *= v;
        return n;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    bool empty() const { return data.empty(); }

    T &operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const T &operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (const T &v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

template <typename T>
Tensor<T> tensor_like(const Tensor<T> &t) {
    return Tensor<T>(t.shape);
}

template <typename T, typename U>
Tensor<T> tensor_cast(const Tensor<U> &t) {
    Tensor<T> out;
    out.shape = t.shape;
    out.data.resize(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i)
        out.data[i] = static_cast<T>(t.data[i]);
    return out;
}

} // namespace mdreg
