#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gradroute/core/error.hpp"

namespace gradroute {

template <class T>
class Tape;

using Shape = std::vector<size_t>;

inline size_t shape_size(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// An n-dimensional array of T. `node` is an optional handle into a backward
// tape; a tensor without one never receives gradient. Data buffers are shared
// and treated as immutable by all operations.
template <class T>
struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<T>> data;
    Tape<T>* tape = nullptr;
    int node = -1;

    Tensor() = default;
    Tensor(Shape s, std::shared_ptr<std::vector<T>> d) : shape(std::move(s)), data(std::move(d)) {}

    size_t size() const { return shape_size(shape); }
    bool attached() const { return tape != nullptr && node >= 0; }

    const std::vector<T>& vec() const { return *data; }
    T operator[](size_t i) const { return (*data)[i]; }

    T scalar() const {
        if (size() != 1) throw usage_error("scalar() on tensor of shape " + shape_str(shape));
        return (*data)[0];
    }

    Tensor detached() const { return Tensor(shape, data); }

    static Tensor from(Shape s, std::vector<T> values) {
        if (shape_size(s) != values.size())
            throw usage_error("tensor data length " + std::to_string(values.size()) +
                              " does not match shape " + shape_str(s));
        return Tensor(std::move(s), std::make_shared<std::vector<T>>(std::move(values)));
    }

    static Tensor full(Shape s, T v) {
        size_t n = shape_size(s);
        return Tensor(std::move(s), std::make_shared<std::vector<T>>(n, v));
    }

    static Tensor zeros(Shape s) { return full(std::move(s), T(0)); }
    static Tensor ones(Shape s) { return full(std::move(s), T(1)); }
    static Tensor scalar_value(T v) { return full({1}, v); }
};

// Trailing-dimension broadcasting (numpy-style). Precomputes per-output-axis
// strides for both operands; a stride of 0 marks a broadcast axis.
struct Broadcast {
    Shape out_shape;
    std::vector<size_t> a_stride, b_stride;
    size_t out_size = 0;

    static Broadcast make(const Shape& a, const Shape& b, const char* what = "operands") {
        size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
        Broadcast bc;
        bc.out_shape.resize(r);
        for (size_t i = 0; i < r; ++i) {
            size_t da = i < r - ra ? 1 : a[i - (r - ra)];
            size_t db = i < r - rb ? 1 : b[i - (r - rb)];
            if (da != db && da != 1 && db != 1)
                throw usage_error(std::string("cannot broadcast ") + what + " with shapes " +
                                  shape_str(a) + " and " + shape_str(b));
            bc.out_shape[i] = std::max(da, db);
        }
        bc.out_size = shape_size(bc.out_shape);
        auto strides_for = [&](const Shape& s, size_t rs) {
            std::vector<size_t> st(r, 0);
            size_t acc = 1;
            for (size_t i = rs; i-- > 0;) {
                size_t d = s[i];
                st[i + (r - rs)] = (d == 1) ? 0 : acc;
                acc *= d;
            }
            return st;
        };
        bc.a_stride = strides_for(a, ra);
        bc.b_stride = strides_for(b, rb);
        return bc;
    }

    // f(out_index, a_index, b_index), in row-major output order.
    template <class F>
    void for_each(F&& f) const {
        size_t r = out_shape.size();
        if (r == 0) {
            f(0, 0, 0);
            return;
        }
        std::vector<size_t> idx(r, 0);
        size_t ai = 0, bi = 0;
        for (size_t o = 0; o < out_size; ++o) {
            f(o, ai, bi);
            for (size_t k = r; k-- > 0;) {
                ++idx[k];
                ai += a_stride[k];
                bi += b_stride[k];
                if (idx[k] < out_shape[k]) break;
                ai -= a_stride[k] * out_shape[k];
                bi -= b_stride[k] * out_shape[k];
                idx[k] = 0;
            }
        }
    }
};

} // namespace gradroute
