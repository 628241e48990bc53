#pragma once

#include <map>

#include "gradroute/core/rng.hpp"
#include "gradroute/core/tape.hpp"
#include "gradroute/core/tensor.hpp"

namespace gradroute {

// Named parameter buffers. Readable concurrently between steps; mutation
// (optimizer step, expand/ablate) requires exclusive access.
template <class T>
class ParamStore {
public:
    Tensor<T> add(const std::string& name, Shape shape, std::vector<T> values) {
        if (entries_.count(name)) throw usage_error("parameter '" + name + "' already exists");
        Tensor<T> t = Tensor<T>::from(std::move(shape), std::move(values));
        entries_.emplace(name, t);
        return t;
    }

    // U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
    Tensor<T> add_fan_in_uniform(const std::string& name, Shape shape, size_t fan_in, Rng& rng) {
        double limit = std::sqrt(1.0 / static_cast<double>(fan_in));
        std::vector<T> v(shape_size(shape));
        for (auto& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
        return add(name, std::move(shape), std::move(v));
    }

    Tensor<T> add_normal(const std::string& name, Shape shape, double stddev, Rng& rng) {
        std::vector<T> v(shape_size(shape));
        for (auto& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
        return add(name, std::move(shape), std::move(v));
    }

    Tensor<T> add_zeros(const std::string& name, Shape shape) {
        return add(name, shape, std::vector<T>(shape_size(shape), T(0)));
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    // Detached view of the current value.
    Tensor<T> value(const std::string& name) const { return entry(name).detached(); }

    // Differentiable leaf on the given tape.
    Tensor<T> use(Tape<T>& tape, const std::string& name) const {
        return tape.leaf(name, entry(name));
    }

    std::vector<T>& raw(const std::string& name) { return *entry(name).data; }
    const std::vector<T>& raw(const std::string& name) const { return *entry(name).data; }
    const Shape& shape(const std::string& name) const { return entry(name).shape; }

    // Replace a parameter buffer (used by expand/ablate).
    void replace(const std::string& name, Shape shape, std::vector<T> values) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw usage_error("unknown parameter '" + name + "'");
        it->second = Tensor<T>::from(std::move(shape), std::move(values));
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : entries_) out.push_back(k);
        return out;
    }

    size_t size() const { return entries_.size(); }

    size_t total_size() const {
        size_t n = 0;
        for (const auto& [k, v] : entries_) n += v.size();
        return n;
    }

    // Deep copy (buffers are shared_ptr-backed, so plain copies alias).
    ParamStore<T> clone() const { return cast<T>(); }

    // Convert precision (checkpoint loading, gradient-check copies).
    template <class U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& [k, v] : entries_) {
            std::vector<U> d(v.size());
            for (size_t i = 0; i < d.size(); ++i) d[i] = static_cast<U>((*v.data)[i]);
            out.add(k, v.shape, std::move(d));
        }
        return out;
    }

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    const Tensor<T>& entry(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw usage_error("unknown parameter '" + name + "'");
        return it->second;
    }
    Tensor<T>& entry(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw usage_error("unknown parameter '" + name + "'");
        return it->second;
    }

    std::map<std::string, Tensor<T>> entries_;
};

} // namespace gradroute
