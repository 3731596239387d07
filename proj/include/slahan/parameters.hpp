#pragma once

#include <map>
#include <string>

#include "slahan/common.hpp"
#include "slahan/tensor.hpp"

namespace slahan {

// Uniform init in [-b, b] with b = sqrt(6 / (fan_in + fan_out)).
// For 1-D shapes fan_out is taken as 1.
inline Tensor glorot_init(const std::vector<size_t>& shape, Rng& rng) {
    if (shape.empty() || shape.size() > 2)
        throw std::invalid_argument("glorot_init: shape must be 1-D or 2-D");
    const double fan_in = static_cast<double>(shape.back());
    const double fan_out = shape.size() == 2 ? static_cast<double>(shape[0]) : 1.0;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t = Tensor::zeros(shape);
    for (double& x : t.v) x = rng.uniform(-bound, bound);
    return t;
}

// Named parameters with matching gradient buffers. std::map keeps iteration
// order stable, which the optimizer and checkpoint writer rely on for
// determinism.
class ParameterStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
    };

    Tensor& create(const std::string& name, Tensor init) {
        if (entries_.count(name))
            throw std::invalid_argument("ParameterStore: duplicate parameter " + name);
        Entry e;
        e.grad = Tensor::zeros(init.shape);
        e.value = std::move(init);
        return entries_.emplace(name, std::move(e)).first->second.value;
    }

    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    Tensor& value(const std::string& name) { return entry(name).value; }
    const Tensor& value(const std::string& name) const { return entry(name).value; }
    Tensor& grad(const std::string& name) { return entry(name).grad; }
    const Tensor& grad(const std::string& name) const { return entry(name).grad; }

    void zero_grad() {
        for (auto& [name, e] : entries_)
            std::fill(e.grad.v.begin(), e.grad.v.end(), 0.0);
    }

    void scale_grads(double s) {
        for (auto& [name, e] : entries_)
            for (double& g : e.grad.v) g *= s;
    }

    double grad_sq_norm() const {
        double sq = 0.0;
        for (const auto& [name, e] : entries_)
            for (double g : e.grad.v) sq += g * g;
        return sq;
    }

    size_t total_values() const {
        size_t n = 0;
        for (const auto& [name, e] : entries_) n += e.value.numel();
        return n;
    }

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

private:
    Entry& entry(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end())
            throw std::invalid_argument("ParameterStore: unknown parameter " + name);
        return it->second;
    }
    const Entry& entry(const std::string& name) const {
        return const_cast<ParameterStore*>(this)->entry(name);
    }

    std::map<std::string, Entry> entries_;
};

} // namespace slahan
