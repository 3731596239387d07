#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "slahan/common.hpp"

namespace slahan {

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover everything in
// this project; shape is kept general so ops can report mismatches precisely.
struct Tensor {
    std::vector<size_t> shape;
    std::vector<double> v;

    Tensor() = default;

    static Tensor zeros(std::vector<size_t> shape) {
        Tensor t;
        size_t n = 1;
        for (size_t d : shape) n *= d;
        t.shape = std::move(shape);
        t.v.assign(n, 0.0);
        return t;
    }

    static Tensor vec(std::vector<double> values) {
        Tensor t;
        t.shape = {values.size()};
        t.v = std::move(values);
        return t;
    }

    static Tensor matrix(size_t rows, size_t cols, std::vector<double> values) {
        Tensor t;
        t.shape = {rows, cols};
        t.v = std::move(values);
        if (t.v.size() != rows * cols)
            throw std::invalid_argument("Tensor::matrix: value count does not match shape");
        return t;
    }

    static Tensor scalar(double x) { return vec({x}); }

    size_t numel() const { return v.size(); }
    size_t rank() const { return shape.size(); }
    size_t rows() const { return shape.at(0); }
    size_t cols() const { return shape.at(1); }

    double& at(size_t i) { return v[i]; }
    double at(size_t i) const { return v[i]; }
    double& at(size_t i, size_t j) { return v[i * shape[1] + j]; }
    double at(size_t i, size_t j) const { return v[i * shape[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ")";
        return os.str();
    }
};

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

// dst += src, shapes must already agree
inline void accumulate(Tensor& dst, const Tensor& src) {
    for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

} // namespace slahan
