#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "slahan/common.hpp"
#include "slahan/parameters.hpp"
#include "slahan/tensor.hpp"

namespace slahan {

using NodeId = int32_t;

// Reverse-mode autodiff tape. Forward values are computed eagerly at
// recording time; backward() replays the recorded operations in exact
// reverse order. Parameter gradients accumulate into their ParameterStore,
// so calling backward() twice without zeroing doubles them.
class Tape {
public:
    using BackFn = std::function<void(Tape&, NodeId)>;

    Tape() { nodes_.reserve(1024); }

    NodeId record(Tensor value, BackFn back, const char* op_name) {
        if (!value.all_finite())
            throw numeric_error(std::string(op_name) + ": produced non-finite values");
        nodes_.push_back(Node{std::move(value), std::move(back), nullptr, {}});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    // Grad-tracked input that is not a parameter (used by gradient checks).
    NodeId leaf(Tensor value) { return record(std::move(value), nullptr, "leaf"); }

    // Untracked value. Gradients may still flow "through" it as zeros.
    NodeId constant(Tensor value) { return record(std::move(value), nullptr, "constant"); }

    // Lease a parameter onto the tape. The same tape node is reused for
    // repeated leases of one parameter, so its gradient accumulates across
    // all uses before being pushed back into the store.
    NodeId param(ParameterStore& store, const std::string& name) {
        const auto key = std::make_pair(&store, name);
        auto it = param_cache_.find(key);
        if (it != param_cache_.end()) return it->second;
        NodeId id = record(store.value(name), nullptr, "param");
        nodes_[id].store = &store;
        nodes_[id].param_name = name;
        param_cache_.emplace(key, id);
        return id;
    }

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    Tensor& mutable_value(NodeId id) { return nodes_[id].value; }

    Tensor& grad(NodeId id) { return grads_[id]; }
    const Tensor& grad(NodeId id) const { return grads_[id]; }

    size_t size() const { return nodes_.size(); }

    void backward(NodeId loss) {
        if (value(loss).numel() != 1)
            throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                        value(loss).shape_str());
        grads_.clear();
        grads_.resize(nodes_.size());
        for (size_t i = 0; i < nodes_.size(); ++i) grads_[i] = Tensor::zeros(nodes_[i].value.shape);
        grads_[loss].v[0] = 1.0;
        for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
            if (nodes_[id].back) nodes_[id].back(*this, id);
        }
        for (size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].store) accumulate(nodes_[i].store->grad(nodes_[i].param_name), grads_[i]);
        }
    }

private:
    struct Node {
        Tensor value;
        BackFn back;
        ParameterStore* store;
        std::string param_name;
    };

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::map<std::pair<const ParameterStore*, std::string>, NodeId> param_cache_;
};

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

inline NodeId add(Tape& t, NodeId a, NodeId b) {
    const Tensor &A = t.value(a), &B = t.value(b);
    require_same_shape("add", A, B);
    Tensor out = A;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += B.v[i];
    return t.record(std::move(out), [a, b](Tape& t, NodeId self) {
        accumulate(t.grad(a), t.grad(self));
        accumulate(t.grad(b), t.grad(self));
    }, "add");
}

// elementwise product
inline NodeId mul(Tape& t, NodeId a, NodeId b) {
    const Tensor &A = t.value(a), &B = t.value(b);
    require_same_shape("mul", A, B);
    Tensor out = A;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= B.v[i];
    return t.record(std::move(out), [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor &A = t.value(a), &B = t.value(b);
        Tensor &ga = t.grad(a), &gb = t.grad(b);
        for (size_t i = 0; i < g.v.size(); ++i) {
            ga.v[i] += g.v[i] * B.v[i];
            gb.v[i] += g.v[i] * A.v[i];
        }
    }, "mul");
}

// out = k * a + c with compile-time-known scalars; covers negation (k=-1)
// and complement (k=-1, c=1)
inline NodeId affine_const(Tape& t, NodeId a, double k, double c) {
    Tensor out = t.value(a);
    for (double& x : out.v) x = k * x + c;
    return t.record(std::move(out), [a, k](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(a);
        for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += k * g.v[i];
    }, "affine_const");
}

inline NodeId scale(Tape& t, NodeId a, double k) { return affine_const(t, a, k, 0.0); }
inline NodeId neg(Tape& t, NodeId a) { return affine_const(t, a, -1.0, 0.0); }

// scalar scale: s is a 1-element node
inline NodeId scalar_mul(Tape& t, NodeId a, NodeId s) {
    if (t.value(s).numel() != 1)
        throw std::invalid_argument("scalar_mul: scale must be a scalar, got " +
                                    t.value(s).shape_str());
    const double sv = t.value(s).v[0];
    Tensor out = t.value(a);
    for (double& x : out.v) x *= sv;
    return t.record(std::move(out), [a, s](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& A = t.value(a);
        const double sv = t.value(s).v[0];
        Tensor& ga = t.grad(a);
        double gs = 0.0;
        for (size_t i = 0; i < g.v.size(); ++i) {
            ga.v[i] += sv * g.v[i];
            gs += g.v[i] * A.v[i];
        }
        t.grad(s).v[0] += gs;
    }, "scalar_mul");
}

inline NodeId matmul(Tape& t, NodeId a, NodeId b) {
    const Tensor &A = t.value(a), &B = t.value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
        throw std::invalid_argument("matmul: shape mismatch " + A.shape_str() + " vs " +
                                    B.shape_str());
    const size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out = Tensor::zeros({m, n});
    for (size_t i = 0; i < m; ++i)
        for (size_t p = 0; p < k; ++p) {
            const double av = A.v[i * k + p];
            for (size_t j = 0; j < n; ++j) out.v[i * n + j] += av * B.v[p * n + j];
        }
    return t.record(std::move(out), [a, b, m, k, n](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor &A = t.value(a), &B = t.value(b);
        Tensor &ga = t.grad(a), &gb = t.grad(b);
        // gA += g * B^T ; gB += A^T * g
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) {
                const double gv = g.v[i * n + j];
                if (gv == 0.0) continue;
                for (size_t p = 0; p < k; ++p) {
                    ga.v[i * k + p] += gv * B.v[p * n + j];
                    gb.v[p * n + j] += gv * A.v[i * k + p];
                }
            }
    }, "matmul");
}

inline NodeId matvec(Tape& t, NodeId a, NodeId x) {
    const Tensor &A = t.value(a), &X = t.value(x);
    if (A.rank() != 2 || X.rank() != 1 || A.cols() != X.numel())
        throw std::invalid_argument("matvec: shape mismatch " + A.shape_str() + " vs " +
                                    X.shape_str());
    const size_t m = A.rows(), k = A.cols();
    Tensor out = Tensor::zeros({m});
    for (size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (size_t p = 0; p < k; ++p) s += A.v[i * k + p] * X.v[p];
        out.v[i] = s;
    }
    return t.record(std::move(out), [a, x, m, k](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor &A = t.value(a), &X = t.value(x);
        Tensor &ga = t.grad(a), &gx = t.grad(x);
        for (size_t i = 0; i < m; ++i) {
            const double gv = g.v[i];
            if (gv == 0.0) continue;
            for (size_t p = 0; p < k; ++p) {
                ga.v[i * k + p] += gv * X.v[p];
                gx.v[p] += gv * A.v[i * k + p];
            }
        }
    }, "matvec");
}

inline NodeId dot(Tape& t, NodeId a, NodeId b) {
    const Tensor &A = t.value(a), &B = t.value(b);
    require_same_shape("dot", A, B);
    double s = 0.0;
    for (size_t i = 0; i < A.v.size(); ++i) s += A.v[i] * B.v[i];
    return t.record(Tensor::scalar(s), [a, b](Tape& t, NodeId self) {
        const double g = t.grad(self).v[0];
        const Tensor &A = t.value(a), &B = t.value(b);
        Tensor &ga = t.grad(a), &gb = t.grad(b);
        for (size_t i = 0; i < A.v.size(); ++i) {
            ga.v[i] += g * B.v[i];
            gb.v[i] += g * A.v[i];
        }
    }, "dot");
}

inline NodeId tanh(Tape& t, NodeId a) {
    Tensor out = t.value(a);
    for (double& x : out.v) x = std::tanh(x);
    return t.record(std::move(out), [a](Tape& t, NodeId self) {
        const Tensor &g = t.grad(self), &y = t.value(self);
        Tensor& ga = t.grad(a);
        for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * (1.0 - y.v[i] * y.v[i]);
    }, "tanh");
}

inline NodeId sigmoid(Tape& t, NodeId a) {
    Tensor out = t.value(a);
    for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    return t.record(std::move(out), [a](Tape& t, NodeId self) {
        const Tensor &g = t.grad(self), &y = t.value(self);
        Tensor& ga = t.grad(a);
        for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * y.v[i] * (1.0 - y.v[i]);
    }, "sigmoid");
}

inline NodeId log(Tape& t, NodeId a) {
    Tensor out = t.value(a);
    for (double& x : out.v) x = std::log(x);
    return t.record(std::move(out), [a](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& A = t.value(a);
        Tensor& ga = t.grad(a);
        for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] / A.v[i];
    }, "log");
}

// out = max(a, floor); gradient passes only where a is strictly above the floor
inline NodeId clamp_min(Tape& t, NodeId a, double floor) {
    Tensor out = t.value(a);
    for (double& x : out.v) x = std::max(x, floor);
    return t.record(std::move(out), [a, floor](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& A = t.value(a);
        Tensor& ga = t.grad(a);
        for (size_t i = 0; i < g.v.size(); ++i)
            if (A.v[i] > floor) ga.v[i] += g.v[i];
    }, "clamp_min");
}

inline NodeId sum(Tape& t, NodeId a) {
    double s = 0.0;
    for (double x : t.value(a).v) s += x;
    return t.record(Tensor::scalar(s), [a](Tape& t, NodeId self) {
        const double g = t.grad(self).v[0];
        Tensor& ga = t.grad(a);
        for (double& x : ga.v) x += g;
    }, "sum");
}

// vector concatenation
inline NodeId concat(Tape& t, const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    Tensor out;
    out.shape = {0};
    for (NodeId p : parts) {
        if (t.value(p).rank() != 1)
            throw std::invalid_argument("concat: inputs must be 1-D, got " +
                                        t.value(p).shape_str());
        out.v.insert(out.v.end(), t.value(p).v.begin(), t.value(p).v.end());
    }
    out.shape = {out.v.size()};
    return t.record(std::move(out), [parts](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        size_t off = 0;
        for (NodeId p : parts) {
            Tensor& gp = t.grad(p);
            for (size_t i = 0; i < gp.v.size(); ++i) gp.v[i] += g.v[off + i];
            off += gp.v.size();
        }
    }, "concat");
}

inline NodeId slice(Tape& t, NodeId a, size_t start, size_t len) {
    const Tensor& A = t.value(a);
    if (A.rank() != 1 || start + len > A.numel())
        throw std::invalid_argument("slice: out of range " + A.shape_str());
    Tensor out = Tensor::zeros({len});
    std::copy(A.v.begin() + start, A.v.begin() + start + len, out.v.begin());
    return t.record(std::move(out), [a, start, len](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(a);
        for (size_t i = 0; i < len; ++i) ga.v[start + i] += g.v[i];
    }, "slice");
}

// scalar element of a 1-D vector
inline NodeId pick(Tape& t, NodeId a, size_t i) { return slice(t, a, i, 1); }

// scalar element of a 2-D matrix
inline NodeId pick2(Tape& t, NodeId a, size_t i, size_t j) {
    const Tensor& A = t.value(a);
    if (A.rank() != 2 || i >= A.rows() || j >= A.cols())
        throw std::invalid_argument("pick2: out of range " + A.shape_str());
    const size_t cols = A.cols();
    return t.record(Tensor::scalar(A.at(i, j)), [a, i, j, cols](Tape& t, NodeId self) {
        t.grad(a).v[i * cols + j] += t.grad(self).v[0];
    }, "pick2");
}

inline NodeId row(Tape& t, NodeId a, size_t i) {
    const Tensor& A = t.value(a);
    if (A.rank() != 2 || i >= A.rows())
        throw std::invalid_argument("row: out of range " + A.shape_str());
    const size_t cols = A.cols();
    Tensor out = Tensor::zeros({cols});
    std::copy(A.v.begin() + i * cols, A.v.begin() + (i + 1) * cols, out.v.begin());
    return t.record(std::move(out), [a, i, cols](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(a);
        for (size_t j = 0; j < cols; ++j) ga.v[i * cols + j] += g.v[j];
    }, "row");
}

inline NodeId col(Tape& t, NodeId a, size_t j) {
    const Tensor& A = t.value(a);
    if (A.rank() != 2 || j >= A.cols())
        throw std::invalid_argument("col: out of range " + A.shape_str());
    const size_t rows = A.rows(), cols = A.cols();
    Tensor out = Tensor::zeros({rows});
    for (size_t i = 0; i < rows; ++i) out.v[i] = A.v[i * cols + j];
    return t.record(std::move(out), [a, j, rows, cols](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(a);
        for (size_t i = 0; i < rows; ++i) ga.v[i * cols + j] += g.v[i];
    }, "col");
}

inline NodeId transpose(Tape& t, NodeId a) {
    const Tensor& A = t.value(a);
    if (A.rank() != 2) throw std::invalid_argument("transpose: need 2-D, got " + A.shape_str());
    const size_t m = A.rows(), n = A.cols();
    Tensor out = Tensor::zeros({n, m});
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out.v[j * m + i] = A.v[i * n + j];
    return t.record(std::move(out), [a, m, n](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(a);
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) ga.v[i * n + j] += g.v[j * m + i];
    }, "transpose");
}

inline NodeId stack_rows(Tape& t, const std::vector<NodeId>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
    const size_t cols = t.value(rows[0]).numel();
    Tensor out = Tensor::zeros({rows.size(), cols});
    for (size_t i = 0; i < rows.size(); ++i) {
        const Tensor& r = t.value(rows[i]);
        if (r.rank() != 1 || r.numel() != cols)
            throw std::invalid_argument("stack_rows: row shape mismatch " + r.shape_str());
        std::copy(r.v.begin(), r.v.end(), out.v.begin() + i * cols);
    }
    return t.record(std::move(out), [rows, cols](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        for (size_t i = 0; i < rows.size(); ++i) {
            Tensor& gr = t.grad(rows[i]);
            for (size_t j = 0; j < cols; ++j) gr.v[j] += g.v[i * cols + j];
        }
    }, "stack_rows");
}

// out[i,:] = w[i] * x[i,:]
inline NodeId scale_rows(Tape& t, NodeId x, NodeId w) {
    const Tensor &X = t.value(x), &W = t.value(w);
    if (X.rank() != 2 || W.rank() != 1 || W.numel() != X.rows())
        throw std::invalid_argument("scale_rows: shape mismatch " + X.shape_str() + " vs " +
                                    W.shape_str());
    const size_t m = X.rows(), n = X.cols();
    Tensor out = X;
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out.v[i * n + j] *= W.v[i];
    return t.record(std::move(out), [x, w, m, n](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor &X = t.value(x), &W = t.value(w);
        Tensor &gx = t.grad(x), &gw = t.grad(w);
        for (size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (size_t j = 0; j < n; ++j) {
                gx.v[i * n + j] += g.v[i * n + j] * W.v[i];
                s += g.v[i * n + j] * X.v[i * n + j];
            }
            gw.v[i] += s;
        }
    }, "scale_rows");
}

// out[i,:] = x[i,:] + v
inline NodeId add_rowvec(Tape& t, NodeId x, NodeId v) {
    const Tensor &X = t.value(x), &V = t.value(v);
    if (X.rank() != 2 || V.rank() != 1 || V.numel() != X.cols())
        throw std::invalid_argument("add_rowvec: shape mismatch " + X.shape_str() + " vs " +
                                    V.shape_str());
    const size_t m = X.rows(), n = X.cols();
    Tensor out = X;
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out.v[i * n + j] += V.v[j];
    return t.record(std::move(out), [x, v, m, n](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor &gx = t.grad(x), &gv = t.grad(v);
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) {
                gx.v[i * n + j] += g.v[i * n + j];
                gv.v[j] += g.v[i * n + j];
            }
    }, "add_rowvec");
}

// max over a designated axis of a matrix: axis 0 -> per-column max,
// axis 1 -> per-row max. Ties route the gradient to the first maximum.
inline NodeId max_axis(Tape& t, NodeId x, int axis) {
    const Tensor& X = t.value(x);
    if (X.rank() != 2 || (axis != 0 && axis != 1))
        throw std::invalid_argument("max_axis: need 2-D and axis 0/1, got " + X.shape_str());
    const size_t m = X.rows(), n = X.cols();
    const size_t out_len = axis == 0 ? n : m;
    Tensor out = Tensor::zeros({out_len});
    auto winners = std::make_shared<std::vector<size_t>>(out_len);
    for (size_t k = 0; k < out_len; ++k) {
        size_t best = 0;
        double bv = axis == 0 ? X.at(0, k) : X.at(k, 0);
        const size_t span = axis == 0 ? m : n;
        for (size_t i = 1; i < span; ++i) {
            const double cand = axis == 0 ? X.at(i, k) : X.at(k, i);
            if (cand > bv) {
                bv = cand;
                best = i;
            }
        }
        out.v[k] = bv;
        (*winners)[k] = best;
    }
    return t.record(std::move(out), [x, axis, n, winners](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad(x);
        for (size_t k = 0; k < g.v.size(); ++k) {
            const size_t w = (*winners)[k];
            if (axis == 0)
                gx.v[w * n + k] += g.v[k];
            else
                gx.v[k * n + w] += g.v[k];
        }
    }, "max_axis");
}

namespace detail {

// Shared masked-softmax kernel over strided slices. mask entries are 0/1;
// masked positions get probability exactly 0. A slice with no unmasked
// position is an error.
inline void softmax_slice(const double* x, const uint8_t* mask, double* out, size_t len,
                          size_t stride) {
    double mx = 0.0;
    bool any = false;
    for (size_t i = 0; i < len; ++i) {
        if (!mask[i * stride]) continue;
        const double v = x[i * stride];
        mx = any ? std::max(mx, v) : v;
        any = true;
    }
    if (!any) throw std::invalid_argument("masked_softmax: a slice has every position masked");
    double z = 0.0;
    for (size_t i = 0; i < len; ++i) {
        if (mask[i * stride]) {
            const double e = std::exp(x[i * stride] - mx);
            out[i * stride] = e;
            z += e;
        } else {
            out[i * stride] = 0.0;
        }
    }
    for (size_t i = 0; i < len; ++i)
        if (mask[i * stride]) out[i * stride] /= z;
}

inline void softmax_slice_backward(const double* y, const double* g, double* gx, size_t len,
                                   size_t stride) {
    double dotv = 0.0;
    for (size_t i = 0; i < len; ++i) dotv += y[i * stride] * g[i * stride];
    for (size_t i = 0; i < len; ++i)
        gx[i * stride] += y[i * stride] * (g[i * stride] - dotv);
}

} // namespace detail

// Masked softmax of a matrix along an axis (0 = normalize each column,
// 1 = normalize each row). mask has the same shape, 1 = participating.
inline NodeId masked_softmax(Tape& t, NodeId x, std::shared_ptr<std::vector<uint8_t>> mask,
                             int axis) {
    const Tensor& X = t.value(x);
    if (X.rank() != 2 || (axis != 0 && axis != 1))
        throw std::invalid_argument("masked_softmax: need 2-D and axis 0/1");
    if (mask->size() != X.numel())
        throw std::invalid_argument("masked_softmax: mask size mismatch");
    const size_t m = X.rows(), n = X.cols();
    Tensor out = Tensor::zeros({m, n});
    if (axis == 0) {
        for (size_t j = 0; j < n; ++j)
            detail::softmax_slice(X.v.data() + j, mask->data() + j, out.v.data() + j, m, n);
    } else {
        for (size_t i = 0; i < m; ++i)
            detail::softmax_slice(X.v.data() + i * n, mask->data() + i * n,
                                  out.v.data() + i * n, n, 1);
    }
    return t.record(std::move(out), [x, axis, m, n](Tape& t, NodeId self) {
        const Tensor &y = t.value(self), &g = t.grad(self);
        Tensor& gx = t.grad(x);
        if (axis == 0) {
            for (size_t j = 0; j < n; ++j)
                detail::softmax_slice_backward(y.v.data() + j, g.v.data() + j,
                                               gx.v.data() + j, m, n);
        } else {
            for (size_t i = 0; i < m; ++i)
                detail::softmax_slice_backward(y.v.data() + i * n, g.v.data() + i * n,
                                               gx.v.data() + i * n, n, 1);
        }
    }, "masked_softmax");
}

inline NodeId masked_softmax_vec(Tape& t, NodeId x, std::shared_ptr<std::vector<uint8_t>> mask) {
    const Tensor& X = t.value(x);
    if (X.rank() != 1 || mask->size() != X.numel())
        throw std::invalid_argument("masked_softmax_vec: shape/mask mismatch");
    Tensor out = Tensor::zeros(X.shape);
    detail::softmax_slice(X.v.data(), mask->data(), out.v.data(), X.numel(), 1);
    return t.record(std::move(out), [x](Tape& t, NodeId self) {
        detail::softmax_slice_backward(t.value(self).v.data(), t.grad(self).v.data(),
                                       t.grad(x).v.data(), t.value(self).numel(), 1);
    }, "masked_softmax_vec");
}

inline NodeId softmax_vec(Tape& t, NodeId x) {
    auto mask = std::make_shared<std::vector<uint8_t>>(t.value(x).numel(), uint8_t{1});
    return masked_softmax_vec(t, x, std::move(mask));
}

// numerically stable log-softmax of a vector
inline NodeId log_softmax_vec(Tape& t, NodeId x) {
    const Tensor& X = t.value(x);
    if (X.rank() != 1) throw std::invalid_argument("log_softmax_vec: need 1-D");
    double mx = X.v[0];
    for (double v : X.v) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : X.v) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    Tensor out = X;
    for (double& v : out.v) v -= lz;
    return t.record(std::move(out), [x](Tape& t, NodeId self) {
        const Tensor &y = t.value(self), &g = t.grad(self);
        Tensor& gx = t.grad(x);
        double gsum = 0.0;
        for (double gv : g.v) gsum += gv;
        for (size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i] - std::exp(y.v[i]) * gsum;
    }, "log_softmax_vec");
}

// Inverted dropout: scales survivors by 1/keep at train time so inference
// needs no rescaling. Identity (no node) when not training or rate is 0.
inline NodeId dropout(Tape& t, NodeId x, double rate, Rng& rng, bool train) {
    if (!train || rate == 0.0) return x;
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    const Tensor& X = t.value(x);
    const double keep = 1.0 - rate;
    auto mask = std::make_shared<std::vector<double>>(X.numel());
    Tensor out = X;
    for (size_t i = 0; i < X.numel(); ++i) {
        (*mask)[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
        out.v[i] *= (*mask)[i];
    }
    return t.record(std::move(out), [x, mask](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad(x);
        for (size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i] * (*mask)[i];
    }, "dropout");
}

// affine transform W x + b
inline NodeId affine(Tape& t, NodeId w, NodeId x, NodeId b) {
    return add(t, matvec(t, w, x), b);
}

} // namespace slahan
