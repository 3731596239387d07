#pragma once

#include <functional>
#include <string>
#include <vector>

#include "slahan/parameters.hpp"
#include "slahan/tape.hpp"

namespace slahan {

// Central finite-difference check of a scalar-valued function of the
// parameters in `store`. `forward` must rebuild the computation from scratch
// on the tape it is given (parameters are re-read on every call). Returns the
// maximum scaled relative error max |analytic - fd| / max(1, |analytic|, |fd|)
// over all coordinates checked.
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst; // "param[idx]" of the worst coordinate
};

inline GradCheckResult gradient_check(ParameterStore& store,
                                      const std::function<NodeId(Tape&)>& forward,
                                      double eps = 1e-5) {
    store.zero_grad();
    {
        Tape tape;
        NodeId loss = forward(tape);
        tape.backward(loss);
    }
    GradCheckResult res;
    for (auto& [name, entry] : store.entries()) {
        for (size_t i = 0; i < entry.value.numel(); ++i) {
            const double orig = entry.value.v[i];
            entry.value.v[i] = orig + eps;
            double up, down;
            {
                Tape tape;
                up = tape.value(forward(tape)).v[0];
            }
            entry.value.v[i] = orig - eps;
            {
                Tape tape;
                down = tape.value(forward(tape)).v[0];
            }
            entry.value.v[i] = orig;
            const double fd = (up - down) / (2.0 * eps);
            const double analytic = entry.grad.v[i];
            const double rel = std::abs(analytic - fd) /
                               std::max({1.0, std::abs(analytic), std::abs(fd)});
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

} // namespace slahan
