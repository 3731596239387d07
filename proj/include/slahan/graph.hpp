#pragma once

#include <map>
#include <vector>

#include "slahan/tape.hpp"

namespace slahan {

// Matrix orientation used throughout: for a sentence with tokens x_0..x_n
// (x_0 the root), head matrices are (n+1)x(n+1) with
//
//     A[j][t] = probability that x_j is the (d-th order) parent of x_t,
//
// i.e. rows index candidate parents and columns index dependents. Every
// column is a probability distribution. Child matrices are the exact
// transposes: B[j][t] = strength of x_j being the d-th order child of x_t.

// Legal-head mask: column 0 keeps only the root (the parent of root is
// root), and a token never heads itself.
inline std::shared_ptr<std::vector<uint8_t>> head_constraint_mask(size_t n_plus_1) {
    auto mask = std::make_shared<std::vector<uint8_t>>(n_plus_1 * n_plus_1, uint8_t{1});
    for (size_t j = 1; j < n_plus_1; ++j) (*mask)[j * n_plus_1 + 0] = 0;
    for (size_t t = 1; t < n_plus_1; ++t) (*mask)[t * n_plus_1 + t] = 0;
    return mask;
}

// Column-wise masked softmax of raw scores under the constraints above.
// scores[j][t] is the unnormalized affinity of x_j heading x_t.
inline NodeId constrained_head_distribution(Tape& t, NodeId scores) {
    const Tensor& s = t.value(scores);
    if (s.rank() != 2 || s.rows() != s.cols())
        throw std::invalid_argument("constrained_head_distribution: need square scores, got " +
                                    s.shape_str());
    return masked_softmax(t, scores, head_constraint_mask(s.rows()), /*axis=*/0);
}

// A^d = A^(d-1) A^1, computed incrementally for every requested order.
inline std::map<int, NodeId> compose_parent_graphs(Tape& t, NodeId a1,
                                                   const std::vector<int>& orders) {
    std::map<int, NodeId> out;
    if (orders.empty()) return out;
    int max_d = 1;
    for (int d : orders) {
        if (d < 1) throw std::invalid_argument("compose_parent_graphs: orders must be >= 1");
        max_d = std::max(max_d, d);
    }
    NodeId power = a1;
    for (int d = 1; d <= max_d; ++d) {
        if (d > 1) power = matmul(t, power, a1);
        for (int want : orders)
            if (want == d) out[d] = power;
    }
    return out;
}

inline std::map<int, NodeId> child_graphs_from_parent(Tape& t,
                                                      const std::map<int, NodeId>& parents) {
    std::map<int, NodeId> out;
    for (const auto& [d, ad] : parents) out[d] = transpose(t, ad);
    return out;
}

// gamma_d: row t is the A^d-weighted mixture of encoder states,
// sum_j A^d[j][t] * h_j. H has n+1 rows (one per position).
inline NodeId parent_weighted_states(Tape& t, NodeId ad, NodeId h) {
    const Tensor &A = t.value(ad), &H = t.value(h);
    if (H.rank() != 2 || A.rank() != 2 || A.rows() != H.rows())
        throw std::invalid_argument("parent_weighted_states: shape mismatch " + A.shape_str() +
                                    " vs " + H.shape_str());
    return matmul(t, transpose(t, ad), h);
}

// rho_d: row t is the coordinate-wise max over j of B^d[j][t] * h_j.
inline NodeId child_pooled_states(Tape& t, NodeId bd, NodeId h) {
    const Tensor &B = t.value(bd), &H = t.value(h);
    if (H.rank() != 2 || B.rank() != 2 || B.rows() != H.rows())
        throw std::invalid_argument("child_pooled_states: shape mismatch " + B.shape_str() +
                                    " vs " + H.shape_str());
    std::vector<NodeId> rows_out;
    rows_out.reserve(B.cols());
    for (size_t pos = 0; pos < B.cols(); ++pos) {
        NodeId weights = col(t, bd, pos);
        rows_out.push_back(max_axis(t, scale_rows(t, h, weights), 0));
    }
    return stack_rows(t, rows_out);
}

// Independent verification oracle: sums, over every directed length-d chain
// of head links t -> k1 -> ... -> j, the product of edge probabilities, by
// explicit enumeration. Exponential in d, hence the hard limits.
inline double path_sum_oracle(const Tensor& a1, int d, size_t t, size_t j) {
    if (a1.rank() != 2 || a1.rows() != a1.cols())
        throw std::invalid_argument("path_sum_oracle: A1 must be square");
    const size_t n_plus_1 = a1.rows();
    if (n_plus_1 > 9 || d > 4 || d < 1)
        throw std::invalid_argument("path_sum_oracle: enumeration limits are n <= 8, d <= 4");
    if (t >= n_plus_1 || j >= n_plus_1)
        throw std::invalid_argument("path_sum_oracle: index out of range");

    std::function<double(size_t, int)> walk = [&](size_t u, int depth) -> double {
        if (depth == d) return u == j ? 1.0 : 0.0;
        double s = 0.0;
        for (size_t k = 0; k < n_plus_1; ++k) {
            const double p = a1.at(k, u); // edge u -> head k
            if (p != 0.0) s += p * walk(k, depth + 1);
        }
        return s;
    };
    return walk(t, 0);
}

} // namespace slahan
