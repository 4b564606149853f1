#include "mead/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mead {

namespace {

Vector solve_passive(const Matrix& q, const Vector& b, const std::vector<bool>& passive) {
    const Index K = q.rows();
    std::vector<Index> idx;
    for (Index k = 0; k < K; ++k)
        if (passive[static_cast<std::size_t>(k)]) idx.push_back(k);
    const Index P = static_cast<Index>(idx.size());
    Matrix qp(P, P);
    Vector bp(P);
    for (Index i = 0; i < P; ++i) {
        bp(i) = b(idx[static_cast<std::size_t>(i)]);
        for (Index j = 0; j < P; ++j) qp(i, j) = q(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    Vector sp = qp.ldlt().solve(bp);
    Vector s = Vector::Zero(K);
    for (Index i = 0; i < P; ++i) s(idx[static_cast<std::size_t>(i)]) = sp(i);
    return s;
}

}  // namespace

NnqpResult nonnegative_quadratic(const Matrix& q, const Vector& b, int max_iterations) {
    const Index K = q.rows();
    if (q.cols() != K || b.size() != K) throw ParameterError("nonnegative_quadratic: dimension mismatch");
    if (max_iterations <= 0) max_iterations = static_cast<int>(30 * K + 30);

    const double tol = 1e-12 * std::max(1.0, b.cwiseAbs().maxCoeff()) * static_cast<double>(K);
    NnqpResult res;
    res.x = Vector::Zero(K);
    std::vector<bool> passive(static_cast<std::size_t>(K), false);
    Vector grad = b;  // negative gradient at x

    while (res.iterations < max_iterations) {
        Index best = -1;
        double best_value = tol;
        for (Index k = 0; k < K; ++k) {
            if (!passive[static_cast<std::size_t>(k)] && grad(k) > best_value) {
                best_value = grad(k);
                best = k;
            }
        }
        if (best < 0) {
            res.converged = true;
            break;
        }
        passive[static_cast<std::size_t>(best)] = true;

        while (res.iterations < max_iterations) {
            ++res.iterations;
            Vector s = solve_passive(q, b, passive);
            bool feasible = true;
            for (Index k = 0; k < K; ++k)
                if (passive[static_cast<std::size_t>(k)] && s(k) <= 0.0) feasible = false;
            if (feasible) {
                res.x = s;
                break;
            }
            double step = 1.0;
            for (Index k = 0; k < K; ++k) {
                if (passive[static_cast<std::size_t>(k)] && s(k) <= 0.0) {
                    const double denom = res.x(k) - s(k);
                    if (denom > 0.0) step = std::min(step, res.x(k) / denom);
                }
            }
            res.x += step * (s - res.x);
            for (Index k = 0; k < K; ++k) {
                if (passive[static_cast<std::size_t>(k)] && res.x(k) <= 1e-15 * std::max(1.0, res.x.cwiseAbs().maxCoeff())) {
                    passive[static_cast<std::size_t>(k)] = false;
                    res.x(k) = 0.0;
                }
            }
        }
        grad = b - q * res.x;
    }
    return res;
}

}  // namespace mead
