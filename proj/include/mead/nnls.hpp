#ifndef MEAD_NNLS_HPP
#define MEAD_NNLS_HPP

#include "mead/core.hpp"

namespace mead {

struct NnqpResult {
    Vector x;
    int iterations = 0;
    bool converged = false;
};

/**
 * Minimize 0.5 x'Qx - b'x subject to x >= 0, for symmetric positive definite Q.
 *
 * Lawson-Hanson active-set iterations expressed on the normal equations, so any
 * convex quadratic (not only a least-squares residual) can be passed in.
 */
NnqpResult nonnegative_quadratic(const Matrix& q, const Vector& b, int max_iterations = 0);

}  // namespace mead

#endif  // MEAD_NNLS_HPP
