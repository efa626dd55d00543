#pragma once

#include "glhm/errors.hpp"

#include <Eigen/Dense>

#include <vector>

namespace glhm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

//! Orthogonal projector onto a k-dimensional subspace L of R^m.
class Projector {
public:
    Projector() = default;

    //! Validates symmetry, idempotence and integral trace within tol.
    explicit Projector(const Mat& P, double tol = 1e-10);

    //! Projector onto span of the given vectors (orthonormalized; must be independent).
    static Projector span(const std::vector<Vec>& vectors, int m);
    //! Projector onto the span of the columns of an orthonormal basis.
    static Projector from_orthonormal(const Mat& basis);
    static Projector zero(int m);
    static Projector identity(int m);
    //! Span of coordinate axes.
    static Projector axes(int m, const std::vector<int>& which);

    const Mat& matrix() const { return P_; }
    int rank() const { return rank_; }
    int dim() const { return static_cast<int>(P_.rows()); }

    Projector complement() const;
    Vec apply(const Vec& v) const { return P_ * v; }
    //! Orthonormal basis of the range, columns ordered by a deterministic sign rule.
    Mat basis() const;

private:
    Mat P_;
    int rank_ = 0;
};

//! Operator norm of the projector difference.
double grassmann_distance(const Projector& a, const Projector& b);

} // namespace glhm
