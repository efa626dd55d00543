#include "glhm/projector.hpp"

#include <cmath>
#include <string>

namespace glhm {

namespace {

void fix_sign(Eigen::Ref<Vec> v)
{
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v[i]) > 1e-12) {
            if (v[i] < 0) v = -v;
            return;
        }
    }
}

} // namespace

Projector::Projector(const Mat& P, double tol) : P_(P)
{
    if (P.rows() != P.cols() || P.rows() == 0) throw InvalidArgument("projector must be square");
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > tol)
        throw InvalidArgument("projector not symmetric");
    if ((P * P - P).cwiseAbs().maxCoeff() > tol) throw InvalidArgument("projector not idempotent");
    const double tr = P.trace();
    rank_ = static_cast<int>(std::lround(tr));
    if (std::abs(tr - rank_) > tol) throw InvalidArgument("projector trace not integral");
    P_ = 0.5 * (P + P.transpose());
}

Projector Projector::span(const std::vector<Vec>& vectors, int m)
{
    if (vectors.empty()) return zero(m);
    Mat A(m, static_cast<Eigen::Index>(vectors.size()));
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].size() != m) throw InvalidArgument("span vector has wrong dimension");
        A.col(static_cast<Eigen::Index>(i)) = vectors[i];
    }
    Eigen::ColPivHouseholderQR<Mat> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() != A.cols()) throw InvalidArgument("span vectors are dependent");
    const Mat Q = qr.householderQ() * Mat::Identity(m, A.cols());
    return from_orthonormal(Q);
}

Projector Projector::from_orthonormal(const Mat& basis)
{
    Projector p;
    p.P_ = basis * basis.transpose();
    p.P_ = 0.5 * (p.P_ + p.P_.transpose());
    p.rank_ = static_cast<int>(basis.cols());
    return p;
}

Projector Projector::zero(int m)
{
    Projector p;
    p.P_ = Mat::Zero(m, m);
    p.rank_ = 0;
    return p;
}

Projector Projector::identity(int m)
{
    Projector p;
    p.P_ = Mat::Identity(m, m);
    p.rank_ = m;
    return p;
}

Projector Projector::axes(int m, const std::vector<int>& which)
{
    Projector p = zero(m);
    for (int k : which) {
        if (k < 0 || k >= m) throw InvalidArgument("axis index out of range");
        p.P_(k, k) = 1.0;
    }
    p.rank_ = static_cast<int>(p.P_.trace() + 0.5);
    return p;
}

Projector Projector::complement() const
{
    Projector p;
    p.P_ = Mat::Identity(dim(), dim()) - P_;
    p.rank_ = dim() - rank_;
    return p;
}

Mat Projector::basis() const
{
    const int m = dim();
    Mat B(m, rank_);
    if (rank_ == 0) return B;
    Eigen::SelfAdjointEigenSolver<Mat> es(P_);
    // eigenvalues ascending; the top rank_ are ~1
    for (int i = 0; i < rank_; ++i) {
        Vec v = es.eigenvectors().col(m - 1 - i);
        fix_sign(v);
        B.col(i) = v;
    }
    return B;
}

double grassmann_distance(const Projector& a, const Projector& b)
{
    if (a.dim() != b.dim() || a.rank() != b.rank())
        throw RankMismatch("ranks " + std::to_string(a.rank()) + " and " + std::to_string(b.rank()));
    const Mat D = a.matrix() - b.matrix();
    Eigen::SelfAdjointEigenSolver<Mat> es(D, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace glhm
