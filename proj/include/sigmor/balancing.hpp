#pragma once

#include <limits>

#include <Eigen/SVD>

#include "sigmor/gramians.hpp"

namespace sigmor {

namespace detail {

struct PsdEig {
    Eigen::VectorXd vals;  // descending
    Eigen::MatrixXd vecs;  // columns match vals
};

inline PsdEig psd_eig(const Eigen::MatrixXd& M, double indef_tol) {
    if (M.rows() != M.cols()) throw std::invalid_argument("psd_eig: matrix not square");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
    if (es.info() != Eigen::Success) throw std::runtime_error("psd_eig: eigensolver failed");
    Eigen::VectorXd vals = es.eigenvalues().reverse();
    const double top = vals.size() ? std::max(vals[0], 0.0) : 0.0;
    if (vals.size() && vals[vals.size() - 1] < -indef_tol * std::max(top, 1e-300))
        throw std::invalid_argument("psd_eig: matrix is indefinite beyond tolerance");
    return {std::move(vals), es.eigenvectors().rowwise().reverse()};
}

} // namespace detail

/// Factor a symmetric PSD matrix as M = F F^T with F of full numerical rank:
/// eigenvalues below rank_tol * lambda_max are truncated, small negative ones
/// (within the same tolerance) are clipped to zero, and anything more
/// negative is an error.
inline Eigen::MatrixXd factor_psd(const Eigen::MatrixXd& M, double rank_tol = 1e-12) {
    auto eig = detail::psd_eig(M, std::max(rank_tol, 1e-12));
    const double cutoff = eig.vals.size() ? rank_tol * std::max(eig.vals[0], 0.0) : 0.0;
    Eigen::Index r = 0;
    while (r < eig.vals.size() && eig.vals[r] > cutoff && eig.vals[r] > 0.0) ++r;
    Eigen::MatrixXd F(M.rows(), r);
    for (Eigen::Index k = 0; k < r; ++k) F.col(k) = eig.vecs.col(k) * std::sqrt(eig.vals[k]);
    return F;
}

/// Square-root balancing of a Gramian pair. With P = L_P L_P^T and
/// Q = L_Q L_Q^T, the SVD U S Vh^T = L_Q^T L_P gives the projection
///   V = L_P Vh_1 S_1^{-1/2},  W = L_Q U_1 S_1^{-1/2}
/// keeping the r singular values above rank_tol * s_1. Then W^T V = I_r and
/// V^T Q V = W^T P W = diag(sigma_1..sigma_r): the kept Hankel values.
struct BalancingResult {
    Eigen::MatrixXd V;      // n x r
    Eigen::MatrixXd W;      // n x r
    Eigen::VectorXd sigma;  // all min(rank P, rank Q) singular values, descending
    Eigen::Index rank = 0;  // how many were kept in V, W
};

inline BalancingResult balance(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q,
                               double rank_tol = 1e-12) {
    if (P.rows() != Q.rows() || P.rows() != P.cols() || Q.rows() != Q.cols())
        throw std::invalid_argument("balance: Gramians must be square and same size");
    Eigen::MatrixXd LP = factor_psd(P, rank_tol);
    Eigen::MatrixXd LQ = factor_psd(Q, rank_tol);
    if (LP.cols() == 0 || LQ.cols() == 0)
        throw std::invalid_argument("balance: a Gramian is numerically zero");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(LQ.transpose() * LP,
                                       Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd sigma = svd.singularValues();
    if (sigma.size() == 0 || sigma[0] <= 0.0)
        throw std::invalid_argument("balance: zero Hankel spectrum");
    Eigen::Index r = 0;
    while (r < sigma.size() && sigma[r] > rank_tol * sigma[0]) ++r;
    BalancingResult out;
    out.sigma = sigma;
    out.rank = r;
    Eigen::VectorXd scale = sigma.head(r).cwiseSqrt().cwiseInverse();
    out.V = LP * svd.matrixV().leftCols(r) * scale.asDiagonal();
    out.W = LQ * svd.matrixU().leftCols(r) * scale.asDiagonal();
    return out;
}

/// All n Hankel singular values sigma_k = sqrt(eig_k(PQ)), descending, padded
/// with zeros past the numerical rank. Computed through the symmetric product
/// L_P^T Q L_P, which has the same nonzero spectrum as PQ. Eigenvalues below
/// the solver's own resolution (n eps eig_1) are reported as exact zeros;
/// sigma below sqrt(eps) sigma_1 is not resolvable along this route.
inline Eigen::VectorXd hankel_spectrum(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q) {
    if (P.rows() != Q.rows() || P.rows() != P.cols() || Q.rows() != Q.cols())
        throw std::invalid_argument("hankel_spectrum: Gramians must be square and same size");
    Eigen::MatrixXd LP = factor_psd(P, 1e-15);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(P.rows());
    if (LP.cols() == 0) return out;
    Eigen::MatrixXd small = LP.transpose() * Q * LP;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (small + small.transpose()),
                                                      Eigen::EigenvaluesOnly);
    Eigen::VectorXd ev = es.eigenvalues().reverse();
    const double floor = static_cast<double>(P.rows()) *
                         std::numeric_limits<double>::epsilon() * std::max(ev[0], 0.0);
    for (Eigen::Index k = 0; k < ev.size(); ++k)
        out[k] = ev[k] > floor ? std::sqrt(ev[k]) : 0.0;
    return out;
}

/// Reduced system: the Petrov-Galerkin projection of the signature SDE onto
/// the leading nt balanced directions.
struct ReducedSystem {
    Eigen::Index nt = 0;
    /// Alphabet size and truncation level of the parent signature system.
    int d = 0;
    int m = 0;
    Eigen::MatrixXd A;
    std::vector<Eigen::MatrixXd> diffusion;
    NoiseCovariance K;
    Eigen::VectorXd z;
    Eigen::MatrixXd L;

    Eigen::Index dim() const { return nt; }
    int outputs() const { return static_cast<int>(L.rows()); }
};

inline ReducedSystem reduce(const SignatureSDE& sys, const BalancingResult& bal, Eigen::Index nt) {
    if (nt < 1 || nt > bal.rank)
        throw std::invalid_argument("reduce: nt must lie in [1, balanced rank]");
    if (bal.V.rows() != sys.dim())
        throw std::invalid_argument("reduce: balancing result does not match system");
    ReducedSystem r;
    r.nt = nt;
    r.d = sys.d;
    r.m = sys.m;
    const auto Vt = bal.V.leftCols(nt);
    const auto Wt = bal.W.leftCols(nt);
    r.A = Wt.transpose() * (sys.A * Vt);
    r.diffusion.reserve(sys.diffusion.size());
    for (const auto& N : sys.diffusion) r.diffusion.emplace_back(Wt.transpose() * (N * Vt));
    r.K = sys.K;
    r.z = Wt.transpose() * sys.z;
    r.L = sys.L * Vt;
    return r;
}

} // namespace sigmor
