#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "sigmor/tensor.hpp"

namespace sigmor {

using SpMat = Eigen::SparseMatrix<double>;

struct Triplet {
    std::int64_t row = 0;
    std::int64_t col = 0;
    double value = 0.0;
};

/// Build a sparse matrix from triplets. Duplicate (row, col) entries are an
/// error by default; pass accumulate = true to sum them instead.
inline SpMat sparse_from_triplets(std::int64_t rows, std::int64_t cols,
                                  const std::vector<Triplet>& ts, bool accumulate = false) {
    std::vector<Eigen::Triplet<double>> es;
    es.reserve(ts.size());
    for (const auto& t : ts) {
        if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
            throw std::out_of_range("sparse_from_triplets: index out of range");
        es.emplace_back(static_cast<int>(t.row), static_cast<int>(t.col), t.value);
    }
    SpMat M(rows, cols);
    if (accumulate) {
        M.setFromTriplets(es.begin(), es.end());
    } else {
        M.setFromTriplets(es.begin(), es.end(),
                          [](const double&, const double&) -> double {
                              throw std::invalid_argument("sparse_from_triplets: duplicate entry");
                          });
    }
    M.makeCompressed();
    return M;
}

inline std::vector<Triplet> to_triplets(const SpMat& M) {
    std::vector<Triplet> ts;
    ts.reserve(M.nonZeros());
    for (int k = 0; k < M.outerSize(); ++k)
        for (SpMat::InnerIterator it(M, k); it; ++it)
            ts.push_back({it.row(), it.col(), it.value()});
    return ts;
}

/// Covariance of the d-1 stochastic driver coordinates per unit time,
/// indexed by letters 2..d. Must be symmetric positive semidefinite.
struct NoiseCovariance {
    Eigen::MatrixXd K;

    static NoiseCovariance identity(int count) {
        return {Eigen::MatrixXd::Identity(count, count)};
    }

    int count() const { return static_cast<int>(K.rows()); }
    double operator()(int li, int lj) const { return K(li - 2, lj - 2); }

    void validate(double tol = 1e-12) const {
        if (K.rows() != K.cols()) throw std::invalid_argument("NoiseCovariance: K not square");
        if (K.rows() == 0) return;
        double scale = K.cwiseAbs().maxCoeff();
        if ((K - K.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, scale))
            throw std::invalid_argument("NoiseCovariance: K not symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -tol * std::max(1.0, scale))
            throw std::invalid_argument("NoiseCovariance: K not positive semidefinite");
    }
};

/// The N_i of the signature SDE: N_i x appends letter i to every word of
/// length < m, i.e. (N_i)_{index(w.i), index(w)} = 1. One matrix per letter
/// i = 1..d; each has dim_truncated(d, m-1) nonzeros and is nilpotent of
/// order m+1.
inline std::vector<SpMat> vector_field_matrices(const BasisOrder& ord) {
    const int d = ord.alphabet();
    const int m = ord.level();
    const std::int64_t n = ord.dim();
    const std::int64_t cols = dim_truncated(d, m - 1 < 0 ? 0 : m - 1);
    std::vector<SpMat> Ns;
    Ns.reserve(d);
    for (int i = 1; i <= d; ++i) {
        std::vector<Eigen::Triplet<double>> es;
        es.reserve(cols);
        if (m > 0) {
            for (int L = 0; L < m; ++L) {
                const std::int64_t o = ord.level_offset(L);
                const std::int64_t sz = ord.level_size(L);
                for (std::int64_t k = o; k < o + sz; ++k)
                    es.emplace_back(static_cast<int>(ord.append_letter(k, i, L)),
                                    static_cast<int>(k), 1.0);
            }
        }
        SpMat N(n, n);
        N.setFromTriplets(es.begin(), es.end());
        N.makeCompressed();
        Ns.push_back(std::move(N));
    }
    return Ns;
}

/// Ito drift A = N_1 + (1/2) sum_{i,j>=2} k_ij N_i N_j. The correction term
/// appends the two-letter tail ji, so A stays strictly lower block
/// triangular and nilpotent like the N_i.
inline SpMat ito_drift(const std::vector<SpMat>& N, const NoiseCovariance& K) {
    const int d = static_cast<int>(N.size());
    if (K.count() != d - 1) throw std::invalid_argument("ito_drift: K size must be d-1");
    SpMat A = N[0];
    for (int i = 2; i <= d; ++i)
        for (int j = 2; j <= d; ++j) {
            const double k = K(i, j);
            if (k != 0.0) A = A + (0.5 * k) * (SpMat(N[i - 1] * N[j - 1]));
        }
    A.makeCompressed();
    return A;
}

/// Linear-SDE realisation of the truncated signature of the time-extended
/// driver:  dx = A x dt + sum_{i=2}^d N_i x dB^i,  x_0 = e_1,  Y = L x.
/// Letter 1 is the clock; diffusion[i] drives letter i+2.
struct SignatureSDE {
    int d = 0;
    int m = 0;
    BasisOrder order{1, 0};
    SpMat A;
    std::vector<SpMat> diffusion;  // d-1 matrices, letters 2..d
    NoiseCovariance K;
    Eigen::VectorXd z;             // initial state, default e_1
    Eigen::MatrixXd L;             // p x n output map

    std::int64_t dim() const { return order.dim(); }
    int outputs() const { return static_cast<int>(L.rows()); }
};

inline SignatureSDE assemble_system(int d, int m, const NoiseCovariance& K,
                                    const Eigen::MatrixXd& L,
                                    const Eigen::VectorXd& z = Eigen::VectorXd()) {
    if (d < 2) throw std::invalid_argument("assemble_system: need d >= 2 (letter 1 is the clock)");
    K.validate();
    if (K.count() != d - 1)
        throw std::invalid_argument("assemble_system: K must be (d-1) x (d-1)");
    SignatureSDE sys;
    sys.d = d;
    sys.m = m;
    sys.order = BasisOrder(d, m);
    const std::int64_t n = sys.order.dim();
    auto N = vector_field_matrices(sys.order);
    sys.A = ito_drift(N, K);
    sys.diffusion.assign(std::make_move_iterator(N.begin() + 1), std::make_move_iterator(N.end()));
    sys.K = K;
    if (z.size() == 0) {
        sys.z = Eigen::VectorXd::Zero(n);
        sys.z[0] = 1.0;
    } else {
        if (z.size() != n) throw std::invalid_argument("assemble_system: z has wrong dimension");
        sys.z = z;
    }
    if (L.size() == 0) {
        sys.L = Eigen::MatrixXd::Zero(1, n);
        sys.L(0, 0) = 1.0;
    } else {
        if (L.cols() != n) throw std::invalid_argument("assemble_system: L has wrong column count");
        sys.L = L;
    }
    return sys;
}

inline SignatureSDE assemble_system(int d, int m, const NoiseCovariance& K,
                                    const LinearFunctional& ell,
                                    const Eigen::VectorXd& z = Eigen::VectorXd()) {
    BasisOrder ord(d, m);
    return assemble_system(d, m, K, Eigen::MatrixXd(functional_row(ell, ord)), z);
}

} // namespace sigmor
