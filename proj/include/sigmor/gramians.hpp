#pragma once

#include <cmath>

#include "sigmor/system.hpp"

namespace sigmor {

namespace detail {

inline void kahan_add(Eigen::MatrixXd& sum, Eigen::MatrixXd& comp, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd y = x - comp;
    Eigen::MatrixXd t = sum + y;
    comp = (t - sum) - y;
    sum = std::move(t);
}

} // namespace detail

/// L(Z) = A Z + Z A^T + sum_{i,j} k_ij N_i Z N_j^T, the generator of the
/// second-moment flow. adjoint = true gives L*(Z) = A^T Z + Z A + sum k_ij
/// N_i^T Z N_j. Everything stays devectorized; the Kronecker form exists only
/// in vectorized_operator below.
inline Eigen::MatrixXd lyapunov_apply(const SignatureSDE& sys, const Eigen::MatrixXd& Z,
                                      bool adjoint = false) {
    const auto n = sys.dim();
    if (Z.rows() != n || Z.cols() != n)
        throw std::invalid_argument("lyapunov_apply: operand has wrong dimension");
    const int q = static_cast<int>(sys.diffusion.size());
    Eigen::MatrixXd R(n, n);
    if (!adjoint) {
        R.noalias() = sys.A * Z;
        R.noalias() += Z * SpMat(sys.A.transpose());
        for (int i = 0; i < q; ++i) {
            Eigen::MatrixXd Yi = sys.diffusion[i] * Z;
            for (int j = 0; j < q; ++j) {
                const double k = sys.K.K(i, j);
                if (k != 0.0) R.noalias() += k * (Yi * SpMat(sys.diffusion[j].transpose()));
            }
        }
    } else {
        R.noalias() = SpMat(sys.A.transpose()) * Z;
        R.noalias() += Z * sys.A;
        for (int i = 0; i < q; ++i) {
            Eigen::MatrixXd Yi = SpMat(sys.diffusion[i].transpose()) * Z;
            for (int j = 0; j < q; ++j) {
                const double k = sys.K.K(i, j);
                if (k != 0.0) R.noalias() += k * (Yi * sys.diffusion[j]);
            }
        }
    }
    return R;
}

/// Terminating polynomial series for the Gramians. The operator is nilpotent
/// of order 2m + 1 on symmetric matrices, so the sum over j = 0..2m is exact:
///   P(T) = sum_j T^{j+1}/(j+1)! L^j(z z^T)
///   Q(T) = sum_j T^{j+1}/(j+1)! L*^j(L^T L)
/// Terms are symmetrized and accumulated with compensated summation.
inline Eigen::MatrixXd gramian_series(const SignatureSDE& sys, const Eigen::MatrixXd& seed,
                                      double horizon, bool adjoint) {
    if (horizon <= 0.0) throw std::invalid_argument("gramian_series: horizon must be positive");
    const auto n = sys.dim();
    Eigen::MatrixXd term = 0.5 * (seed + seed.transpose());
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
    double coeff = horizon;
    detail::kahan_add(sum, comp, coeff * term);
    const int jmax = 2 * sys.m;
    for (int j = 1; j <= jmax; ++j) {
        term = lyapunov_apply(sys, term, adjoint);
        term = 0.5 * (term + term.transpose()).eval();
        coeff *= horizon / (j + 1);
        detail::kahan_add(sum, comp, coeff * term);
    }
    return 0.5 * (sum + sum.transpose());
}

inline Eigen::MatrixXd gramian_P(const SignatureSDE& sys, double horizon) {
    return gramian_series(sys, sys.z * sys.z.transpose(), horizon, false);
}

inline Eigen::MatrixXd gramian_Q(const SignatureSDE& sys, double horizon) {
    return gramian_series(sys, sys.L.transpose() * sys.L, horizon, true);
}

struct GramianPair {
    Eigen::MatrixXd P;
    Eigen::MatrixXd Q;
    double horizon = 0.0;
};

inline GramianPair make_gramians(const SignatureSDE& sys, double horizon) {
    return {gramian_P(sys, horizon), gramian_Q(sys, horizon), horizon};
}

/// Ordered eigenvalues of both Gramians, largest first.
struct GramianSpectra {
    Eigen::VectorXd lambda;  // spectrum of P
    Eigen::VectorXd mu;      // spectrum of Q
};

inline GramianSpectra gramian_spectra(const GramianPair& g) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(g.P, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eq(g.Q, Eigen::EigenvaluesOnly);
    return {ep.eigenvalues().reverse(), eq.eigenvalues().reverse()};
}

/// Explicit matrix of the vectorized flow operator, vec(L(Z)) = K vec(Z) with
/// K = A (x) I + I (x) A + sum_ij k_ij N_j (x) N_i. Dense n^2 x n^2; only
/// meant for cross-checks on small systems.
inline Eigen::MatrixXd vectorized_operator(const SignatureSDE& sys) {
    const auto n = sys.dim();
    if (n > 256)
        throw std::invalid_argument("vectorized_operator: n^2 x n^2 matrix would be too large");
    auto kron = [n](const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
        Eigen::MatrixXd K(n * n, n * n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                K.block(i * n, j * n, n, n) = X(i, j) * Y;
        return K;
    };
    Eigen::MatrixXd A(sys.A);
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd K = kron(I, A) + kron(A, I);
    const int q = static_cast<int>(sys.diffusion.size());
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) {
            const double k = sys.K.K(i, j);
            if (k != 0.0) K += k * kron(Eigen::MatrixXd(sys.diffusion[j]),
                                        Eigen::MatrixXd(sys.diffusion[i]));
        }
    return K;
}

namespace detail {

/// Adaptive Dormand-Prince RK45 on matrix-valued states. Drives any rhs; the
/// two oracle entry points below wrap it.
template <class Rhs>
Eigen::MatrixXd rk45_integrate(Rhs&& rhs, Eigen::MatrixXd S, double horizon, double tol) {
    double t = 0.0, h = horizon / 50.0;
    Eigen::MatrixXd k1 = rhs(S);
    int rejected_in_a_row = 0;
    while (t < horizon) {
        h = std::min(h, horizon - t);
        Eigen::MatrixXd k2 = rhs(S + h * (1.0 / 5) * k1);
        Eigen::MatrixXd k3 = rhs(S + h * ((3.0 / 40) * k1 + (9.0 / 40) * k2));
        Eigen::MatrixXd k4 = rhs(S + h * ((44.0 / 45) * k1 - (56.0 / 15) * k2 + (32.0 / 9) * k3));
        Eigen::MatrixXd k5 = rhs(S + h * ((19372.0 / 6561) * k1 - (25360.0 / 2187) * k2 +
                                          (64448.0 / 6561) * k3 - (212.0 / 729) * k4));
        Eigen::MatrixXd k6 =
            rhs(S + h * ((9017.0 / 3168) * k1 - (355.0 / 33) * k2 + (46732.0 / 5247) * k3 +
                         (49.0 / 176) * k4 - (5103.0 / 18656) * k5));
        Eigen::MatrixXd Snew = S + h * ((35.0 / 384) * k1 + (500.0 / 1113) * k3 +
                                        (125.0 / 192) * k4 - (2187.0 / 6784) * k5 +
                                        (11.0 / 84) * k6);
        Eigen::MatrixXd k7 = rhs(Snew);
        Eigen::MatrixXd err = h * ((71.0 / 57600) * k1 - (71.0 / 16695) * k3 + (71.0 / 1920) * k4 -
                                   (17253.0 / 339200) * k5 + (22.0 / 525) * k6 - (1.0 / 40) * k7);
        double scale = tol + tol * std::max(S.cwiseAbs().maxCoeff(), Snew.cwiseAbs().maxCoeff());
        double e = err.cwiseAbs().maxCoeff() / scale;
        if (e <= 1.0) {
            t += h;
            S = std::move(Snew);
            k1 = std::move(k7);  // first-same-as-last
            rejected_in_a_row = 0;
        } else if (++rejected_in_a_row > 60) {
            throw std::runtime_error("rk45_integrate: step size underflow");
        }
        double factor = 0.9 * std::pow(std::max(e, 1e-10), -0.2);
        h *= std::clamp(factor, 0.2, 5.0);
    }
    return S;
}

} // namespace detail

/// Terminal value of the moment flow dZ/dt = L(Z) (or the adjoint flow),
/// Z(0) = seed, by adaptive RK45 at local tolerance 1e-10. Validation route
/// that shares no code with the series.
inline Eigen::MatrixXd lyapunov_flow_rk45(const SignatureSDE& sys, const Eigen::MatrixXd& seed,
                                          double horizon, bool adjoint, double tol = 1e-10) {
    return detail::rk45_integrate(
        [&](const Eigen::MatrixXd& Z) { return lyapunov_apply(sys, Z, adjoint); }, seed, horizon,
        tol);
}

/// Gramian by quadrature of the same flow: integrate the augmented system
/// d/dt [Z; G] = [L(Z); Z], so G(T) = int_0^T Z(s) ds. The reference the
/// series is tested against.
inline Eigen::MatrixXd gramian_by_ode(const SignatureSDE& sys, const Eigen::MatrixXd& seed,
                                      double horizon, bool adjoint, double tol = 1e-10) {
    const auto n = sys.dim();
    Eigen::MatrixXd S0(2 * n, n);
    S0.topRows(n) = seed;
    S0.bottomRows(n).setZero();
    Eigen::MatrixXd S = detail::rk45_integrate(
        [&](const Eigen::MatrixXd& St) {
            Eigen::MatrixXd R(2 * n, n);
            R.topRows(n) = lyapunov_apply(sys, St.topRows(n), adjoint);
            R.bottomRows(n) = St.topRows(n);
            return R;
        },
        S0, horizon, tol);
    return S.bottomRows(n);
}

} // namespace sigmor
