#include <catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "sigmor/gramians.hpp"

using namespace sigmor;

namespace {

NoiseCovariance random_correlation(std::mt19937_64& rng, int q) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd G(q, q + 2);
    for (Eigen::Index i = 0; i < G.rows(); ++i)
        for (Eigen::Index j = 0; j < G.cols(); ++j) G(i, j) = g(rng);
    Eigen::MatrixXd C = G * G.transpose();
    Eigen::VectorXd s = C.diagonal().cwiseSqrt().cwiseInverse();
    return {s.asDiagonal() * C * s.asDiagonal()};
}

Eigen::MatrixXd random_row(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd L(1, n);
    for (Eigen::Index k = 0; k < n; ++k) L(0, k) = g(rng);
    return L;
}

Eigen::MatrixXd random_symmetric(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd Z(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) Z(i, j) = g(rng);
    return 0.5 * (Z + Z.transpose());
}

double rel_frob(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
    return (got - want).norm() / want.norm();
}

} // namespace

TEST_CASE("reachability Gramian closed form for the Brownian core", "[gramians]") {
    // d = 2, m = 1: state (1, t, B_t), so P(T) integrates the explicit second
    // moments: E[1] = 1, E[t B] = 0, E[B^2] = t.
    SignatureSDE sys = assemble_system(2, 1, NoiseCovariance::identity(1), Eigen::MatrixXd());
    const double T = 0.7;
    Eigen::MatrixXd P = gramian_P(sys, T);
    Eigen::MatrixXd want(3, 3);
    want << T, T * T / 2, 0,
            T * T / 2, T * T * T / 3, 0,
            0, 0, T * T / 2;
    CHECK(rel_frob(P, want) < 1e-15);

    // output on the empty word only: Q never propagates
    Eigen::MatrixXd Q = gramian_Q(sys, T);
    Eigen::MatrixXd wantQ = Eigen::MatrixXd::Zero(3, 3);
    wantQ(0, 0) = T;
    CHECK(rel_frob(Q, wantQ) < 1e-15);

    // output on the word "2": the adjoint flow feeds it back to the constant
    LinearFunctional ell;
    ell.add(Word{2}, 1.0);
    SignatureSDE sys2 = assemble_system(2, 1, NoiseCovariance::identity(1), ell);
    Eigen::MatrixXd Q2 = gramian_Q(sys2, T);
    Eigen::MatrixXd wantQ2 = Eigen::MatrixXd::Zero(3, 3);
    wantQ2(2, 2) = T;
    wantQ2(0, 0) = T * T / 2;
    CHECK(rel_frob(Q2, wantQ2) < 1e-15);
}

TEST_CASE("series matches RK45 quadrature of the moment flow", "[gramians]") {
    std::mt19937_64 rng(41);
    SignatureSDE sys = assemble_system(2, 2, NoiseCovariance::identity(1), random_row(rng, 7));
    const double T = 1.0;
    GramianPair g = make_gramians(sys, T);

    Eigen::MatrixXd Pref = gramian_by_ode(sys, sys.z * sys.z.transpose(), T, false);
    Eigen::MatrixXd Qref = gramian_by_ode(sys, sys.L.transpose() * sys.L, T, true);
    CHECK(rel_frob(g.P, Pref) < 1e-8);
    CHECK(rel_frob(g.Q, Qref) < 1e-8);
}

TEST_CASE("what the flow oracle itself integrates", "[gramians]") {
    // the moment flow is the terminating exponential series
    // Z(t) = sum_j t^j/j! L^j(Z0); RK45 must reproduce it
    std::mt19937_64 rng(43);
    SignatureSDE sys = assemble_system(3, 2, random_correlation(rng, 2), random_row(rng, 13));
    Eigen::MatrixXd Z0 = random_symmetric(rng, 13);
    for (bool adjoint : {false, true}) {
        Eigen::MatrixXd want = Z0;
        Eigen::MatrixXd term = Z0;
        double c = 1.0;
        for (int j = 1; j <= 2 * sys.m; ++j) {
            term = lyapunov_apply(sys, term, adjoint);
            c /= j;
            want += c * term;
        }
        Eigen::MatrixXd got = lyapunov_flow_rk45(sys, Z0, 1.0, adjoint);
        CHECK(rel_frob(got, want) < 1e-8);
    }
}

TEST_CASE("devectorized operator agrees with the Kronecker matrix", "[gramians]") {
    std::mt19937_64 rng(47);
    for (auto [d, m] : {std::pair{2, 2}, {3, 2}, {2, 3}, {2, 4}}) {
        SignatureSDE sys =
            assemble_system(d, m, random_correlation(rng, d - 1), random_row(rng, dim_truncated(d, m)));
        const auto n = sys.dim();
        Eigen::MatrixXd K = vectorized_operator(sys);

        for (int trial = 0; trial < 3; ++trial) {
            Eigen::MatrixXd Z = random_symmetric(rng, n);
            Eigen::MatrixXd LZ = lyapunov_apply(sys, Z);
            Eigen::VectorXd vec_direct = Eigen::Map<Eigen::VectorXd>(LZ.data(), n * n);
            Eigen::VectorXd vec_kron = K * Eigen::Map<Eigen::VectorXd>(Z.data(), n * n);
            double scale = std::max(1.0, vec_direct.cwiseAbs().maxCoeff());
            CHECK((vec_direct - vec_kron).cwiseAbs().maxCoeff() <= 1e-12 * scale);

            // adjoint operator is the transpose in the vec metric
            Eigen::MatrixXd LsZ = lyapunov_apply(sys, Z, true);
            Eigen::VectorXd vec_adj = Eigen::Map<Eigen::VectorXd>(LsZ.data(), n * n);
            Eigen::VectorXd vec_kron_t = K.transpose() * Eigen::Map<Eigen::VectorXd>(Z.data(), n * n);
            CHECK((vec_adj - vec_kron_t).cwiseAbs().maxCoeff() <= 1e-12 * scale);
        }

        // nilpotency of the vectorized operator: K^(2m+1) = 0
        Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n * n, n * n);
        for (int j = 0; j < 2 * m + 1; ++j) power = K * power;
        CHECK(power.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("gramians are symmetric positive semidefinite", "[gramians]") {
    std::mt19937_64 rng(53);
    for (auto [d, m] : {std::pair{2, 3}, {3, 3}, {4, 2}}) {
        SignatureSDE sys =
            assemble_system(d, m, random_correlation(rng, d - 1), random_row(rng, dim_truncated(d, m)));
        GramianPair g = make_gramians(sys, 1.3);
        CHECK((g.P - g.P.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK((g.Q - g.Q.transpose()).cwiseAbs().maxCoeff() == 0.0);
        GramianSpectra sp = gramian_spectra(g);
        CHECK(sp.lambda[sp.lambda.size() - 1] >= -1e-12 * sp.lambda[0]);
        CHECK(sp.mu[sp.mu.size() - 1] >= -1e-12 * sp.mu[0]);
        // descending order
        for (Eigen::Index k = 1; k < sp.lambda.size(); ++k) {
            CHECK(sp.lambda[k] <= sp.lambda[k - 1]);
            CHECK(sp.mu[k] <= sp.mu[k - 1]);
        }
    }
}

TEST_CASE("gramian input validation", "[gramians]") {
    SignatureSDE sys = assemble_system(2, 2, NoiseCovariance::identity(1), Eigen::MatrixXd());
    CHECK_THROWS_AS(gramian_P(sys, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(gramian_P(sys, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(lyapunov_apply(sys, Eigen::MatrixXd::Zero(3, 3)), std::invalid_argument);

    SignatureSDE big = assemble_system(4, 5, NoiseCovariance::identity(3), Eigen::MatrixXd());
    CHECK_THROWS_AS(vectorized_operator(big), std::invalid_argument);
}
