#include <catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "sigmor/balancing.hpp"

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

Eigen::MatrixXd random_psd(std::mt19937_64& rng, Eigen::Index n, Eigen::Index r) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd R(n, r);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < r; ++j) R(i, j) = g(rng);
    return R * R.transpose();
}

} // namespace

TEST_CASE("psd factorization", "[balancing]") {
    std::mt19937_64 rng(61);
    Eigen::MatrixXd M = random_psd(rng, 12, 12);
    Eigen::MatrixXd F = factor_psd(M);
    CHECK(F.cols() == 12);
    CHECK((F * F.transpose() - M).norm() <= 1e-12 * M.norm());

    // numerical rank detection
    Eigen::MatrixXd low = random_psd(rng, 12, 4);
    Eigen::MatrixXd Fl = factor_psd(low, 1e-10);
    CHECK(Fl.cols() == 4);
    CHECK((Fl * Fl.transpose() - low).norm() <= 1e-10 * low.norm());

    // slightly negative eigenvalues are clipped, genuinely indefinite throws
    Eigen::MatrixXd tiny = Eigen::MatrixXd::Zero(2, 2);
    tiny(0, 0) = 1.0;
    tiny(1, 1) = -1e-16;
    CHECK(factor_psd(tiny).cols() == 1);

    Eigen::MatrixXd indef = Eigen::MatrixXd::Zero(2, 2);
    indef(0, 0) = 1.0;
    indef(1, 1) = -0.5;
    CHECK_THROWS_AS(factor_psd(indef), std::invalid_argument);
    CHECK_THROWS_AS(factor_psd(Eigen::MatrixXd::Ones(2, 3)), std::invalid_argument);
}

TEST_CASE("balancing a diagonal hand example", "[balancing]") {
    Eigen::MatrixXd P = Eigen::Vector2d(4.0, 1.0).asDiagonal();
    Eigen::MatrixXd Q = Eigen::Vector2d(9.0, 1.0).asDiagonal();
    BalancingResult bal = balance(P, Q);
    REQUIRE(bal.rank == 2);
    // sigma_k = sqrt(eig(PQ)) = (6, 1)
    CHECK_THAT(bal.sigma[0], Catch::Matchers::WithinRel(6.0, 1e-14));
    CHECK_THAT(bal.sigma[1], Catch::Matchers::WithinRel(1.0, 1e-14));

    Eigen::MatrixXd WtV = bal.W.transpose() * bal.V;
    CHECK((WtV - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
    Eigen::MatrixXd gP = bal.W.transpose() * P * bal.W;
    Eigen::MatrixXd gQ = bal.V.transpose() * Q * bal.V;
    CHECK((gP - bal.sigma.asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((gQ - bal.sigma.asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("balancing invariants on system Gramians", "[balancing]") {
    std::mt19937_64 rng(67);
    std::normal_distribution<double> g;
    for (auto [d, m] : {std::pair{2, 3}, {3, 2}}) {
        const auto n = dim_truncated(d, m);
        Eigen::MatrixXd L(1, n);
        for (Eigen::Index k = 0; k < n; ++k) L(0, k) = g(rng);
        SignatureSDE sys = assemble_system(d, m, random_correlation(rng, d - 1), L);
        GramianPair gr = make_gramians(sys, 1.0);
        BalancingResult bal = balance(gr.P, gr.Q, 1e-12);
        REQUIRE(bal.rank >= 1);
        const auto r = bal.rank;

        Eigen::MatrixXd WtV = bal.W.transpose() * bal.V;
        CHECK((WtV - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff() < 1e-9);

        Eigen::MatrixXd gP = bal.W.transpose() * gr.P * bal.W;
        Eigen::MatrixXd gQ = bal.V.transpose() * gr.Q * bal.V;
        Eigen::MatrixXd S = bal.sigma.head(r).asDiagonal();
        CHECK((gP - S).cwiseAbs().maxCoeff() < 1e-9 * bal.sigma[0]);
        CHECK((gQ - S).cwiseAbs().maxCoeff() < 1e-9 * bal.sigma[0]);

        for (Eigen::Index k = 1; k < bal.sigma.size(); ++k)
            CHECK(bal.sigma[k] <= bal.sigma[k - 1]);

        // hankel_spectrum agrees on the well-conditioned part and pads zeros
        Eigen::VectorXd h = hankel_spectrum(gr.P, gr.Q);
        REQUIRE(h.size() == n);
        for (Eigen::Index k = 0; k < r; ++k)
            if (bal.sigma[k] > 1e-6 * bal.sigma[0])
                CHECK_THAT(h[k], Catch::Matchers::WithinRel(bal.sigma[k], 1e-7));
        for (Eigen::Index k = bal.sigma.size(); k < n; ++k) CHECK(h[k] >= 0.0);
    }
}

TEST_CASE("reduction bookkeeping", "[balancing]") {
    std::mt19937_64 rng(71);
    std::normal_distribution<double> g;
    const int d = 3, m = 2;
    const auto n = dim_truncated(d, m);
    Eigen::MatrixXd L(1, n);
    for (Eigen::Index k = 0; k < n; ++k) L(0, k) = g(rng);
    SignatureSDE sys = assemble_system(d, m, random_correlation(rng, d - 1), L);
    GramianPair gr = make_gramians(sys, 0.8);
    BalancingResult bal = balance(gr.P, gr.Q);
    REQUIRE(bal.rank >= 2);

    ReducedSystem red = reduce(sys, bal, 2);
    CHECK(red.A.rows() == 2);
    CHECK(red.A.cols() == 2);
    CHECK(red.diffusion.size() == sys.diffusion.size());
    CHECK(red.z.size() == 2);
    CHECK(red.L.cols() == 2);
    CHECK(red.K.K == sys.K.K);

    CHECK_THROWS_AS(reduce(sys, bal, 0), std::invalid_argument);
    CHECK_THROWS_AS(reduce(sys, bal, bal.rank + 1), std::invalid_argument);
}

TEST_CASE("output seen only through the empty word reduces to dimension one", "[balancing]") {
    // Y = <e, x> = 1 is constant; Q has rank one and the one-dimensional
    // reduced system reproduces the output exactly: L~ kills both the drift
    // and the noise.
    SignatureSDE sys = assemble_system(2, 2, NoiseCovariance::identity(1), Eigen::MatrixXd());
    GramianPair gr = make_gramians(sys, 1.0);
    BalancingResult bal = balance(gr.P, gr.Q, 1e-12);
    REQUIRE(bal.rank == 1);

    ReducedSystem red = reduce(sys, bal, 1);
    CHECK_THAT(red.L(0, 0) * red.z[0], Catch::Matchers::WithinRel(1.0, 1e-12));
    CHECK(std::abs(red.L(0, 0) * red.A(0, 0)) < 1e-12);
    for (const auto& N : red.diffusion) CHECK(std::abs(red.L(0, 0) * N(0, 0)) < 1e-12);
}

TEST_CASE("degenerate balancing inputs", "[balancing]") {
    std::mt19937_64 rng(3);
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(3, 3);
    Eigen::MatrixXd P = random_psd(rng, 3, 3);
    CHECK_THROWS_AS(balance(Z, Z), std::invalid_argument);
    CHECK_THROWS_AS(balance(P, Eigen::MatrixXd::Zero(4, 4)), std::invalid_argument);
}
