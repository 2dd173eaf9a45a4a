#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sigmor/balancing.hpp"
#include "sigmor/gramians.hpp"
#include "sigmor/mc.hpp"
#include "sigmor/tensor.hpp"

using namespace sigmor;

namespace {

// Minimal dense system for driving the Euler scheme with hand-picked matrices.
struct DenseSystem {
    Eigen::MatrixXd A;
    std::vector<Eigen::MatrixXd> diffusion;
    NoiseCovariance K;
    Eigen::VectorXd z;
    Eigen::MatrixXd L;

    std::int64_t dim() const { return A.rows(); }
    int outputs() const { return static_cast<int>(L.rows()); }
};

Eigen::MatrixXd random_row(std::int64_t n, std::uint64_t seed) {
    Eigen::MatrixXd L(1, n);
    NormalSource rng(seed);
    rng.fill(L);
    return L;
}

} // namespace

TEST_CASE("grid times accumulate step by step", "[mc]") {
    SimulationGrid grid{0.7, 7, 3, 1};
    CHECK_THAT(grid.dt(), Catch::Matchers::WithinRel(0.1, 1e-15));
    const auto t = grid.times();
    REQUIRE(t.size() == 8);
    CHECK(t[0] == 0.0);
    for (std::size_t j = 1; j < t.size(); ++j) CHECK(t[j] == t[j - 1] + grid.dt());
    CHECK_THAT(t.back(), Catch::Matchers::WithinAbs(0.7, 1e-15));

    CHECK_THROWS_AS((SimulationGrid{0.0, 4, 1, 0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((SimulationGrid{1.0, 0, 1, 0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((SimulationGrid{1.0, 4, 0, 0}.validate()), std::invalid_argument);
}

TEST_CASE("pairwise statistics match a direct evaluation", "[mc]") {
    Eigen::VectorXd x(1001);
    NormalSource rng(404);
    rng.fill(x);
    long double s = 0.0L;
    for (Eigen::Index i = 0; i < x.size(); ++i) s += x[i];
    const double mean = static_cast<double>(s / x.size());
    long double v = 0.0L;
    for (Eigen::Index i = 0; i < x.size(); ++i) v += (x[i] - mean) * (x[i] - mean);
    const double se = std::sqrt(static_cast<double>(v) / (x.size() - 1) / x.size());

    const auto stat = mc_stats(x);
    CHECK_THAT(stat.mean, Catch::Matchers::WithinAbs(mean, 1e-13));
    CHECK_THAT(stat.se, Catch::Matchers::WithinRel(se, 1e-12));

    Eigen::VectorXd quad(4);
    quad << 1.0, 3.0, 2.0, 4.0;
    const auto avg = pair_averages(quad);
    REQUIRE(avg.size() == 2);
    CHECK(avg[0] == 2.0);
    CHECK(avg[1] == 3.0);
    CHECK_THROWS_AS(pair_averages(Eigen::VectorXd::Ones(3)), std::invalid_argument);

    Eigen::VectorXd even = x.head(1000);
    const auto anti = mc_stats(even, true);
    const auto direct = mc_stats(pair_averages(even));
    CHECK(anti.mean == direct.mean);
    CHECK(anti.se == direct.se);
}

TEST_CASE("increment blocks are chunk and thread independent", "[mc]") {
    Eigen::MatrixXd K(2, 2);
    K << 1.0, 0.7, 0.7, 1.0;
    CorrelatedBrownian cb(K, 42, 5);
    CHECK(cb.drivers() == 2);

    const auto whole = cb.increments(4, 0.25, 0, 10);
    REQUIRE(whole.rows() == 8);
    REQUIRE(whole.cols() == 10);
    const auto left = cb.increments(4, 0.25, 0, 4);
    const auto right = cb.increments(4, 0.25, 4, 10);
    CHECK((whole.leftCols(4) - left).cwiseAbs().maxCoeff() == 0.0);
    CHECK((whole.rightCols(6) - right).cwiseAbs().maxCoeff() == 0.0);

    CorrelatedBrownian other(K, 42, 6);
    CHECK((whole - other.increments(4, 0.25, 0, 10)).cwiseAbs().maxCoeff() > 0.0);

    CorrelatedBrownian anti(K, 42, 5, true);
    const auto ablock = anti.increments(4, 0.25, 0, 8);
    for (int k = 0; k < 4; ++k)
        CHECK((ablock.col(2 * k) + ablock.col(2 * k + 1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((ablock.col(0) - whole.col(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("increment covariance matches the driver correlation", "[mc]") {
    Eigen::MatrixXd K(2, 2);
    K << 1.0, -0.3, -0.3, 1.0;
    CorrelatedBrownian cb(K, 7, 0);
    const double dt = 0.5;
    const auto block = cb.increments(1, dt, 0, 20000);
    Eigen::MatrixXd centered = block.colwise() - block.rowwise().mean();
    Eigen::MatrixXd cov = centered * centered.transpose() / (block.cols() - 1.0);
    CHECK_THAT(cov(0, 0), Catch::Matchers::WithinAbs(dt, 0.015));
    CHECK_THAT(cov(1, 1), Catch::Matchers::WithinAbs(dt, 0.015));
    CHECK_THAT(cov(0, 1), Catch::Matchers::WithinAbs(-0.3 * dt, 0.015));
}

TEST_CASE("euler reproduces the matrix exponential when diffusion vanishes", "[mc]") {
    DenseSystem sys;
    sys.A.resize(2, 2);
    sys.A << 0.0, 1.0, -1.0, 0.0;
    sys.diffusion = {Eigen::MatrixXd::Zero(2, 2)};
    sys.K = NoiseCovariance::identity(1);
    sys.z = Eigen::Vector2d(1.0, 0.0);
    sys.L = Eigen::MatrixXd::Identity(2, 2);

    auto terminal_error = [&](std::int64_t steps) {
        SimulationGrid grid{1.0, steps, 3, 99};
        const auto res = simulate_linear_sde(sys, grid, nullptr, 1, true);
        const double y0 = res.outputs[0](0, 0);
        const double y1 = res.outputs[1](0, 0);
        // All paths coincide because the noise enters through a zero matrix.
        CHECK(res.outputs[0](0, 1) == y0);
        CHECK(res.outputs[1](0, 2) == y1);
        return std::hypot(y0 - std::cos(1.0), y1 + std::sin(1.0));
    };
    const double e100 = terminal_error(100);
    const double e200 = terminal_error(200);
    CHECK(e100 < 0.02);
    CHECK(e200 / e100 > 0.35);
    CHECK(e200 / e100 < 0.65);
}

TEST_CASE("coordinates tied to the clock stay exact", "[mc]") {
    auto sys = assemble_system(2, 3, NoiseCovariance::identity(1),
                               Eigen::MatrixXd(Eigen::MatrixXd::Identity(15, 15)));
    SimulationGrid grid{0.75, 96, 5, 11};
    const auto res = simulate_linear_sde(sys, grid);
    REQUIRE(res.outputs.size() == 15);
    REQUIRE(res.outputs[0].rows() == 97);

    const auto t = grid.times();
    for (std::int64_t p = 0; p < grid.n_paths; ++p)
        for (std::int64_t j = 0; j <= grid.steps; ++j) {
            CHECK(res.outputs[0](j, p) == 1.0);
            CHECK(res.outputs[1](j, p) == t[static_cast<std::size_t>(j)]);
        }
}

TEST_CASE("simulation output is identical for any thread count", "[mc]") {
    auto sys = assemble_system(2, 2, NoiseCovariance::identity(1), random_row(7, 21));
    SimulationGrid grid{1.0, 32, 700, 77};
    const auto a = simulate_linear_sde(sys, grid, nullptr, 1);
    const auto b = simulate_linear_sde(sys, grid, nullptr, 3);
    REQUIRE(a.outputs.size() == 1);
    CHECK((a.outputs[0] - b.outputs[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.nonfinite_paths.empty());
    CHECK(b.nonfinite_paths.empty());

    const auto c = simulate_linear_sde(sys, grid, nullptr, 2, true);
    CHECK((c.outputs[0].row(0) - a.outputs[0].row(grid.steps)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reduction at full numerical rank preserves the paths", "[mc]") {
    auto sys = assemble_system(2, 3, NoiseCovariance::identity(1), random_row(15, 5));
    const auto g = make_gramians(sys, 1.0);
    const auto bal = balance(g.P, g.Q);
    REQUIRE(bal.rank >= 1);
    const auto red = reduce(sys, bal, bal.rank);
    CHECK(red.d == 2);
    CHECK(red.m == 3);

    SimulationGrid grid{1.0, 64, 512, 7};
    const auto err = l2_output_error(sys, red, grid);
    CHECK(err.n_paths == 512);
    CHECK(err.ref_norm > 0.0);
    CHECK(err.relative <= 1e-10);
}

TEST_CASE("shared-noise comparison rejects mismatched covariances", "[mc]") {
    auto full = assemble_system(2, 2, NoiseCovariance::identity(1), random_row(7, 1));
    auto other = assemble_system(3, 2, NoiseCovariance::identity(2), random_row(13, 2));
    SimulationGrid grid{1.0, 8, 16, 0};
    CHECK_THROWS_AS(l2_output_error(full, other, grid), std::invalid_argument);

    auto scaled = full;
    scaled.K.K(0, 0) = 0.9;
    CHECK_THROWS_AS(l2_output_error(full, scaled, grid), std::invalid_argument);
}

TEST_CASE("lognormal benchmark price", "[mc]") {
    CHECK_THAT(bs_call(1.0, 1.0, 0.2, 1.0), Catch::Matchers::WithinAbs(0.0796557, 5e-7));

    Eigen::VectorXd xi(100000);
    NormalSource rng(9001);
    rng.fill(xi);
    Eigen::VectorXd spots = (0.2 * xi.array() - 0.02).exp();
    const auto priced = price_european_call(spots, 1.0);
    CHECK(priced.se > 1e-4);
    CHECK(priced.se < 1e-3);
    CHECK(std::abs(priced.price - 0.0796557) < 3.0 * priced.se);
}

TEST_CASE("doubling the step count moves the price less than the noise", "[mc]") {
    DenseSystem gbm;
    gbm.A = Eigen::MatrixXd::Zero(1, 1);
    gbm.diffusion = {Eigen::MatrixXd::Constant(1, 1, 0.2)};
    gbm.K = NoiseCovariance::identity(1);
    gbm.z = Eigen::VectorXd::Ones(1);
    gbm.L = Eigen::MatrixXd::Ones(1, 1);

    auto price_at = [&](std::int64_t steps) {
        SimulationGrid grid{1.0, steps, 20000, 31337};
        const auto res = simulate_linear_sde(gbm, grid, nullptr, 1, true);
        return price_european_call(res.outputs[0].row(0).transpose(), 1.0);
    };
    const auto coarse = price_at(32);
    const auto fine = price_at(64);
    const double combined = std::sqrt(coarse.se * coarse.se + fine.se * fine.se);
    CHECK(std::abs(coarse.price - fine.price) < 3.0 * combined);
}

TEST_CASE("implied vol inverts Black-Scholes prices", "[mc]") {
    CHECK_THAT(implied_vol(bs_call(1.0, 1.0, 0.3, 0.5), 1.0, 1.0, 0.5),
               Catch::Matchers::WithinAbs(0.3, 1e-10));

    // A round trip is only testable where the binary64 price actually resolves
    // the vol: the price must sit strictly between intrinsic and spot, and the
    // noise floor of the price formula (a few eps of its largest term) must be
    // well under vega * 1e-8.
    int skipped = 0;
    const double eps = std::numeric_limits<double>::epsilon();
    for (double vol : {0.05, 0.2, 0.5, 1.0})
        for (double strike : {0.5, 0.9, 1.0, 1.1, 2.0})
            for (double mat : {1.0 / 12.0, 0.5, 2.0}) {
                const double price = bs_call(1.0, strike, vol, mat);
                const double intrinsic = std::max(1.0 - strike, 0.0);
                const double sq = vol * std::sqrt(mat);
                const double noise = 4.0 * eps * norm_cdf(std::log(1.0 / strike) / sq + 0.5 * sq);
                if (!(price > intrinsic) || !(price < 1.0) ||
                    noise / bs_vega(1.0, strike, vol, mat) > 2e-9) {
                    ++skipped;
                    continue;
                }
                const double iv = implied_vol(price, 1.0, strike, mat);
                CHECK_THAT(iv, Catch::Matchers::WithinAbs(vol, 1e-8));
            }
    CHECK(skipped == 6);
}

TEST_CASE("implied vol rejects out-of-bounds prices", "[mc]") {
    try {
        implied_vol(0.09, 1.0, 0.9, 1.0);
        FAIL("expected ImpliedVolError");
    } catch (const ImpliedVolError& e) {
        CHECK(e.kind == ImpliedVolError::Kind::below_intrinsic);
        CHECK_THAT(e.bound, Catch::Matchers::WithinAbs(0.1, 1e-15));
        CHECK(e.price == 0.09);
    }
    try {
        implied_vol(1.01, 1.0, 1.0, 1.0);
        FAIL("expected ImpliedVolError");
    } catch (const ImpliedVolError& e) {
        CHECK(e.kind == ImpliedVolError::Kind::above_spot);
        CHECK(e.bound == 1.0);
    }
    try {
        implied_vol(1e-300, 1.0, 1.0, 1.0);
        FAIL("expected ImpliedVolError");
    } catch (const ImpliedVolError& e) {
        CHECK(e.kind == ImpliedVolError::Kind::bracket);
        CHECK(e.bound == bs_call(1.0, 1.0, kImpliedVolLo, 1.0));
    }
}

TEST_CASE("deep out-of-the-money price is inverted or reported", "[mc]") {
    const double price = 1e-10;
    try {
        const double iv = implied_vol(price, 1.0, 1.2, 1.0 / 12.0);
        CHECK(iv > kImpliedVolLo);
        CHECK(iv < kImpliedVolHi);
        CHECK(std::abs(bs_call(1.0, 1.2, iv, 1.0 / 12.0) - price) <= 1e-12);
    } catch (const ImpliedVolError& e) {
        const bool reported = e.kind == ImpliedVolError::Kind::bracket ||
                              e.kind == ImpliedVolError::Kind::no_convergence;
        CHECK(reported);
    }
}

TEST_CASE("smile construction and error report", "[mc]") {
    const double vol = 0.25, mat = 0.5;
    Eigen::VectorXd xi(40000);
    NormalSource rng(2024);
    rng.fill(xi);
    Eigen::VectorXd spots =
        (vol * std::sqrt(mat) * xi.array() - 0.5 * vol * vol * mat).exp();

    const auto strikes = strike_grid(mat);
    const auto smile = make_smile(spots, 1.0, mat, strikes);
    REQUIRE(smile.points.size() == strikes.size());
    CHECK(smile.failures == 0);
    for (const auto& pt : smile.points) {
        REQUIRE(pt.ok);
        CHECK(pt.iv_se > 0.0);
        CHECK(std::abs(pt.iv - vol) < 4.0 * pt.iv_se);
    }

    const auto rep = iv_error_report(smile, smile);
    CHECK(rep.skipped == 0);
    CHECK(rep.max_rel_error == 0.0);
    CHECK(rep.max_bar > 0.0);

    auto wrong = smile;
    wrong.points.pop_back();
    CHECK_THROWS_AS(iv_error_report(smile, wrong), std::invalid_argument);
}

TEST_CASE("strike ladder", "[mc]") {
    const auto quarter = strike_grid(0.25);
    REQUIRE(quarter.size() == 21);
    CHECK_THAT(quarter.front(), Catch::Matchers::WithinAbs(0.8944272, 1e-7));
    for (std::size_t j = 1; j < quarter.size(); ++j) CHECK(quarter[j] > quarter[j - 1]);

    const auto year = strike_grid(1.0);
    CHECK_THAT(year.front(), Catch::Matchers::WithinRel(0.8, 1e-14));
    CHECK_THAT(year.back(), Catch::Matchers::WithinRel(1.2, 1e-14));
}

TEST_CASE("time-averaged squared projections match Gramian eigenvalues", "[mc]") {
    auto base = assemble_system(2, 2, NoiseCovariance::identity(1), random_row(7, 3));
    const Eigen::MatrixXd P = gramian_P(base, 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    const double lambda = es.eigenvalues()(6);
    const Eigen::VectorXd pk = es.eigenvectors().col(6);
    REQUIRE(lambda > 0.0);

    auto sys = base;
    sys.L = pk.transpose();
    SimulationGrid grid{1.0, 512, 10000, 515};
    const auto res = simulate_linear_sde(sys, grid, nullptr, 1);
    const auto w = detail::trapezoid_weights(grid.steps, grid.dt());
    Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
    Eigen::VectorXd integrals =
        (res.outputs[0].array().square().colwise() * wv.array()).colwise().sum().transpose();
    const auto stat = mc_stats(integrals);
    INFO("lambda=" << lambda << " mc=" << stat.mean << " se=" << stat.se);
    CHECK(std::abs(stat.mean - lambda) < 3.0 * stat.se);
}

TEST_CASE("euler tracks the signature of the interpolated path", "[mc]") {
    BasisOrder ord(2, 3);
    auto sys = assemble_system(2, 3, NoiseCovariance::identity(1), random_row(15, 8));

    auto run = [&](const Eigen::VectorXd& incs) {
        const std::int64_t steps = incs.size();
        const double dt = 1.0 / static_cast<double>(steps);
        PathSample path;
        path.times.resize(steps + 1);
        path.values.resize(steps + 1, 2);
        path.times[0] = 0.0;
        path.values(0, 0) = 0.0;
        path.values(0, 1) = 0.0;
        for (std::int64_t j = 0; j < steps; ++j) {
            path.times[j + 1] = path.times[j] + dt;
            path.values(j + 1, 0) = path.times[j + 1];
            path.values(j + 1, 1) = path.values(j, 1) + incs[j];
        }
        const auto sig = path_signature(path, ord);

        Eigen::MatrixXd B(steps, 1);
        B.col(0) = incs;
        Eigen::VectorXd terminal;
        euler_chunk(sys, dt, steps, B, [&](std::int64_t j, const Eigen::MatrixXd& X) {
            if (j == steps) terminal = X.col(0);
        });
        return (terminal - sig.coeffs).squaredNorm();
    };

    // The leading error is a single near-Gaussian sum per path, so only the
    // mean-square error over many draws shows the sqrt(h) rate.
    const std::int64_t fine = 128;
    const double h = 1.0 / static_cast<double>(fine);
    double mse_fine = 0.0, mse_coarse = 0.0;
    const int reps = 64;
    for (int rep = 0; rep < reps; ++rep) {
        NormalSource rng(1000 + static_cast<std::uint64_t>(rep));
        Eigen::VectorXd dw(fine);
        for (std::int64_t j = 0; j < fine; ++j) dw[j] = std::sqrt(h) * rng();
        Eigen::VectorXd coarse(fine / 2);
        for (std::int64_t j = 0; j < fine / 2; ++j) coarse[j] = dw[2 * j] + dw[2 * j + 1];
        mse_fine += run(dw);
        mse_coarse += run(coarse);
    }
    const double rms_fine = std::sqrt(mse_fine / reps);
    const double rms_coarse = std::sqrt(mse_coarse / reps);
    INFO("coarse=" << rms_coarse << " fine=" << rms_fine);
    CHECK(rms_fine < rms_coarse);
    CHECK(rms_fine / rms_coarse < 0.9);
    CHECK(rms_fine < 0.5);
}
