#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sigmor/mc.hpp"
#include "sigmor/parallel.hpp"
#include "sigmor/rng.hpp"
#include "sigmor/system.hpp"

namespace sigmor {

/// Two-factor forward-variance model. The instantaneous variance is
///   v_t = xi0 * exp(alpha * (w1 Y1 + w2 Y2) - alpha^2 Var[w1 Y1 + w2 Y2] / 2)
/// with OU factors dY_i = -k_i Y_i dt + dW_i starting at zero, weights
/// w1 = theta1, w2 = 1 - theta1, and alpha = omega / sqrt(sum w_i w_j rho_ij).
/// The spot follows dS = sqrt(v) S dZ with corr(Z, W_i) = rho_s_i.
struct BergomiConfig {
    double omega = 3.0;
    double k1 = 2.63;
    double k2 = 0.42;
    double theta1 = 0.69;
    double rho12 = 0.7;
    double rho_s1 = -0.9;
    double rho_s2 = -0.9;
    double spot = 1.0;
    double xi0 = 0.04;

    double w1() const { return theta1; }
    double w2() const { return 1.0 - theta1; }

    double alpha() const {
        const double s = w1() * w1() + w2() * w2() + 2.0 * w1() * w2() * rho12;
        return omega / std::sqrt(s);
    }

    /// Correlation of the drivers (Z, W1, W2), the letters 2..4 of the
    /// time-extended alphabet.
    NoiseCovariance noise_covariance() const {
        Eigen::MatrixXd K(3, 3);
        K << 1.0, rho_s1, rho_s2,
             rho_s1, 1.0, rho12,
             rho_s2, rho12, 1.0;
        return {K};
    }

    void validate() const {
        if (!(spot > 0.0)) throw std::invalid_argument("BergomiConfig: spot must be positive");
        if (!(xi0 > 0.0)) throw std::invalid_argument("BergomiConfig: xi0 must be positive");
        if (!(k1 > 0.0) || !(k2 > 0.0))
            throw std::invalid_argument("BergomiConfig: mean reversions must be positive");
        if (!(omega >= 0.0)) throw std::invalid_argument("BergomiConfig: omega must be nonnegative");
        for (double r : {rho12, rho_s1, rho_s2})
            if (!(r >= -1.0 && r <= 1.0))
                throw std::invalid_argument("BergomiConfig: correlations must lie in [-1, 1]");
        noise_covariance().validate(1e-12);
        const double s = w1() * w1() + w2() * w2() + 2.0 * w1() * w2() * rho12;
        if (!(s > 0.0))
            throw std::invalid_argument("BergomiConfig: factor weights give zero variance normalization");
    }
};

/// Rough forward-variance model:
///   v_t = xi0 * exp(eta * What_t - eta^2 t^{2H} / 2),
///   What_t = sqrt(2H) int_0^t (t-s)^{H-1/2} dW_s,
/// spot dS = sqrt(v) S dZ with corr(Z, W) = rho.
struct RoughBergomiConfig {
    double hurst = 0.3;
    double eta = 2.3;
    double rho = -0.9;
    double spot = 1.0;
    double xi0 = 0.04;

    NoiseCovariance noise_covariance() const {
        Eigen::MatrixXd K(2, 2);
        K << 1.0, rho, rho, 1.0;
        return {K};
    }

    void validate() const {
        if (!(spot > 0.0)) throw std::invalid_argument("RoughBergomiConfig: spot must be positive");
        if (!(xi0 > 0.0)) throw std::invalid_argument("RoughBergomiConfig: xi0 must be positive");
        if (!(hurst > 0.0 && hurst < 1.0))
            throw std::invalid_argument("RoughBergomiConfig: hurst must lie in (0, 1)");
        if (!(eta >= 0.0)) throw std::invalid_argument("RoughBergomiConfig: eta must be nonnegative");
        if (!(rho >= -1.0 && rho <= 1.0))
            throw std::invalid_argument("RoughBergomiConfig: rho must lie in [-1, 1]");
    }
};

/// One simulated block of paths. `spot` and `variance` have one row per
/// stored time (the full grid, or the terminal time only) and one column per
/// path. `increments`, when requested, stacks the driver increments the way
/// euler_chunk consumes them: row j*q + i is driver i over step j.
struct ModelChunk {
    Eigen::MatrixXd spot;
    Eigen::MatrixXd variance;
    Eigen::MatrixXd increments;
};

struct ModelPaths {
    std::vector<double> times;
    Eigen::MatrixXd spot;
    Eigen::MatrixXd variance;
};

namespace detail {

// 16-point Gauss-Legendre rule on [-1, 1], positive half.
inline constexpr double kGL16Nodes[8] = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
    0.7554044083550030, 0.8656312023878318, 0.9445750230732326, 0.9894009349916499};
inline constexpr double kGL16Weights[8] = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

template <class F>
double gauss_legendre_16(F&& f, double a, double b) {
    const double c = 0.5 * (a + b), r = 0.5 * (b - a);
    double s = 0.0;
    for (int k = 0; k < 8; ++k)
        s += kGL16Weights[k] * (f(c - r * kGL16Nodes[k]) + f(c + r * kGL16Nodes[k]));
    return r * s;
}

/// int_0^X (x^{1/p} + delta)^{H - 1/2} dx for delta > 0, by Gauss-Legendre on
/// dyadically shrinking panels toward the x = 0 endpoint where x^{1/p} has
/// unbounded derivatives.
inline double singular_panel_integral(double X, double delta, double hurst, double p) {
    if (X <= 0.0) return 0.0;
    const double a = hurst - 0.5;
    auto f = [&](double x) { return std::pow(std::pow(x, 1.0 / p) + delta, a); };
    double total = 0.0;
    double hi = X;
    for (int k = 0; k < 48; ++k) {
        const double lo = 0.5 * hi;
        total += gauss_legendre_16(f, lo, hi);
        hi = lo;
    }
    total += gauss_legendre_16(f, 0.0, hi);
    return total;
}

} // namespace detail

/// Covariance of (What_{t_1}, ..., What_{t_M}, dW_0, ..., dW_{M-1}) for the
/// Riemann-Liouville kernel on a uniform grid with step h = horizon / steps.
inline Eigen::MatrixXd rough_joint_covariance(double hurst, double horizon, std::int64_t steps) {
    if (!(horizon > 0.0) || steps < 1)
        throw std::invalid_argument("rough_joint_covariance: need positive horizon and steps");
    if (!(hurst > 0.0 && hurst < 1.0))
        throw std::invalid_argument("rough_joint_covariance: hurst must lie in (0, 1)");
    const std::int64_t M = steps;
    const double h = horizon / static_cast<double>(M);
    const double p = hurst + 0.5;
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(2 * M, 2 * M);
    std::vector<double> t(static_cast<std::size_t>(M) + 1, 0.0);
    for (std::int64_t j = 1; j <= M; ++j) t[static_cast<std::size_t>(j)] = t[static_cast<std::size_t>(j - 1)] + h;

    for (std::int64_t i = 1; i <= M; ++i) {
        const double ti = t[static_cast<std::size_t>(i)];
        C(i - 1, i - 1) = std::pow(ti, 2.0 * hurst);
        for (std::int64_t j = i + 1; j <= M; ++j) {
            const double delta = t[static_cast<std::size_t>(j)] - ti;
            const double val = (2.0 * hurst / p) *
                               detail::singular_panel_integral(std::pow(ti, p), delta, hurst, p);
            C(i - 1, j - 1) = val;
            C(j - 1, i - 1) = val;
        }
    }
    const double hp = std::pow(h, p);
    const double scale = std::sqrt(2.0 * hurst) / p;
    for (std::int64_t i = 1; i <= M; ++i)
        for (std::int64_t j = 0; j < i; ++j) {
            const double steps_away = static_cast<double>(i - j);
            const double val = scale * hp *
                               (std::pow(steps_away, p) - std::pow(steps_away - 1.0, p));
            C(i - 1, M + j) = val;
            C(M + j, i - 1) = val;
        }
    for (std::int64_t j = 0; j < M; ++j) C(M + j, M + j) = h;
    return C;
}

class BergomiSimulator {
public:
    explicit BergomiSimulator(const BergomiConfig& cfg, std::uint64_t stream = 1,
                              bool antithetic = false)
        : cfg_(cfg), stream_(stream), antithetic_(antithetic) {
        cfg_.validate();
    }

    static constexpr int drivers() { return 3; }
    const BergomiConfig& config() const { return cfg_; }
    bool antithetic() const { return antithetic_; }

    /// Per-grid precomputation: the factor of the one-step joint Gaussian
    /// (dZ, dW1, dW2, eta1, eta2), the OU decay factors, and the grid-time
    /// values of alpha^2 Var[w1 Y1 + w2 Y2].
    struct Plan {
        SimulationGrid grid;
        Eigen::MatrixXd factor;     // 5 x 5
        double decay1 = 0.0;
        double decay2 = 0.0;
        std::vector<double> varsum; // steps + 1 entries
    };

    Plan prepare(const SimulationGrid& grid) const {
        grid.validate();
        Plan plan;
        plan.grid = grid;
        const double h = grid.dt();
        const double k1 = cfg_.k1, k2 = cfg_.k2, r12 = cfg_.rho12;
        plan.decay1 = std::exp(-k1 * h);
        plan.decay2 = std::exp(-k2 * h);
        const double g1 = (1.0 - plan.decay1) / k1;
        const double g2 = (1.0 - plan.decay2) / k2;
        Eigen::MatrixXd C(5, 5);
        C << h, cfg_.rho_s1 * h, cfg_.rho_s2 * h, cfg_.rho_s1 * g1, cfg_.rho_s2 * g2,
             cfg_.rho_s1 * h, h, r12 * h, g1, r12 * g2,
             cfg_.rho_s2 * h, r12 * h, h, r12 * g1, g2,
             cfg_.rho_s1 * g1, g1, r12 * g1, (1.0 - plan.decay1 * plan.decay1) / (2.0 * k1),
                 r12 * (1.0 - plan.decay1 * plan.decay2) / (k1 + k2),
             cfg_.rho_s2 * g2, r12 * g2, g2,
                 r12 * (1.0 - plan.decay1 * plan.decay2) / (k1 + k2),
                 (1.0 - plan.decay2 * plan.decay2) / (2.0 * k2);
        const auto eig = detail::psd_eig(C, 1e-9);
        plan.factor = eig.vecs * eig.vals.cwiseMax(0.0).cwiseSqrt().asDiagonal();

        const double a = cfg_.alpha(), w1 = cfg_.w1(), w2 = cfg_.w2();
        const auto times = grid.times();
        plan.varsum.resize(times.size());
        for (std::size_t j = 0; j < times.size(); ++j) {
            const double t = times[j];
            const double var = w1 * w1 * (1.0 - std::exp(-2.0 * k1 * t)) / (2.0 * k1) +
                               w2 * w2 * (1.0 - std::exp(-2.0 * k2 * t)) / (2.0 * k2) +
                               2.0 * w1 * w2 * r12 * (1.0 - std::exp(-(k1 + k2) * t)) / (k1 + k2);
            plan.varsum[j] = a * a * var;
        }
        return plan;
    }

    ModelChunk simulate_chunk(const Plan& plan, std::int64_t begin, std::int64_t end,
                              bool terminal_only = false, bool want_increments = false) const {
        const std::int64_t cols = end - begin;
        if (cols <= 0 || begin < 0)
            throw std::invalid_argument("BergomiSimulator: bad path range");
        const std::int64_t steps = plan.grid.steps;
        const double h = plan.grid.dt();
        const double a = cfg_.alpha(), w1 = cfg_.w1(), w2 = cfg_.w2();
        const std::int64_t rows = terminal_only ? 1 : steps + 1;

        ModelChunk out;
        out.spot.resize(rows, cols);
        out.variance.resize(rows, cols);
        if (want_increments) out.increments.resize(steps * 3, cols);

        Eigen::MatrixXd xi(5, steps), zeta(5, steps);
        for (std::int64_t p = begin; p < end; ++p) {
            const std::uint64_t key =
                antithetic_ ? static_cast<std::uint64_t>(p / 2) : static_cast<std::uint64_t>(p);
            NormalSource rng(path_seed(plan.grid.seed, stream_, key));
            rng.fill(xi);
            zeta.noalias() = plan.factor * xi;
            if (antithetic_ && (p % 2 == 1)) zeta = -zeta;

            const std::int64_t c = p - begin;
            double y1 = 0.0, y2 = 0.0, logs = 0.0;
            double v = cfg_.xi0;
            if (!terminal_only) {
                out.spot(0, c) = cfg_.spot;
                out.variance(0, c) = v;
            }
            for (std::int64_t j = 0; j < steps; ++j) {
                const double dz = zeta(0, j);
                logs += std::sqrt(v) * dz - 0.5 * v * h;
                y1 = plan.decay1 * y1 + zeta(3, j);
                y2 = plan.decay2 * y2 + zeta(4, j);
                v = cfg_.xi0 * std::exp(a * (w1 * y1 + w2 * y2) -
                                        0.5 * plan.varsum[static_cast<std::size_t>(j + 1)]);
                if (!terminal_only) {
                    out.spot(j + 1, c) = cfg_.spot * std::exp(logs);
                    out.variance(j + 1, c) = v;
                }
                if (want_increments) {
                    out.increments(3 * j + 0, c) = dz;
                    out.increments(3 * j + 1, c) = zeta(1, j);
                    out.increments(3 * j + 2, c) = zeta(2, j);
                }
            }
            if (terminal_only) {
                out.spot(0, c) = cfg_.spot * std::exp(logs);
                out.variance(0, c) = v;
            }
        }
        return out;
    }

    ModelPaths simulate(const SimulationGrid& grid, int threads = 1,
                        bool terminal_only = false) const {
        const auto plan = prepare(grid);
        ModelPaths out;
        const auto times = grid.times();
        out.times = terminal_only ? std::vector<double>{times.back()} : times;
        out.spot.resize(static_cast<std::int64_t>(out.times.size()), grid.n_paths);
        out.variance.resize(static_cast<std::int64_t>(out.times.size()), grid.n_paths);
        parallel_chunks(grid.n_paths, kSimulationChunk, threads, [&](std::int64_t b, std::int64_t e) {
            const auto chunk = simulate_chunk(plan, b, e, terminal_only, false);
            out.spot.middleCols(b, e - b) = chunk.spot;
            out.variance.middleCols(b, e - b) = chunk.variance;
        });
        return out;
    }

private:
    BergomiConfig cfg_;
    std::uint64_t stream_;
    bool antithetic_;
};

class RoughBergomiSimulator {
public:
    /// The joint Gaussian factorization is dense in the step count, so grids
    /// beyond this size are refused rather than silently burning memory.
    static constexpr std::int64_t kMaxSteps = 2048;

    explicit RoughBergomiSimulator(const RoughBergomiConfig& cfg, std::uint64_t stream = 1,
                                   bool antithetic = false)
        : cfg_(cfg), stream_(stream), antithetic_(antithetic) {
        cfg_.validate();
    }

    static constexpr int drivers() { return 2; }
    const RoughBergomiConfig& config() const { return cfg_; }
    bool antithetic() const { return antithetic_; }

    struct Plan {
        SimulationGrid grid;
        Eigen::MatrixXd factor;   // 2M x 2M, (What at nodes, dW per step)
        std::vector<double> drift; // eta^2 t^{2H} / 2 at grid times
        /// Magnitude of the most negative eigenvalue clipped to zero when
        /// factoring the joint covariance; zero when none was.
        double covariance_clip = 0.0;
    };

    Plan prepare(const SimulationGrid& grid) const {
        grid.validate();
        if (grid.steps > kMaxSteps)
            throw std::invalid_argument(
                "RoughBergomiSimulator: grid exceeds the supported step count");
        Plan plan;
        plan.grid = grid;
        const Eigen::MatrixXd C = rough_joint_covariance(cfg_.hurst, grid.horizon, grid.steps);
        const auto eig = detail::psd_eig(C, 1e-8);
        plan.covariance_clip = std::max(0.0, -eig.vals.minCoeff());
        plan.factor = eig.vecs * eig.vals.cwiseMax(0.0).cwiseSqrt().asDiagonal();
        const auto times = grid.times();
        plan.drift.resize(times.size());
        for (std::size_t j = 0; j < times.size(); ++j)
            plan.drift[j] = 0.5 * cfg_.eta * cfg_.eta * std::pow(times[j], 2.0 * cfg_.hurst);
        return plan;
    }

    ModelChunk simulate_chunk(const Plan& plan, std::int64_t begin, std::int64_t end,
                              bool terminal_only = false, bool want_increments = false) const {
        const std::int64_t cols = end - begin;
        if (cols <= 0 || begin < 0)
            throw std::invalid_argument("RoughBergomiSimulator: bad path range");
        const std::int64_t M = plan.grid.steps;
        const double h = plan.grid.dt();
        const double rho = cfg_.rho;
        const double orth = std::sqrt(1.0 - rho * rho);
        const double sqh = std::sqrt(h);
        const std::int64_t rows = terminal_only ? 1 : M + 1;

        ModelChunk out;
        out.spot.resize(rows, cols);
        out.variance.resize(rows, cols);
        if (want_increments) out.increments.resize(M * 2, cols);

        Eigen::VectorXd g(2 * M), u(2 * M), perp(M);
        for (std::int64_t p = begin; p < end; ++p) {
            const std::uint64_t key =
                antithetic_ ? static_cast<std::uint64_t>(p / 2) : static_cast<std::uint64_t>(p);
            NormalSource rng(path_seed(plan.grid.seed, stream_, key));
            rng.fill(g);
            rng.fill(perp);
            u.noalias() = plan.factor * g;
            if (antithetic_ && (p % 2 == 1)) {
                u = -u;
                perp = -perp;
            }

            const std::int64_t c = p - begin;
            double logs = 0.0;
            double v = cfg_.xi0;
            if (!terminal_only) {
                out.spot(0, c) = cfg_.spot;
                out.variance(0, c) = v;
            }
            for (std::int64_t j = 0; j < M; ++j) {
                const double dw = u[M + j];
                const double dz = rho * dw + orth * sqh * perp[j];
                logs += std::sqrt(v) * dz - 0.5 * v * h;
                v = cfg_.xi0 *
                    std::exp(cfg_.eta * u[j] - plan.drift[static_cast<std::size_t>(j + 1)]);
                if (!terminal_only) {
                    out.spot(j + 1, c) = cfg_.spot * std::exp(logs);
                    out.variance(j + 1, c) = v;
                }
                if (want_increments) {
                    out.increments(2 * j + 0, c) = dz;
                    out.increments(2 * j + 1, c) = dw;
                }
            }
            if (terminal_only) {
                out.spot(0, c) = cfg_.spot * std::exp(logs);
                out.variance(0, c) = v;
            }
        }
        return out;
    }

    ModelPaths simulate(const SimulationGrid& grid, int threads = 1,
                        bool terminal_only = false) const {
        const auto plan = prepare(grid);
        ModelPaths out;
        const auto times = grid.times();
        out.times = terminal_only ? std::vector<double>{times.back()} : times;
        out.spot.resize(static_cast<std::int64_t>(out.times.size()), grid.n_paths);
        out.variance.resize(static_cast<std::int64_t>(out.times.size()), grid.n_paths);
        parallel_chunks(grid.n_paths, kSimulationChunk, threads, [&](std::int64_t b, std::int64_t e) {
            const auto chunk = simulate_chunk(plan, b, e, terminal_only, false);
            out.spot.middleCols(b, e - b) = chunk.spot;
            out.variance.middleCols(b, e - b) = chunk.variance;
        });
        return out;
    }

private:
    RoughBergomiConfig cfg_;
    std::uint64_t stream_;
    bool antithetic_;
};

} // namespace sigmor
