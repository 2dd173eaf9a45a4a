#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sigmor/balancing.hpp"
#include "sigmor/parallel.hpp"
#include "sigmor/rng.hpp"
#include "sigmor/system.hpp"

namespace sigmor {

/// Paths are simulated in fixed-size chunks so that results do not depend on
/// the number of worker threads.
inline constexpr std::int64_t kSimulationChunk = 256;

struct SimulationGrid {
    double horizon = 1.0;
    std::int64_t steps = 256;
    std::int64_t n_paths = 1;
    std::uint64_t seed = 0;

    double dt() const { return horizon / static_cast<double>(steps); }

    /// Grid times built by repeated addition of dt(). The Euler scheme below
    /// accumulates the clock coordinate the same way, so the two agree bitwise.
    std::vector<double> times() const {
        std::vector<double> t(static_cast<std::size_t>(steps) + 1);
        t[0] = 0.0;
        const double h = dt();
        for (std::int64_t j = 1; j <= steps; ++j) t[static_cast<std::size_t>(j)] = t[static_cast<std::size_t>(j - 1)] + h;
        return t;
    }

    void validate() const {
        if (!(horizon > 0.0)) throw std::invalid_argument("SimulationGrid: horizon must be positive");
        if (steps < 1) throw std::invalid_argument("SimulationGrid: steps must be at least 1");
        if (n_paths < 1) throw std::invalid_argument("SimulationGrid: n_paths must be at least 1");
    }
};

namespace detail {

inline double pairwise_sum(const double* x, std::int64_t n) {
    if (n <= 32) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::int64_t half = n / 2;
    return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

} // namespace detail

struct MeanStderr {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanStderr mc_stats(const Eigen::VectorXd& samples) {
    const std::int64_t n = samples.size();
    if (n == 0) throw std::invalid_argument("mc_stats: empty sample");
    MeanStderr out;
    out.mean = detail::pairwise_sum(samples.data(), n) / static_cast<double>(n);
    if (n == 1) return out;
    Eigen::VectorXd dev = (samples.array() - out.mean).square();
    const double var = detail::pairwise_sum(dev.data(), n) / static_cast<double>(n - 1);
    out.se = std::sqrt(var / static_cast<double>(n));
    return out;
}

/// Collapses antithetic pairs (2k, 2k+1) to their averages, which are the
/// independent samples for error-bar purposes.
inline Eigen::VectorXd pair_averages(const Eigen::VectorXd& samples) {
    const std::int64_t n = samples.size();
    if (n % 2 != 0) throw std::invalid_argument("pair_averages: sample count must be even");
    Eigen::VectorXd out(n / 2);
    for (std::int64_t k = 0; k < n / 2; ++k) out[k] = 0.5 * (samples[2 * k] + samples[2 * k + 1]);
    return out;
}

inline MeanStderr mc_stats(const Eigen::VectorXd& samples, bool antithetic) {
    return antithetic ? mc_stats(pair_averages(samples)) : mc_stats(samples);
}

/// Correlated Brownian increment generator. Each path owns an RNG stream keyed
/// by (seed, stream, path), so any contiguous block of paths can be produced
/// independently and the full set is identical for every thread count. With
/// antithetic enabled, paths 2k and 2k+1 draw from the same stream and the odd
/// path negates the draws.
class CorrelatedBrownian {
public:
    CorrelatedBrownian(const Eigen::MatrixXd& correlation, std::uint64_t seed,
                       std::uint64_t stream = 0, bool antithetic = false)
        : seed_(seed), stream_(stream), antithetic_(antithetic) {
        if (correlation.rows() != correlation.cols() || correlation.rows() == 0)
            throw std::invalid_argument("CorrelatedBrownian: correlation matrix must be square and nonempty");
        const auto eig = detail::psd_eig(correlation, 1e-10 * std::max(1.0, correlation.cwiseAbs().maxCoeff()));
        factor_ = eig.vecs * eig.vals.cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }

    std::int64_t drivers() const { return factor_.rows(); }
    bool antithetic() const { return antithetic_; }

    /// Increment block for paths [begin, end): row j*q + i holds the driver-i
    /// increment over step j, one column per path.
    Eigen::MatrixXd increments(std::int64_t steps, double dt, std::int64_t begin, std::int64_t end) const {
        const std::int64_t q = drivers();
        const std::int64_t cols = end - begin;
        if (cols <= 0 || begin < 0) throw std::invalid_argument("CorrelatedBrownian: bad path range");
        const double scale = std::sqrt(dt);
        Eigen::MatrixXd block(steps * q, cols);
        Eigen::MatrixXd xi(q, steps), corr(q, steps);
        for (std::int64_t p = begin; p < end; ++p) {
            const std::uint64_t key = antithetic_ ? static_cast<std::uint64_t>(p / 2) : static_cast<std::uint64_t>(p);
            NormalSource rng(path_seed(seed_, stream_, key));
            rng.fill(xi);
            corr.noalias() = factor_ * xi;
            corr *= scale;
            if (antithetic_ && (p % 2 == 1)) corr = -corr;
            block.col(p - begin) = Eigen::Map<const Eigen::VectorXd>(corr.data(), q * steps);
        }
        return block;
    }

private:
    Eigen::MatrixXd factor_;
    std::uint64_t seed_;
    std::uint64_t stream_;
    bool antithetic_;
};

/// Explicit Euler for dx = Ax dt + sum_i N_i x dB^i over one block of paths.
/// The state matrix holds one path per column. The sink is invoked with the
/// step index and the state, first at step 0 with the initial condition.
template <class System, class Sink>
void euler_chunk(const System& sys, double dt, std::int64_t steps,
                 const Eigen::MatrixXd& increments, Sink&& sink) {
    const std::int64_t n = sys.dim();
    const std::int64_t q = static_cast<std::int64_t>(sys.diffusion.size());
    const std::int64_t cols = increments.cols();
    if (increments.rows() != steps * q)
        throw std::invalid_argument("euler_chunk: increment block has wrong row count");
    Eigen::MatrixXd X = sys.z.replicate(1, cols);
    Eigen::MatrixXd DX(n, cols), T(n, cols);
    sink(std::int64_t{0}, std::as_const(X));
    for (std::int64_t j = 0; j < steps; ++j) {
        DX.noalias() = sys.A * X;
        DX *= dt;
        for (std::int64_t i = 0; i < q; ++i) {
            T.noalias() = sys.diffusion[static_cast<std::size_t>(i)] * X;
            DX.array() += T.array().rowwise() * increments.row(j * q + i).array();
        }
        X += DX;
        sink(j + 1, std::as_const(X));
    }
}

struct SimulationResult {
    /// Stored sample times: the full grid, or just the terminal time.
    std::vector<double> times;
    /// One matrix per output row of L, each times.size() x n_paths.
    std::vector<Eigen::MatrixXd> outputs;
    /// Paths whose terminal state contained a non-finite value, ascending.
    std::vector<std::int64_t> nonfinite_paths;
};

template <class System>
SimulationResult simulate_linear_sde(const System& sys, const SimulationGrid& grid,
                                     const CorrelatedBrownian* shared_noise = nullptr,
                                     int threads = 1, bool terminal_only = false) {
    grid.validate();
    const std::int64_t p = sys.outputs();
    std::optional<CorrelatedBrownian> own;
    if (!shared_noise) {
        own.emplace(sys.K.K, grid.seed);
        shared_noise = &*own;
    }
    if (shared_noise->drivers() != static_cast<std::int64_t>(sys.diffusion.size()))
        throw std::invalid_argument("simulate_linear_sde: noise driver count does not match the system");

    SimulationResult res;
    const auto all_times = grid.times();
    res.times = terminal_only ? std::vector<double>{all_times.back()} : all_times;
    res.outputs.assign(static_cast<std::size_t>(p),
                       Eigen::MatrixXd(static_cast<std::int64_t>(res.times.size()), grid.n_paths));

    std::mutex nf_mutex;
    parallel_chunks(grid.n_paths, kSimulationChunk, threads, [&](std::int64_t b, std::int64_t e) {
        const Eigen::MatrixXd B = shared_noise->increments(grid.steps, grid.dt(), b, e);
        Eigen::MatrixXd Y;
        euler_chunk(sys, grid.dt(), grid.steps, B, [&](std::int64_t j, const Eigen::MatrixXd& X) {
            if (j == grid.steps) {
                std::vector<std::int64_t> bad;
                for (std::int64_t c = 0; c < X.cols(); ++c)
                    if (!X.col(c).allFinite()) bad.push_back(b + c);
                if (!bad.empty()) {
                    std::lock_guard<std::mutex> lock(nf_mutex);
                    res.nonfinite_paths.insert(res.nonfinite_paths.end(), bad.begin(), bad.end());
                }
            }
            if (terminal_only && j != grid.steps) return;
            Y.noalias() = sys.L * X;
            const std::int64_t row = terminal_only ? 0 : j;
            for (std::int64_t k = 0; k < p; ++k)
                res.outputs[static_cast<std::size_t>(k)].row(row).segment(b, e - b) = Y.row(k);
        });
    });
    std::sort(res.nonfinite_paths.begin(), res.nonfinite_paths.end());
    return res;
}

struct L2Error {
    double absolute = 0.0;
    double se_absolute = 0.0;
    double relative = 0.0;
    double se_relative = 0.0;
    /// L2 norm of the reference output, the denominator of `relative`.
    double ref_norm = 0.0;
    std::int64_t n_paths = 0;
};

namespace detail {

inline std::vector<double> trapezoid_weights(std::int64_t steps, double dt) {
    std::vector<double> w(static_cast<std::size_t>(steps) + 1, dt);
    w.front() = 0.5 * dt;
    w.back() = 0.5 * dt;
    return w;
}

inline L2Error l2_from_integrals(const Eigen::VectorXd& err2, const Eigen::VectorXd& ref2) {
    const auto se_stat = mc_stats(err2);
    const auto sf_stat = mc_stats(ref2);
    L2Error out;
    out.n_paths = err2.size();
    out.ref_norm = std::sqrt(std::max(0.0, sf_stat.mean));
    if (se_stat.mean > 0.0) {
        out.absolute = std::sqrt(se_stat.mean);
        out.se_absolute = se_stat.se / (2.0 * out.absolute);
    }
    if (sf_stat.mean > 0.0 && se_stat.mean > 0.0) {
        out.relative = out.absolute / out.ref_norm;
        const double re = se_stat.se / se_stat.mean;
        const double rf = sf_stat.se / sf_stat.mean;
        out.se_relative = out.relative * 0.5 * std::sqrt(re * re + rf * rf);
    }
    return out;
}

} // namespace detail

/// Pathwise L2 distance between a stored full-model output and a reduced
/// system simulated with the same noise. The reference result must hold the
/// whole time profile on the same grid.
template <class System>
L2Error l2_against_reference(const SimulationResult& reference, const System& reduced,
                             const SimulationGrid& grid, const CorrelatedBrownian& noise,
                             int threads = 1) {
    grid.validate();
    if (reference.times.size() != static_cast<std::size_t>(grid.steps) + 1)
        throw std::invalid_argument("l2_against_reference: reference must store the full time profile");
    const std::int64_t p = reduced.outputs();
    if (reference.outputs.size() != static_cast<std::size_t>(p))
        throw std::invalid_argument("l2_against_reference: output dimension mismatch");
    for (const auto& m : reference.outputs)
        if (m.cols() != grid.n_paths)
            throw std::invalid_argument("l2_against_reference: reference path count does not match the grid");
    if (noise.drivers() != static_cast<std::int64_t>(reduced.diffusion.size()))
        throw std::invalid_argument("l2_against_reference: noise driver count does not match the system");

    const auto w = detail::trapezoid_weights(grid.steps, grid.dt());
    Eigen::VectorXd err2 = Eigen::VectorXd::Zero(grid.n_paths);
    Eigen::VectorXd ref2 = Eigen::VectorXd::Zero(grid.n_paths);
    parallel_chunks(grid.n_paths, kSimulationChunk, threads, [&](std::int64_t b, std::int64_t e) {
        const Eigen::MatrixXd B = noise.increments(grid.steps, grid.dt(), b, e);
        Eigen::MatrixXd Y;
        euler_chunk(reduced, grid.dt(), grid.steps, B, [&](std::int64_t j, const Eigen::MatrixXd& X) {
            Y.noalias() = reduced.L * X;
            const double wj = w[static_cast<std::size_t>(j)];
            for (std::int64_t k = 0; k < p; ++k) {
                const auto yref = reference.outputs[static_cast<std::size_t>(k)].row(j).segment(b, e - b);
                err2.segment(b, e - b).array() += wj * (Y.row(k).array() - yref.array()).square();
                ref2.segment(b, e - b).array() += wj * yref.array().square();
            }
        });
    });
    return detail::l2_from_integrals(err2, ref2);
}

/// Simulates both systems with one shared increment stream and reports the
/// pathwise L2 output error of `reduced` against `full`.
template <class FullSystem, class ReducedLike>
L2Error l2_output_error(const FullSystem& full, const ReducedLike& reduced,
                        const SimulationGrid& grid, int threads = 1,
                        std::uint64_t noise_stream = 0) {
    const Eigen::MatrixXd& kf = full.K.K;
    const Eigen::MatrixXd& kr = reduced.K.K;
    if (kf.rows() != kr.rows() || kf.cols() != kr.cols() || (kf - kr).cwiseAbs().maxCoeff() != 0.0)
        throw std::invalid_argument("l2_output_error: systems carry different noise covariances; "
                                    "a shared-noise comparison is not meaningful");
    if (full.outputs() != reduced.outputs())
        throw std::invalid_argument("l2_output_error: systems have different output dimensions");
    CorrelatedBrownian noise(kf, grid.seed, noise_stream);
    const auto reference = simulate_linear_sde(full, grid, &noise, threads, false);
    return l2_against_reference(reference, reduced, grid, noise, threads);
}

/// Strike ladder (0.8 + 0.02 j)^sqrt(T), j = 0..20. The exponent tightens the
/// ladder around the money for short maturities.
inline std::vector<double> strike_grid(double maturity) {
    if (!(maturity > 0.0)) throw std::invalid_argument("strike_grid: maturity must be positive");
    std::vector<double> strikes(21);
    const double e = std::sqrt(maturity);
    for (int j = 0; j <= 20; ++j) strikes[static_cast<std::size_t>(j)] = std::pow(0.8 + 0.02 * j, e);
    return strikes;
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double bs_call(double spot, double strike, double vol, double maturity) {
    if (!(spot > 0.0) || !(strike > 0.0) || !(vol > 0.0) || !(maturity > 0.0))
        throw std::invalid_argument("bs_call: spot, strike, vol and maturity must be positive");
    const double sq = vol * std::sqrt(maturity);
    const double d1 = std::log(spot / strike) / sq + 0.5 * sq;
    return spot * norm_cdf(d1) - strike * norm_cdf(d1 - sq);
}

inline double bs_vega(double spot, double strike, double vol, double maturity) {
    if (!(spot > 0.0) || !(strike > 0.0) || !(vol > 0.0) || !(maturity > 0.0))
        throw std::invalid_argument("bs_vega: spot, strike, vol and maturity must be positive");
    const double sq = vol * std::sqrt(maturity);
    const double d1 = std::log(spot / strike) / sq + 0.5 * sq;
    return spot * norm_pdf(d1) * std::sqrt(maturity);
}

class ImpliedVolError : public std::runtime_error {
public:
    enum class Kind {
        below_intrinsic, ///< price does not exceed max(spot - strike, 0)
        above_spot,      ///< price is not below the spot
        bracket,         ///< no vol in [lo, hi] reproduces the price
        no_convergence   ///< bisection exhausted double precision without matching the price
    };

    ImpliedVolError(Kind k, double price_, double bound_, const std::string& what)
        : std::runtime_error(what), kind(k), price(price_), bound(bound_) {}

    Kind kind;
    double price;
    /// The violated bound: the intrinsic value, the spot, or the call price at
    /// the offending bracket end.
    double bound;
};

inline constexpr double kImpliedVolLo = 1e-6;
inline constexpr double kImpliedVolHi = 5.0;

/// Inverts the call price by bisection on [kImpliedVolLo, kImpliedVolHi].
/// Terminates only once the price is matched to 1e-12 and the vol bracket has
/// shrunk to 1e-12, so the result stays accurate where the vega is tiny.
inline double implied_vol(double price, double spot, double strike, double maturity) {
    if (!(spot > 0.0) || !(strike > 0.0) || !(maturity > 0.0))
        throw std::invalid_argument("implied_vol: spot, strike and maturity must be positive");
    const double intrinsic = std::max(spot - strike, 0.0);
    if (!(price > intrinsic))
        throw ImpliedVolError(ImpliedVolError::Kind::below_intrinsic, price, intrinsic,
                              "implied_vol: price " + std::to_string(price) +
                                  " does not exceed the intrinsic value " + std::to_string(intrinsic));
    if (!(price < spot))
        throw ImpliedVolError(ImpliedVolError::Kind::above_spot, price, spot,
                              "implied_vol: price " + std::to_string(price) +
                                  " is not below the spot " + std::to_string(spot));
    double lo = kImpliedVolLo, hi = kImpliedVolHi;
    const double plo = bs_call(spot, strike, lo, maturity);
    const double phi = bs_call(spot, strike, hi, maturity);
    if (price < plo)
        throw ImpliedVolError(ImpliedVolError::Kind::bracket, price, plo,
                              "implied_vol: price lies below the call value at the lower vol bracket");
    if (price > phi)
        throw ImpliedVolError(ImpliedVolError::Kind::bracket, price, phi,
                              "implied_vol: price lies above the call value at the upper vol bracket");
    constexpr double price_tol = 1e-12;
    constexpr double vol_tol = 1e-12;
    double mid = 0.5 * (lo + hi);
    double pm = bs_call(spot, strike, mid, maturity);
    for (int iter = 0; iter < 300; ++iter) {
        if (std::abs(pm - price) <= price_tol && hi - lo <= vol_tol) return mid;
        if (pm > price)
            hi = mid;
        else
            lo = mid;
        const double next = 0.5 * (lo + hi);
        if (next <= lo || next >= hi) break;
        mid = next;
        pm = bs_call(spot, strike, mid, maturity);
    }
    if (std::abs(pm - price) <= price_tol) return mid;
    throw ImpliedVolError(ImpliedVolError::Kind::no_convergence, price, pm,
                          "implied_vol: bisection exhausted double precision without matching the price");
}

struct PricedCall {
    double price = 0.0;
    double se = 0.0;
};

inline PricedCall price_european_call(const Eigen::VectorXd& terminal_spots, double strike,
                                      bool antithetic = false) {
    Eigen::VectorXd payoff = (terminal_spots.array() - strike).cwiseMax(0.0);
    const auto stat = mc_stats(payoff, antithetic);
    return {stat.mean, stat.se};
}

struct SmilePoint {
    double strike = 0.0;
    double price = 0.0;
    double se = 0.0;
    double iv = std::numeric_limits<double>::quiet_NaN();
    double iv_se = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
};

struct IVSmile {
    double maturity = 0.0;
    double spot = 0.0;
    std::vector<SmilePoint> points;
    /// Strikes where the price could not be inverted, with the first reason.
    std::int64_t failures = 0;
    std::string first_failure;
};

/// Prices each strike from the terminal spot sample and inverts to implied
/// vol. Inversion failures are counted and reported, never patched over;
/// non-positive terminal values simply contribute zero payoff.
inline IVSmile make_smile(const Eigen::VectorXd& terminal_spots, double spot, double maturity,
                          const std::vector<double>& strikes, bool antithetic = false) {
    IVSmile smile;
    smile.maturity = maturity;
    smile.spot = spot;
    smile.points.reserve(strikes.size());
    for (double k : strikes) {
        SmilePoint pt;
        pt.strike = k;
        const auto priced = price_european_call(terminal_spots, k, antithetic);
        pt.price = priced.price;
        pt.se = priced.se;
        try {
            pt.iv = implied_vol(pt.price, spot, k, maturity);
            pt.iv_se = pt.se / bs_vega(spot, k, pt.iv, maturity);
            pt.ok = true;
        } catch (const ImpliedVolError& err) {
            ++smile.failures;
            if (smile.first_failure.empty()) smile.first_failure = err.what();
        }
        smile.points.push_back(pt);
    }
    return smile;
}

struct IVErrorPoint {
    double strike = 0.0;
    double rel_error = std::numeric_limits<double>::quiet_NaN();
    /// One-sigma combined Monte Carlo bar on rel_error.
    double bar = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
};

struct IVErrorReport {
    double maturity = 0.0;
    std::vector<IVErrorPoint> points;
    std::int64_t skipped = 0;
    double max_rel_error = std::numeric_limits<double>::quiet_NaN();
    double max_bar = std::numeric_limits<double>::quiet_NaN();
};

/// Relative implied-vol error of `approx` against `reference`, strike by
/// strike, with propagated Monte Carlo bars. Strikes where either inversion
/// failed are skipped and counted.
inline IVErrorReport iv_error_report(const IVSmile& reference, const IVSmile& approx) {
    if (reference.points.size() != approx.points.size())
        throw std::invalid_argument("iv_error_report: smiles have different strike counts");
    if (reference.maturity != approx.maturity)
        throw std::invalid_argument("iv_error_report: smiles have different maturities");
    IVErrorReport rep;
    rep.maturity = reference.maturity;
    double worst = -1.0, worst_bar = -1.0;
    for (std::size_t i = 0; i < reference.points.size(); ++i) {
        const auto& r = reference.points[i];
        const auto& a = approx.points[i];
        if (r.strike != a.strike)
            throw std::invalid_argument("iv_error_report: smiles have different strike grids");
        IVErrorPoint pt;
        pt.strike = r.strike;
        if (r.ok && a.ok && r.iv > 0.0) {
            pt.rel_error = std::abs(r.iv - a.iv) / r.iv;
            pt.bar = std::sqrt(r.iv_se * r.iv_se + a.iv_se * a.iv_se) / r.iv;
            pt.ok = true;
            worst = std::max(worst, pt.rel_error);
            worst_bar = std::max(worst_bar, pt.bar);
        } else {
            ++rep.skipped;
        }
        rep.points.push_back(pt);
    }
    if (worst >= 0.0) {
        rep.max_rel_error = worst;
        rep.max_bar = worst_bar;
    }
    return rep;
}

} // namespace sigmor
