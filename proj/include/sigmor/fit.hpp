#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "sigmor/tensor.hpp"
#include "sigmor/words.hpp"

namespace sigmor {

struct FitResult {
    Eigen::VectorXd ell;
    /// Ridge weight actually used (the automatic choice when requested < 0).
    double lambda = 0.0;
    double rmse_train = 0.0;
    double rmse_valid = std::numeric_limits<double>::quiet_NaN();
    std::int64_t rows_train = 0;
    std::int64_t rows_valid = 0;
    int d = 0;
    int m = 0;
};

struct SweepPoint {
    double lambda = 0.0;
    double rmse_train = 0.0;
    double rmse_valid = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

/// Streams the signature feature rows of one driver path: row 0 is the unit
/// tensor, row j the signature of the piecewise-linear time-extended path
/// through step j. `incs` stacks the non-clock increments as q entries per
/// step; the clock advances by dt each step.
template <class RowSink>
void signature_feature_rows(const BasisOrder& ord, const Eigen::Ref<const Eigen::VectorXd>& incs,
                            double dt, RowSink&& sink) {
    const int d = ord.alphabet();
    const int q = d - 1;
    const std::int64_t steps = incs.size() / q;
    TruncatedTensor sig = unit_tensor(ord);
    sink(std::int64_t{0}, sig.coeffs);
    Eigen::VectorXd dx(d);
    dx[0] = dt;
    for (std::int64_t j = 0; j < steps; ++j) {
        dx.tail(q) = incs.segment(j * q, q);
        sig = chen_concat(sig, segment_exponential(dx, ord));
        sink(j + 1, sig.coeffs);
    }
}

struct GramBlock {
    Eigen::MatrixXd G;  // lower triangle filled
    Eigen::VectorXd b;
    double yy = 0.0;
    std::int64_t rows = 0;
};

struct FitInputs {
    std::int64_t steps = 0;
    std::int64_t paths = 0;
    std::int64_t train_paths = 0;
    int q = 0;
};

inline FitInputs check_fit_inputs(const Eigen::MatrixXd& increments, const Eigen::MatrixXd& spot,
                                  double dt, int d, int m, double split) {
    if (d < 2) throw std::invalid_argument("fit: need d >= 2 (letter 1 is the clock)");
    if (m < 1) throw std::invalid_argument("fit: truncation level must be at least 1");
    if (!(dt > 0.0)) throw std::invalid_argument("fit: dt must be positive");
    if (!(split > 0.0 && split <= 1.0)) throw std::invalid_argument("fit: split must lie in (0, 1]");
    FitInputs in;
    in.q = d - 1;
    if (increments.rows() == 0 || increments.rows() % in.q != 0)
        throw std::invalid_argument("fit: increment rows must be a positive multiple of d - 1");
    in.steps = increments.rows() / in.q;
    if (spot.rows() != in.steps + 1)
        throw std::invalid_argument("fit: spot must hold steps + 1 rows");
    in.paths = increments.cols();
    if (spot.cols() != in.paths) throw std::invalid_argument("fit: path count mismatch");
    if (in.paths < 1) throw std::invalid_argument("fit: need at least one path");
    in.train_paths = std::clamp<std::int64_t>(
        static_cast<std::int64_t>(std::llround(split * static_cast<double>(in.paths))), 1,
        in.paths);
    return in;
}

inline void accumulate_gram(const BasisOrder& ord, const Eigen::MatrixXd& increments,
                            const Eigen::MatrixXd& spot, double dt, std::int64_t path_begin,
                            std::int64_t path_end, GramBlock& block) {
    const std::int64_t n = ord.dim();
    const std::int64_t rows = spot.rows();
    if (block.G.rows() == 0) {
        block.G = Eigen::MatrixXd::Zero(n, n);
        block.b = Eigen::VectorXd::Zero(n);
    }
    Eigen::MatrixXd F(rows, n);
    for (std::int64_t p = path_begin; p < path_end; ++p) {
        signature_feature_rows(ord, increments.col(p), dt,
                               [&](std::int64_t j, const Eigen::VectorXd& row) {
                                   F.row(j) = row;
                               });
        block.G.selfadjointView<Eigen::Lower>().rankUpdate(F.transpose());
        block.b.noalias() += F.transpose() * spot.col(p);
        block.yy += spot.col(p).squaredNorm();
        block.rows += rows;
    }
}

/// Solves (G + lambda I) x = b. Uses LDLT when lambda is positive; otherwise,
/// or when LDLT fails, falls back to an eigenvalue pseudo-inverse that drops
/// eigenvalues below pinv_tol times the largest.
inline Eigen::VectorXd solve_ridge(const Eigen::MatrixXd& G_lower, const Eigen::VectorXd& b,
                                   double lambda, double pinv_tol = 1e-12) {
    Eigen::MatrixXd G = G_lower.selfadjointView<Eigen::Lower>();
    if (lambda > 0.0) {
        Eigen::MatrixXd R = G;
        R.diagonal().array() += lambda;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(R);
        if (ldlt.info() == Eigen::Success) {
            Eigen::VectorXd x = ldlt.solve(b);
            if (x.allFinite()) return x;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (es.info() != Eigen::Success) throw std::runtime_error("solve_ridge: eigensolver failed");
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double cutoff = pinv_tol * std::max(ev.maxCoeff(), 0.0);
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
    for (Eigen::Index k = 0; k < ev.size(); ++k)
        if (ev[k] > cutoff) inv[k] = 1.0 / (ev[k] + lambda);
    return es.eigenvectors() * (inv.asDiagonal() * (es.eigenvectors().transpose() * b));
}

inline double streaming_rmse(const BasisOrder& ord, const Eigen::MatrixXd& increments,
                             const Eigen::MatrixXd& spot, double dt, std::int64_t path_begin,
                             std::int64_t path_end, const Eigen::VectorXd& ell) {
    double sse = 0.0;
    std::int64_t rows = 0;
    for (std::int64_t p = path_begin; p < path_end; ++p) {
        signature_feature_rows(ord, increments.col(p), dt,
                               [&](std::int64_t j, const Eigen::VectorXd& row) {
                                   const double r = spot(j, p) - row.dot(ell);
                                   sse += r * r;
                                   ++rows;
                               });
    }
    return rows ? std::sqrt(sse / static_cast<double>(rows))
                : std::numeric_limits<double>::quiet_NaN();
}

inline double gram_rmse(const GramBlock& block, const Eigen::VectorXd& ell) {
    if (block.rows == 0) return std::numeric_limits<double>::quiet_NaN();
    Eigen::MatrixXd G = block.G.selfadjointView<Eigen::Lower>();
    const double sse = block.yy - 2.0 * ell.dot(block.b) + ell.dot(G * ell);
    return std::sqrt(std::max(sse, 0.0) / static_cast<double>(block.rows));
}

} // namespace detail

/// Ridge fit of spot paths against the signature features of their drivers:
///   min_ell  sum_{paths, grid times} (S_t - <ell, sig_t>)^2 + lambda |ell|^2.
/// Paths are split into a leading training block and a trailing validation
/// block. A negative lambda requests the automatic choice
/// 1e-8 * mean(S_t^2) over the training rows. RMSEs come from a second
/// streaming pass, so exact fits report at machine precision.
inline FitResult fit_signature_model(const Eigen::MatrixXd& increments,
                                     const Eigen::MatrixXd& spot, double dt, int d, int m,
                                     double lambda = -1.0, double split = 0.8) {
    const auto in = detail::check_fit_inputs(increments, spot, dt, d, m, split);
    BasisOrder ord(d, m);

    detail::GramBlock train;
    detail::accumulate_gram(ord, increments, spot, dt, 0, in.train_paths, train);

    FitResult out;
    out.d = d;
    out.m = m;
    out.lambda = lambda < 0.0 ? 1e-8 * train.yy / static_cast<double>(train.rows) : lambda;
    out.ell = detail::solve_ridge(train.G, train.b, out.lambda);
    out.rows_train = train.rows;
    out.rmse_train = detail::streaming_rmse(ord, increments, spot, dt, 0, in.train_paths, out.ell);
    if (in.train_paths < in.paths) {
        out.rows_valid = (in.paths - in.train_paths) * (in.steps + 1);
        out.rmse_valid =
            detail::streaming_rmse(ord, increments, spot, dt, in.train_paths, in.paths, out.ell);
    }
    return out;
}

/// Evaluates the ridge fit across several lambda values while accumulating the
/// Gram matrices once. RMSEs here come from the quadratic form, which floors
/// around 1e-7 of the target scale; use fit_signature_model for exact
/// residuals at a chosen lambda.
inline std::vector<SweepPoint> lambda_sweep(const Eigen::MatrixXd& increments,
                                            const Eigen::MatrixXd& spot, double dt, int d, int m,
                                            const std::vector<double>& lambdas,
                                            double split = 0.8) {
    const auto in = detail::check_fit_inputs(increments, spot, dt, d, m, split);
    if (lambdas.empty()) throw std::invalid_argument("lambda_sweep: no lambda values given");
    BasisOrder ord(d, m);

    detail::GramBlock train, valid;
    detail::accumulate_gram(ord, increments, spot, dt, 0, in.train_paths, train);
    if (in.train_paths < in.paths)
        detail::accumulate_gram(ord, increments, spot, dt, in.train_paths, in.paths, valid);

    std::vector<SweepPoint> out;
    out.reserve(lambdas.size());
    for (double lambda : lambdas) {
        if (lambda < 0.0) throw std::invalid_argument("lambda_sweep: lambdas must be nonnegative");
        SweepPoint pt;
        pt.lambda = lambda;
        const Eigen::VectorXd ell = detail::solve_ridge(train.G, train.b, lambda);
        pt.rmse_train = detail::gram_rmse(train, ell);
        if (valid.rows > 0) pt.rmse_valid = detail::gram_rmse(valid, ell);
        out.push_back(pt);
    }
    return out;
}

} // namespace sigmor
