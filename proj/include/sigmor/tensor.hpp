#pragma once

#include <Eigen/Dense>

#include "sigmor/words.hpp"

namespace sigmor {

/// Element of the truncated tensor algebra T^m(R^d), stored dense in the
/// length-first lexicographic basis. coeffs[0] is the empty-word coordinate.
struct TruncatedTensor {
    const BasisOrder* order = nullptr;
    Eigen::VectorXd coeffs;

    TruncatedTensor() = default;
    explicit TruncatedTensor(const BasisOrder& ord)
        : order(&ord), coeffs(Eigen::VectorXd::Zero(ord.dim())) {}

    double operator[](const Word& w) const { return coeffs[order->word_to_index(w)]; }
};

/// The unit 1 of the algebra: empty-word coordinate 1, everything else 0.
inline TruncatedTensor unit_tensor(const BasisOrder& ord) {
    TruncatedTensor t(ord);
    t.coeffs[0] = 1.0;
    return t;
}

/// Truncated concatenation product. Level-L block of the result is the sum
/// over splits j + (L-j): a_j (x) b_{L-j}, laid out contiguously because the
/// basis is ordered by length first.
inline TruncatedTensor chen_concat(const TruncatedTensor& a, const TruncatedTensor& b) {
    const BasisOrder& ord = *a.order;
    if (b.order->alphabet() != ord.alphabet() || b.order->level() != ord.level())
        throw std::invalid_argument("chen_concat: mismatched basis orders");
    const int m = ord.level();
    TruncatedTensor r(ord);
    for (int L = 0; L <= m; ++L) {
        const std::int64_t oL = ord.level_offset(L);
        for (int j = 0; j <= L; ++j) {
            const int k = L - j;
            const std::int64_t oj = ord.level_offset(j), ok = ord.level_offset(k);
            const std::int64_t nj = ord.level_size(j), nk = ord.level_size(k);
            // index(u.v) = rank(u)*d^k + rank(v) within level L
            for (std::int64_t u = 0; u < nj; ++u) {
                const double au = a.coeffs[oj + u];
                if (au == 0.0) continue;
                r.coeffs.segment(oL + u * nk, nk) += au * b.coeffs.segment(ok, nk);
            }
        }
    }
    return r;
}

/// Signature of a single straight segment with increment dx: the tensor
/// exponential, level-k block dx^{(x)k} / k!.
inline TruncatedTensor segment_exponential(const Eigen::VectorXd& dx, const BasisOrder& ord) {
    if (dx.size() != ord.alphabet())
        throw std::invalid_argument("segment_exponential: increment dimension mismatch");
    TruncatedTensor t(ord);
    t.coeffs[0] = 1.0;
    const int m = ord.level();
    const int d = ord.alphabet();
    for (int L = 1; L <= m; ++L) {
        const std::int64_t prev = ord.level_offset(L - 1);
        const std::int64_t cur = ord.level_offset(L);
        const std::int64_t np = ord.level_size(L - 1);
        const double inv = 1.0 / L;
        for (std::int64_t u = 0; u < np; ++u) {
            const double base = t.coeffs[prev + u] * inv;
            for (int i = 0; i < d; ++i) t.coeffs[cur + u * d + i] = base * dx[i];
        }
    }
    return t;
}

/// Piecewise linear path sample: times strictly increasing, values row j is
/// the state at times[j]. For time-extended paths the first coordinate must
/// equal the clock bit-for-bit; validate() enforces that.
struct PathSample {
    Eigen::VectorXd times;   // M+1
    Eigen::MatrixXd values;  // (M+1) x d

    int segments() const { return static_cast<int>(times.size()) - 1; }

    void validate(bool time_extended = true) const {
        if (times.size() != values.rows())
            throw std::invalid_argument("PathSample: times/values length mismatch");
        if (times.size() < 2) throw std::invalid_argument("PathSample: need at least one segment");
        for (Eigen::Index j = 1; j < times.size(); ++j)
            if (!(times[j] > times[j - 1]))
                throw std::invalid_argument("PathSample: times must be strictly increasing");
        if (time_extended)
            for (Eigen::Index j = 0; j < times.size(); ++j)
                if (values(j, 0) != times[j])
                    throw std::invalid_argument(
                        "PathSample: first coordinate must equal the time grid exactly");
    }
};

/// Signatures of the path restricted to [t_0, t_j] for every grid node j,
/// via Chen's identity segment by segment. Output has M+1 entries; entry 0
/// is the unit tensor.
inline std::vector<TruncatedTensor> path_signature_stream(const PathSample& path,
                                                          const BasisOrder& ord,
                                                          bool time_extended = true) {
    path.validate(time_extended);
    if (path.values.cols() != ord.alphabet())
        throw std::invalid_argument("path_signature_stream: path dimension mismatch");
    std::vector<TruncatedTensor> out;
    out.reserve(path.times.size());
    out.push_back(unit_tensor(ord));
    for (int j = 0; j < path.segments(); ++j) {
        Eigen::VectorXd dx = (path.values.row(j + 1) - path.values.row(j)).transpose();
        out.push_back(chen_concat(out.back(), segment_exponential(dx, ord)));
    }
    return out;
}

/// Signature over the whole interval only.
inline TruncatedTensor path_signature(const PathSample& path, const BasisOrder& ord,
                                      bool time_extended = true) {
    path.validate(time_extended);
    if (path.values.cols() != ord.alphabet())
        throw std::invalid_argument("path_signature: path dimension mismatch");
    TruncatedTensor sig = unit_tensor(ord);
    for (int j = 0; j < path.segments(); ++j) {
        Eigen::VectorXd dx = (path.values.row(j + 1) - path.values.row(j)).transpose();
        sig = chen_concat(sig, segment_exponential(dx, ord));
    }
    return sig;
}

/// <l, a> for a functional of degree <= m.
inline double apply_functional(const LinearFunctional& ell, const TruncatedTensor& a) {
    const BasisOrder& ord = *a.order;
    if (ell.degree() > ord.level())
        throw std::invalid_argument("apply_functional: functional degree exceeds truncation level");
    double s = 0.0;
    for (const auto& [w, c] : ell.terms()) s += c * a.coeffs[ord.word_to_index(w)];
    return s;
}

/// Row vector of l in the basis of ord, for use as an output matrix row.
inline Eigen::RowVectorXd functional_row(const LinearFunctional& ell, const BasisOrder& ord) {
    if (ell.degree() > ord.level())
        throw std::invalid_argument("functional_row: functional degree exceeds truncation level");
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(ord.dim());
    for (const auto& [w, c] : ell.terms()) r[ord.word_to_index(w)] += c;
    return r;
}

/// Inverse of functional_row: dense coefficient vector back to a functional.
inline LinearFunctional functional_from_row(const Eigen::RowVectorXd& row, const BasisOrder& ord) {
    if (row.size() != ord.dim())
        throw std::invalid_argument("functional_from_row: size mismatch");
    LinearFunctional ell;
    for (Eigen::Index k = 0; k < row.size(); ++k)
        if (row[k] != 0.0) ell.add(ord.index_to_word(k), row[k]);
    return ell;
}

} // namespace sigmor
