#pragma once

#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sigmor/balancing.hpp"
#include "sigmor/fit.hpp"
#include "sigmor/system.hpp"

namespace sigmor {

/// Shortest decimal string that parses back to the same double, bit for bit.
inline std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    if (res.ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
    double x = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), x);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw std::runtime_error("parse_double: bad number '" + std::string(text) + "'");
    return x;
}

inline std::int64_t parse_int(std::string_view text) {
    std::int64_t x = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), x);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
        throw std::runtime_error("parse_int: bad integer '" + std::string(text) + "'");
    return x;
}

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    return std::string(buf, 16);
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace detail {

/// Whitespace-token scanner for the text formats. All formats below are pure
/// token streams; newlines only aid readability.
class TokenStream {
  public:
    TokenStream(std::string text, std::string origin)
        : text_(std::move(text)), origin_(std::move(origin)) {
        pos_ = 0;
    }

    bool done() {
        skip_ws();
        return pos_ >= text_.size();
    }

    std::string_view next() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of file");
        std::size_t start = pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
        return std::string_view(text_).substr(start, pos_ - start);
    }

    void expect(std::string_view kw) {
        auto t = next();
        if (t != kw) fail("expected '" + std::string(kw) + "', found '" + std::string(t) + "'");
    }

    std::int64_t next_int() { return parse_int(next()); }
    double next_double() { return parse_double(next()); }

    [[noreturn]] void fail(const std::string& msg) const {
        std::size_t line = 1;
        for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i)
            if (text_[i] == '\n') ++line;
        throw std::runtime_error(origin_ + ":" + std::to_string(line) + ": " + msg);
    }

  private:
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    std::string text_;
    std::string origin_;
    std::size_t pos_;
};

inline void append_triplets(std::ostringstream& os, const SpMat& M) {
    os << M.nonZeros() << "\n";
    for (int k = 0; k < M.outerSize(); ++k)
        for (SpMat::InnerIterator it(M, k); it; ++it)
            os << it.row() << ' ' << it.col() << ' ' << format_double(it.value()) << "\n";
}

inline void append_triplets(std::ostringstream& os, const Eigen::MatrixXd& M) {
    std::int64_t nnz = 0;
    for (Eigen::Index c = 0; c < M.cols(); ++c)
        for (Eigen::Index r = 0; r < M.rows(); ++r)
            if (M(r, c) != 0.0) ++nnz;
    os << nnz << "\n";
    for (Eigen::Index c = 0; c < M.cols(); ++c)
        for (Eigen::Index r = 0; r < M.rows(); ++r)
            if (M(r, c) != 0.0) os << r << ' ' << c << ' ' << format_double(M(r, c)) << "\n";
}

inline std::vector<Triplet> read_triplets(TokenStream& ts, std::int64_t rows, std::int64_t cols) {
    const std::int64_t nnz = ts.next_int();
    if (nnz < 0 || nnz > rows * cols) ts.fail("triplet count out of range");
    std::vector<Triplet> out;
    out.reserve(static_cast<std::size_t>(nnz));
    for (std::int64_t k = 0; k < nnz; ++k) {
        Triplet t;
        t.row = ts.next_int();
        t.col = ts.next_int();
        t.value = ts.next_double();
        if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
            ts.fail("triplet index out of range");
        out.push_back(t);
    }
    return out;
}

inline void append_dense_rows(std::ostringstream& os, const Eigen::MatrixXd& M) {
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) {
            if (c) os << ' ';
            os << format_double(M(r, c));
        }
        os << "\n";
    }
}

inline Eigen::MatrixXd read_dense_rows(TokenStream& ts, std::int64_t rows, std::int64_t cols) {
    Eigen::MatrixXd M(rows, cols);
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) M(r, c) = ts.next_double();
    return M;
}

inline bool same_triplets(const std::vector<Triplet>& a, const std::vector<Triplet>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k)
        if (a[k].row != b[k].row || a[k].col != b[k].col ||
            std::bit_cast<std::uint64_t>(a[k].value) != std::bit_cast<std::uint64_t>(b[k].value))
            return false;
    return true;
}

struct SystemFile {
    std::string kind;
    int d = 0;
    int m = 0;
    std::int64_t n = 0;
    int p = 0;
    std::vector<Triplet> A;
    std::vector<std::vector<Triplet>> N;  // letters 2..d
    Eigen::MatrixXd K;
    Eigen::VectorXd z;
    Eigen::MatrixXd L;
};

inline SystemFile read_system_file(const std::filesystem::path& path) {
    TokenStream ts(read_text_file(path), path.string());
    ts.expect("sigmor-system");
    if (ts.next_int() != 1) ts.fail("unsupported system format version");
    SystemFile f;
    f.kind = std::string(ts.next());
    if (f.kind != "full" && f.kind != "reduced") ts.fail("unknown system kind '" + f.kind + "'");
    ts.expect("d");
    f.d = static_cast<int>(ts.next_int());
    ts.expect("m");
    f.m = static_cast<int>(ts.next_int());
    ts.expect("n");
    f.n = ts.next_int();
    ts.expect("p");
    f.p = static_cast<int>(ts.next_int());
    if (f.d < 2 || f.m < 1 || f.n < 1 || f.p < 1) ts.fail("bad header dimensions");
    ts.expect("A");
    f.A = read_triplets(ts, f.n, f.n);
    for (int letter = 2; letter <= f.d; ++letter) {
        ts.expect("N");
        if (ts.next_int() != letter) ts.fail("diffusion sections out of order");
        f.N.push_back(read_triplets(ts, f.n, f.n));
    }
    const int q = f.d - 1;
    ts.expect("K");
    f.K = read_dense_rows(ts, q, q);
    ts.expect("z");
    f.z = read_dense_rows(ts, 1, f.n).transpose();
    ts.expect("L");
    f.L = read_dense_rows(ts, f.p, f.n);
    if (!ts.done()) ts.fail("trailing content after system sections");
    return f;
}

template <class Sys>
std::string system_text(const Sys& sys, const char* kind) {
    std::ostringstream os;
    os << "sigmor-system 1 " << kind << "\n";
    os << "d " << sys.d << " m " << sys.m << " n " << sys.dim() << " p " << sys.outputs() << "\n";
    os << "A ";
    append_triplets(os, sys.A);
    for (std::size_t i = 0; i < sys.diffusion.size(); ++i) {
        os << "N " << (i + 2) << ' ';
        append_triplets(os, sys.diffusion[i]);
    }
    os << "K\n";
    append_dense_rows(os, sys.K.K);
    os << "z\n";
    append_dense_rows(os, sys.z.transpose());
    os << "L\n";
    append_dense_rows(os, sys.L);
    return os.str();
}

} // namespace detail

inline void write_system(const std::filesystem::path& path, const SignatureSDE& sys) {
    write_text_file(path, detail::system_text(sys, "full"));
}

inline void write_system(const std::filesystem::path& path, const ReducedSystem& sys) {
    if (sys.d < 2 || sys.m < 1)
        throw std::invalid_argument("write_system: reduced system lacks its parent (d, m)");
    write_text_file(path, detail::system_text(sys, "reduced"));
}

inline std::string peek_system_kind(const std::filesystem::path& path) {
    detail::TokenStream ts(read_text_file(path), path.string());
    ts.expect("sigmor-system");
    ts.next_int();
    return std::string(ts.next());
}

/// Reads a full signature system. The coordinate matrices in the file are
/// redundant given (d, m, K): the system is rebuilt through assemble_system
/// and the stored triplets must match the rebuilt ones bit for bit, which
/// catches hand-edited or truncated files.
inline SignatureSDE read_full_system(const std::filesystem::path& path) {
    auto f = detail::read_system_file(path);
    if (f.kind != "full")
        throw std::runtime_error(path.string() + ": expected a full system, found " + f.kind);
    NoiseCovariance K{f.K};
    SignatureSDE sys = assemble_system(f.d, f.m, K, f.L, f.z);
    if (sys.dim() != f.n)
        throw std::runtime_error(path.string() + ": header n does not match dim(d, m)");
    if (!detail::same_triplets(f.A, to_triplets(sys.A)))
        throw std::runtime_error(path.string() + ": stored A disagrees with assembled system");
    for (int i = 0; i < f.d - 1; ++i)
        if (!detail::same_triplets(f.N[static_cast<std::size_t>(i)],
                                   to_triplets(sys.diffusion[static_cast<std::size_t>(i)])))
            throw std::runtime_error(path.string() + ": stored N" + std::to_string(i + 2) +
                                     " disagrees with assembled system");
    return sys;
}

inline ReducedSystem read_reduced_system(const std::filesystem::path& path) {
    auto f = detail::read_system_file(path);
    if (f.kind != "reduced")
        throw std::runtime_error(path.string() + ": expected a reduced system, found " + f.kind);
    ReducedSystem sys;
    sys.nt = f.n;
    sys.d = f.d;
    sys.m = f.m;
    sys.A = Eigen::MatrixXd::Zero(f.n, f.n);
    for (const auto& t : f.A) sys.A(t.row, t.col) = t.value;
    sys.diffusion.reserve(f.N.size());
    for (const auto& ts : f.N) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(f.n, f.n);
        for (const auto& t : ts) M(t.row, t.col) = t.value;
        sys.diffusion.push_back(std::move(M));
    }
    sys.K = NoiseCovariance{f.K};
    sys.K.validate();
    sys.z = f.z;
    sys.L = f.L;
    return sys;
}

/// Fitted functional file: header, fit diagnostics, then one (word, value)
/// pair per nonzero coefficient.
inline void write_functional(const std::filesystem::path& path, const FitResult& fit) {
    BasisOrder ord(fit.d, fit.m);
    if (fit.ell.size() != ord.dim())
        throw std::invalid_argument("write_functional: coefficient count does not match (d, m)");
    std::ostringstream os;
    os << "sigmor-functional 1\n";
    os << "d " << fit.d << " m " << fit.m << "\n";
    os << "lambda " << format_double(fit.lambda) << "\n";
    os << "rmse_train " << format_double(fit.rmse_train) << "\n";
    os << "rmse_valid " << format_double(fit.rmse_valid) << "\n";
    std::int64_t nnz = 0;
    for (Eigen::Index k = 0; k < fit.ell.size(); ++k)
        if (fit.ell[k] != 0.0) ++nnz;
    os << "terms " << nnz << "\n";
    for (Eigen::Index k = 0; k < fit.ell.size(); ++k)
        if (fit.ell[k] != 0.0)
            os << format_word(ord.index_to_word(k), fit.d) << ' ' << format_double(fit.ell[k])
               << "\n";
    write_text_file(path, os.str());
}

inline FitResult read_functional(const std::filesystem::path& path) {
    detail::TokenStream ts(read_text_file(path), path.string());
    ts.expect("sigmor-functional");
    if (ts.next_int() != 1) ts.fail("unsupported functional format version");
    FitResult fit;
    ts.expect("d");
    fit.d = static_cast<int>(ts.next_int());
    ts.expect("m");
    fit.m = static_cast<int>(ts.next_int());
    BasisOrder ord(fit.d, fit.m);
    ts.expect("lambda");
    fit.lambda = ts.next_double();
    ts.expect("rmse_train");
    fit.rmse_train = ts.next_double();
    ts.expect("rmse_valid");
    fit.rmse_valid = ts.next_double();
    ts.expect("terms");
    const std::int64_t nnz = ts.next_int();
    fit.ell = Eigen::VectorXd::Zero(ord.dim());
    for (std::int64_t k = 0; k < nnz; ++k) {
        const Word w = parse_word(std::string(ts.next()), fit.d);
        if (w.length() > fit.m) ts.fail("word '" + format_word(w, fit.d) + "' exceeds level m");
        fit.ell[ord.word_to_index(w)] = ts.next_double();
    }
    if (!ts.done()) ts.fail("trailing content after functional terms");
    return fit;
}

// --- binary artifacts ---

namespace detail {

inline void write_bytes(std::ofstream& out, const void* data, std::size_t bytes) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

inline void read_bytes(std::ifstream& in, void* data, std::size_t bytes,
                       const std::filesystem::path& path) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (in.gcount() != static_cast<std::streamsize>(bytes))
        throw std::runtime_error(path.string() + ": truncated binary file");
}

} // namespace detail

struct GramianFile {
    Eigen::MatrixXd M;
    double horizon = 0.0;
};

/// 16-byte header (int64 n, double horizon) followed by n*n row-major doubles.
inline void write_gramian(const std::filesystem::path& path, const Eigen::MatrixXd& M,
                          double horizon) {
    if (M.rows() != M.cols()) throw std::invalid_argument("write_gramian: matrix must be square");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::int64_t n = M.rows();
    detail::write_bytes(out, &n, sizeof n);
    detail::write_bytes(out, &horizon, sizeof horizon);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R = M;
    detail::write_bytes(out, R.data(), sizeof(double) * static_cast<std::size_t>(n * n));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline GramianFile read_gramian(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::int64_t n = 0;
    GramianFile f;
    detail::read_bytes(in, &n, sizeof n, path);
    detail::read_bytes(in, &f.horizon, sizeof f.horizon, path);
    if (n < 1 || n > 1 << 20) throw std::runtime_error(path.string() + ": implausible dimension");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R(n, n);
    detail::read_bytes(in, R.data(), sizeof(double) * static_cast<std::size_t>(n * n), path);
    f.M = R;
    return f;
}

/// A batch of simulated model paths: spot levels on the grid plus the driver
/// increments that produced them, as consumed by the fitting stage.
struct PathBatch {
    double horizon = 0.0;
    Eigen::MatrixXd spot;        // (steps+1) x paths
    Eigen::MatrixXd increments;  // (steps*q) x paths
};

inline void write_path_batch(const std::filesystem::path& path, const PathBatch& batch) {
    const std::int64_t steps = batch.spot.rows() - 1;
    if (steps < 1 || batch.increments.cols() != batch.spot.cols() ||
        batch.increments.rows() % steps != 0)
        throw std::invalid_argument("write_path_batch: inconsistent shapes");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const char magic[8] = {'S', 'I', 'G', 'P', 'A', 'T', 'H', '1'};
    detail::write_bytes(out, magic, sizeof magic);
    const std::int64_t paths = batch.spot.cols();
    const std::int64_t q = batch.increments.rows() / steps;
    detail::write_bytes(out, &steps, sizeof steps);
    detail::write_bytes(out, &paths, sizeof paths);
    detail::write_bytes(out, &q, sizeof q);
    detail::write_bytes(out, &batch.horizon, sizeof batch.horizon);
    detail::write_bytes(out, batch.spot.data(), sizeof(double) * batch.spot.size());
    detail::write_bytes(out, batch.increments.data(), sizeof(double) * batch.increments.size());
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline PathBatch read_path_batch(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    detail::read_bytes(in, magic, sizeof magic, path);
    if (std::memcmp(magic, "SIGPATH1", 8) != 0)
        throw std::runtime_error(path.string() + ": not a path batch file");
    std::int64_t steps = 0, paths = 0, q = 0;
    PathBatch batch;
    detail::read_bytes(in, &steps, sizeof steps, path);
    detail::read_bytes(in, &paths, sizeof paths, path);
    detail::read_bytes(in, &q, sizeof q, path);
    detail::read_bytes(in, &batch.horizon, sizeof batch.horizon, path);
    if (steps < 1 || paths < 1 || q < 1 || steps > (1 << 24) || paths > (1 << 24) || q > 64)
        throw std::runtime_error(path.string() + ": implausible path batch header");
    batch.spot.resize(steps + 1, paths);
    batch.increments.resize(steps * q, paths);
    detail::read_bytes(in, batch.spot.data(), sizeof(double) * batch.spot.size(), path);
    detail::read_bytes(in, batch.increments.data(), sizeof(double) * batch.increments.size(),
                       path);
    return batch;
}

// --- CSV ---

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::runtime_error("csv column '" + std::string(name) + "' not found");
    }
};

inline std::string csv_text(const CsvTable& table) {
    std::ostringstream os;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) os << ',';
        os << table.header[i];
    }
    os << "\n";
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size())
            throw std::invalid_argument("csv row width does not match header");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) os << ',';
            os << format_double(row[i]);
        }
        os << "\n";
    }
    return os.str();
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    write_text_file(path, csv_text(table));
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty csv");
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) table.header.push_back(cell);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream rs(line);
        std::vector<double> row;
        while (std::getline(rs, cell, ',')) row.push_back(parse_double(cell));
        if (row.size() != table.header.size())
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": row width does not match header");
        table.rows.push_back(std::move(row));
    }
    return table;
}

} // namespace sigmor
