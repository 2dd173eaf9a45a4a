#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "sigmor/balancing.hpp"
#include "sigmor/config.hpp"
#include "sigmor/gramians.hpp"
#include "sigmor/io.hpp"
#include "sigmor/pipeline.hpp"
#include "sigmor/system.hpp"

using namespace sigmor;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    const fs::path dir = fs::temp_directory_path() / "sigmor_io_test";
    fs::create_directories(dir);
    return dir / name;
}

bool same_bits(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

SignatureSDE small_system() {
    Eigen::MatrixXd corr(2, 2);
    corr << 1.0, 0.3, 0.3, 1.0;
    std::mt19937_64 gen(99);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd L(2, dim_truncated(3, 3));
    for (Eigen::Index i = 0; i < L.rows(); ++i)
        for (Eigen::Index j = 0; j < L.cols(); ++j) L(i, j) = nd(gen);
    return assemble_system(3, 3, NoiseCovariance{corr}, L);
}

} // namespace

TEST_CASE("doubles survive the shortest round trip", "[io]") {
    std::mt19937_64 gen(17);
    int tested = 0;
    for (int k = 0; k < 5000; ++k) {
        const double x = std::bit_cast<double>(gen());
        if (!std::isfinite(x)) continue;
        ++tested;
        CHECK(same_bits(parse_double(format_double(x)), x));
    }
    CHECK(tested > 4000);
    for (double x : {0.0, -0.0, 1.0 / 3.0, std::numeric_limits<double>::max(),
                     std::numeric_limits<double>::denorm_min(), -2.2250738585072014e-308}) {
        CHECK(same_bits(parse_double(format_double(x)), x));
    }
    CHECK(std::isnan(parse_double(format_double(std::numeric_limits<double>::quiet_NaN()))));
    CHECK(std::isinf(parse_double(format_double(std::numeric_limits<double>::infinity()))));
    CHECK_THROWS_AS(parse_double("12x"), std::runtime_error);
    CHECK_THROWS_AS(parse_double(""), std::runtime_error);
    CHECK_THROWS_AS(parse_int("3.5"), std::runtime_error);
}

TEST_CASE("full system files round trip bit for bit", "[io]") {
    const SignatureSDE sys = small_system();
    const fs::path p = temp_file("system_roundtrip.txt");
    write_system(p, sys);
    CHECK(peek_system_kind(p) == "full");
    const SignatureSDE back = read_full_system(p);

    CHECK(back.d == sys.d);
    CHECK(back.m == sys.m);
    CHECK(Eigen::MatrixXd(back.A) == Eigen::MatrixXd(sys.A));
    REQUIRE(back.diffusion.size() == sys.diffusion.size());
    for (std::size_t i = 0; i < sys.diffusion.size(); ++i)
        CHECK(Eigen::MatrixXd(back.diffusion[i]) == Eigen::MatrixXd(sys.diffusion[i]));
    CHECK(back.K.K == sys.K.K);
    CHECK(back.z == sys.z);
    for (Eigen::Index i = 0; i < sys.L.rows(); ++i)
        for (Eigen::Index j = 0; j < sys.L.cols(); ++j)
            CHECK(same_bits(back.L(i, j), sys.L(i, j)));

    CHECK_THROWS_AS(read_reduced_system(p), std::runtime_error);

    // a corrupted coefficient no longer matches the assembled system
    std::string text = read_text_file(p);
    const auto pos = text.find("\n1 0 1\n");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 7, "\n1 0 2\n");
    write_text_file(p, text);
    CHECK_THROWS_WITH(read_full_system(p),
                      Catch::Matchers::ContainsSubstring("disagrees with"));
}

TEST_CASE("reduced system files round trip", "[io]") {
    const SignatureSDE sys = small_system();
    const auto gp = make_gramians(sys, 1.0);
    const auto bal = balance(gp.P, gp.Q, 1e-12);
    REQUIRE(bal.sigma.size() >= 3);
    const ReducedSystem red = reduce(sys, bal, 3);

    const fs::path p = temp_file("reduced_roundtrip.txt");
    write_system(p, red);
    CHECK(peek_system_kind(p) == "reduced");
    const ReducedSystem back = read_reduced_system(p);

    CHECK(back.nt == red.nt);
    CHECK(back.d == red.d);
    CHECK(back.m == red.m);
    CHECK(back.A == red.A);
    REQUIRE(back.diffusion.size() == red.diffusion.size());
    for (std::size_t i = 0; i < red.diffusion.size(); ++i)
        CHECK(back.diffusion[i] == red.diffusion[i]);
    CHECK(back.K.K == red.K.K);
    CHECK(back.z == red.z);
    CHECK(back.L == red.L);
    CHECK_THROWS_AS(read_full_system(p), std::runtime_error);
}

TEST_CASE("functional files round trip", "[io]") {
    FitResult fit;
    fit.d = 4;
    fit.m = 2;
    fit.lambda = 3.25e-9;
    fit.rmse_train = 0.001953125;
    fit.rmse_valid = std::numeric_limits<double>::quiet_NaN();
    fit.ell = Eigen::VectorXd::Zero(dim_truncated(4, 2));
    fit.ell[0] = 1.0;
    fit.ell[3] = -0.117;
    fit.ell[20] = 5.0e-17;

    const fs::path p = temp_file("ell_roundtrip.txt");
    write_functional(p, fit);
    const FitResult back = read_functional(p);
    CHECK(back.d == 4);
    CHECK(back.m == 2);
    CHECK(same_bits(back.lambda, fit.lambda));
    CHECK(same_bits(back.rmse_train, fit.rmse_train));
    CHECK(std::isnan(back.rmse_valid));
    REQUIRE(back.ell.size() == fit.ell.size());
    for (Eigen::Index k = 0; k < fit.ell.size(); ++k) CHECK(same_bits(back.ell[k], fit.ell[k]));
}

TEST_CASE("gramian and path batch binaries round trip", "[io]") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd M(7, 7);
    for (Eigen::Index i = 0; i < 7; ++i)
        for (Eigen::Index j = 0; j < 7; ++j) M(i, j) = nd(gen);
    M = Eigen::MatrixXd(0.5 * (M + M.transpose()));

    const fs::path gp = temp_file("gram.bin");
    write_gramian(gp, M, 2.5);
    const GramianFile gf = read_gramian(gp);
    CHECK(gf.horizon == 2.5);
    CHECK(gf.M == M);

    PathBatch batch;
    batch.horizon = 0.75;
    batch.spot.resize(9, 4);
    batch.increments.resize(8 * 3, 4);
    for (Eigen::Index j = 0; j < batch.spot.size(); ++j) batch.spot.data()[j] = nd(gen);
    for (Eigen::Index j = 0; j < batch.increments.size(); ++j)
        batch.increments.data()[j] = nd(gen);
    const fs::path pp = temp_file("paths.bin");
    write_path_batch(pp, batch);
    const PathBatch pb = read_path_batch(pp);
    CHECK(pb.horizon == batch.horizon);
    CHECK(pb.spot == batch.spot);
    CHECK(pb.increments == batch.increments);

    // truncation detected
    std::string raw = read_text_file(pp);
    write_text_file(pp, raw.substr(0, raw.size() / 2));
    CHECK_THROWS_WITH(read_path_batch(pp), Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("csv tables round trip", "[io]") {
    CsvTable t;
    t.header = {"T", "K", "price"};
    t.rows = {{1.0, 0.8, 0.22015799982462567},
              {1.0, 1.2, std::numeric_limits<double>::quiet_NaN()}};
    const fs::path p = temp_file("table.csv");
    write_csv(p, t);
    const CsvTable back = read_csv(p);
    REQUIRE(back.header == t.header);
    REQUIRE(back.rows.size() == 2);
    CHECK(same_bits(back.rows[0][2], t.rows[0][2]));
    CHECK(std::isnan(back.rows[1][2]));
    CHECK(back.column("price") == 2);
    CHECK_THROWS_AS(back.column("vega"), std::runtime_error);

    CsvTable ragged;
    ragged.header = {"a", "b"};
    ragged.rows = {{1.0}};
    CHECK_THROWS_AS(write_csv(p, ragged), std::invalid_argument);
}

TEST_CASE("config parses values lists and ranges", "[io]") {
    const char* text = R"ini(
# smoke configuration
[model]
type = bergomi
omega = 2.5

[signature]
d = 4
m = 3

[fitting]
lambda = auto
split = 0.75

[reduction]
n_list = 1..4, 7

[pricing]
maturities = 0.25, 1
antithetic = true
smile_dims = 2, 4

[io]
seed = 123
out = /tmp/x
)ini";
    const PipelineConfig cfg = parse_config(text, "inline");
    CHECK(cfg.model_type == "bergomi");
    CHECK(cfg.bergomi.omega == 2.5);
    CHECK(cfg.bergomi.k1 == 2.63);  // untouched default
    CHECK(cfg.d == 4);
    CHECK(cfg.m == 3);
    CHECK(cfg.fit_lambda < 0.0);
    CHECK(cfg.fit_split == 0.75);
    CHECK(cfg.n_list == std::vector<std::int64_t>{1, 2, 3, 4, 7});
    CHECK(cfg.maturities == std::vector<double>{0.25, 1.0});
    CHECK(cfg.antithetic);
    CHECK(cfg.smile_dims == std::vector<std::int64_t>{2, 4});
    CHECK(cfg.seed == 123);
    CHECK(cfg.out == fs::path("/tmp/x"));
}

TEST_CASE("config errors are line precise", "[io]") {
    auto fails_with = [](const std::string& text, const std::string& needle) {
        CHECK_THROWS_WITH(parse_config(text, "cfg"),
                          Catch::Matchers::ContainsSubstring(needle));
    };
    fails_with("[model]\ntype = bergomi\nomege = 3\n", "cfg:3");
    fails_with("[model]\ntype = bergomi\nomege = 3\n", "unknown key 'omege'");
    fails_with("[model]\ntype = heston\n", "bergomi or rough_bergomi");
    fails_with("[mdoel]\ntype = bergomi\n", "unknown section");
    fails_with("[model]\nomega = 3\n", "needs a type");
    fails_with("[model]\ntype = bergomi\n[signature]\nd = 4\nd = 4\n", "duplicate key");
    fails_with("[model]\ntype = bergomi\n[signature]\nd = four\n", "needs an integer");
    fails_with("omega = 3\n", "outside any [section]");
    fails_with("[model]\ntype = bergomi\n[pricing]\nantithetic = maybe\n", "true or false");
    fails_with("[model]\ntype = bergomi\n[reduction]\nn_list = 5..2\n", "descending");

    // cross-field validation
    fails_with("[model]\ntype = rough_bergomi\n[signature]\nd = 4\nm = 2\n", "d = 3");
    fails_with("[model]\ntype = bergomi\n[signature]\nd = 4\nm = 2\n"
               "[reduction]\nn_list = 1..30\n",
               "outside [1, 21]");
    fails_with("[model]\ntype = bergomi\n[signature]\nd = 4\nm = 2\n"
               "[reduction]\nn_list = 1..4\n[pricing]\nsmile_dims = 9\n",
               "not in [reduction] n_list");
    fails_with("[model]\ntype = rough_bergomi\nhurst = 1.4\n[signature]\nd = 3\nm = 2\n",
               "hurst");
}

TEST_CASE("canonical hashes track values not formatting", "[io]") {
    const char* a = "[model]\ntype = bergomi\nomega = 3.0\n[signature]\nd = 4\nm = 2\n";
    const char* b = "# comment\n[signature]\nm = 2\nd = 4\n\n[model]\nomega   =   3\ntype = "
                    "bergomi\n";
    const char* c = "[model]\ntype = bergomi\nomega = 2.9\n[signature]\nd = 4\nm = 2\n";
    const PipelineConfig ca = parse_config(a, "a");
    const PipelineConfig cb = parse_config(b, "b");
    const PipelineConfig cc = parse_config(c, "c");
    CHECK(ca.canonical_section("model") == cb.canonical_section("model"));
    CHECK(ca.canonical_section("model") != cc.canonical_section("model"));
    CHECK(pipeline::h_simulate(ca) == pipeline::h_simulate(cb));
    CHECK(pipeline::h_simulate(ca) != pipeline::h_simulate(cc));
    CHECK(pipeline::h_fit(ca) != pipeline::h_simulate(ca));

    PipelineConfig cd = ca;
    cd.fit_paths += 1;
    CHECK(pipeline::h_simulate(cd) != pipeline::h_simulate(ca));
    CHECK(cd.canonical_section("model") == ca.canonical_section("model"));
    cd = ca;
    cd.rank_tol = 1e-10;
    CHECK(pipeline::h_gramians(cd) == pipeline::h_gramians(ca));
    CHECK(pipeline::h_reduced(cd, 3) != pipeline::h_reduced(ca, 3));
}

TEST_CASE("fnv hashes are stable and hex formatted", "[io]") {
    CHECK(fnv1a64("") == 14695981039346656037ULL);
    CHECK(fnv1a64("a") == 12638187200555641996ULL);
    CHECK(hash_hex(0x0123456789abcdefULL) == "0123456789abcdef");
    CHECK(hash_hex(fnv1a64("abc")).size() == 16);
}
