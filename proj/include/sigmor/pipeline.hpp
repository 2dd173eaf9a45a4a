#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigmor/balancing.hpp"
#include "sigmor/config.hpp"
#include "sigmor/fit.hpp"
#include "sigmor/gramians.hpp"
#include "sigmor/io.hpp"
#include "sigmor/mc.hpp"
#include "sigmor/models.hpp"
#include "sigmor/svg.hpp"
#include "sigmor/system.hpp"

namespace sigmor {

struct PipelineContext {
    PipelineConfig cfg;
    int threads = 1;
    bool force = false;
    std::ostream* log = nullptr;

    void note(const std::string& line) const {
        if (log) (*log) << line << "\n";
    }
};

namespace pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

// --- artifact hashes -------------------------------------------------------
//
// Every artifact is content-addressed by a hash of the config values that
// determine it, chained through its inputs. A stage refuses stale inputs and
// skips outputs whose recorded hash already matches.

inline std::string chain(std::initializer_list<std::string> parts) {
    std::string acc;
    for (const auto& p : parts) {
        acc += p;
        acc += '|';
    }
    return hash_hex(fnv1a64(acc));
}

inline std::string h_simulate(const PipelineConfig& c) {
    return chain({c.canonical_section("model"), c.canonical_section("seed"),
                  "paths=" + std::to_string(c.fit_paths), "steps=" + std::to_string(c.fit_steps),
                  "horizon=" + format_double(c.horizon)});
}

inline std::string h_fit(const PipelineConfig& c) {
    return chain({h_simulate(c), c.canonical_section("signature"),
                  "lambda=" + (c.fit_lambda < 0.0 ? std::string("auto")
                                                  : format_double(c.fit_lambda)),
                  "split=" + format_double(c.fit_split)});
}

inline std::string h_build(const PipelineConfig& c) { return chain({h_fit(c), "build"}); }

inline std::string h_gramians(const PipelineConfig& c) {
    return chain({h_build(c), "horizon=" + format_double(c.horizon)});
}

inline std::string h_reduced(const PipelineConfig& c, std::int64_t nt) {
    return chain({h_gramians(c), "rank_tol=" + format_double(c.rank_tol),
                  "nt=" + std::to_string(nt)});
}

inline std::string pricing_frag(const PipelineConfig& c, double maturity) {
    return "T=" + format_double(maturity) + ";paths=" + std::to_string(c.price_paths) +
           ";spy=" + std::to_string(c.steps_per_year) + ";anti=" +
           (c.antithetic ? "1" : "0");
}

inline std::string h_smile_model(const PipelineConfig& c, double maturity) {
    return chain({c.canonical_section("model"), c.canonical_section("seed"),
                  pricing_frag(c, maturity)});
}

inline std::string h_smile_full(const PipelineConfig& c, double maturity) {
    return chain({h_build(c), pricing_frag(c, maturity)});
}

inline std::string h_smile_red(const PipelineConfig& c, std::int64_t nt, double maturity) {
    return chain({h_reduced(c, nt), pricing_frag(c, maturity)});
}

inline std::string h_l2(const PipelineConfig& c) {
    std::string nts;
    for (auto nt : c.n_list) nts += std::to_string(nt) + ",";
    return chain({h_gramians(c), "rank_tol=" + format_double(c.rank_tol), "n_list=" + nts,
                  "l2_paths=" + std::to_string(c.l2_paths),
                  "l2_steps=" + std::to_string(c.l2_steps)});
}

// --- artifact names --------------------------------------------------------

inline std::string smile_model_name(std::size_t i) {
    return "smile_model_" + std::to_string(i + 1) + ".csv";
}
inline std::string smile_full_name(std::size_t i) {
    return "smile_full_" + std::to_string(i + 1) + ".csv";
}
inline std::string smile_red_name(std::int64_t nt, std::size_t i) {
    return "smile_red" + std::to_string(nt) + "_" + std::to_string(i + 1) + ".csv";
}
inline std::string reduced_name(std::int64_t nt) {
    return "reduced_" + std::to_string(nt) + ".txt";
}

// --- meta bookkeeping ------------------------------------------------------

inline json load_meta(const fs::path& out) {
    const fs::path p = out / "meta.json";
    if (!fs::exists(p)) return json{{"artifacts", json::object()}};
    json j = json::parse(read_text_file(p));
    if (!j.contains("artifacts") || !j["artifacts"].is_object())
        throw std::runtime_error(p.string() + ": malformed meta file");
    return j;
}

inline void save_meta(const fs::path& out, const json& meta) {
    write_text_file(out / "meta.json", meta.dump(2) + "\n");
}

inline bool artifact_fresh(const fs::path& out, const json& meta, const std::string& name,
                           const std::string& hash) {
    return fs::exists(out / name) && meta["artifacts"].contains(name) &&
           meta["artifacts"][name] == hash;
}

struct MissingInput {
    std::string name;
    std::string producer;
    bool stale = false;
};

inline void require_inputs(const PipelineContext& ctx, const json& meta,
                           const std::vector<std::array<std::string, 3>>& inputs) {
    // each entry: {artifact, expected hash, producing command}
    std::vector<MissingInput> missing;
    for (const auto& in : inputs) {
        if (!fs::exists(ctx.cfg.out / in[0]))
            missing.push_back({in[0], in[2], false});
        else if (!artifact_fresh(ctx.cfg.out, meta, in[0], in[1]) && !ctx.force)
            missing.push_back({in[0], in[2], true});
    }
    if (missing.empty()) return;
    std::ostringstream os;
    os << "missing or stale inputs:";
    for (const auto& m : missing)
        os << "\n  " << m.name << (m.stale ? " is stale for the current config" : " is missing")
           << "; run 'sigmor " << m.producer << "'"
           << (m.stale ? " again, or pass --force to use it as-is" : " first");
    throw std::runtime_error(os.str());
}

// --- model plumbing --------------------------------------------------------

/// Simulates one block of model paths into preallocated column ranges.
template <class Simulator>
void model_batch(const Simulator& sim, const SimulationGrid& grid, int threads,
                 Eigen::MatrixXd& spot, Eigen::MatrixXd& increments, bool terminal_only) {
    const auto plan = sim.prepare(grid);
    const std::int64_t q = Simulator::drivers();
    spot.resize(terminal_only ? 1 : grid.steps + 1, grid.n_paths);
    increments.resize(grid.steps * q, grid.n_paths);
    parallel_chunks(grid.n_paths, kSimulationChunk, threads, [&](std::int64_t b, std::int64_t e) {
        const auto chunk = sim.simulate_chunk(plan, b, e, terminal_only, true);
        spot.middleCols(b, e - b) = chunk.spot;
        increments.middleCols(b, e - b) = chunk.increments;
    });
}

inline void simulate_model_paths(const PipelineConfig& cfg, const SimulationGrid& grid,
                                 int threads, Eigen::MatrixXd& spot, Eigen::MatrixXd& increments,
                                 bool terminal_only) {
    if (cfg.model_type == "bergomi") {
        BergomiSimulator sim(cfg.bergomi, 1, cfg.antithetic);
        model_batch(sim, grid, threads, spot, increments, terminal_only);
    } else {
        RoughBergomiSimulator sim(cfg.rough, 1, cfg.antithetic);
        model_batch(sim, grid, threads, spot, increments, terminal_only);
    }
}

/// Terminal output row of a linear system driven by externally supplied
/// increments, one value per path.
template <class System>
Eigen::RowVectorXd terminal_output(const System& sys, double dt, std::int64_t steps,
                                   const Eigen::MatrixXd& increments) {
    Eigen::RowVectorXd out(increments.cols());
    euler_chunk(sys, dt, steps, increments, [&](std::int64_t j, const Eigen::MatrixXd& X) {
        if (j == steps) out = (sys.L * X).row(0);
    });
    return out;
}

inline CsvTable smile_csv(const IVSmile& smile) {
    CsvTable t;
    t.header = {"T", "K", "price", "stderr", "iv", "iv_stderr"};
    for (const auto& pt : smile.points)
        t.rows.push_back({smile.maturity, pt.strike, pt.price, pt.se, pt.iv, pt.iv_se});
    return t;
}

inline IVSmile smile_from_csv(const CsvTable& t, double spot) {
    IVSmile smile;
    smile.spot = spot;
    const auto cT = t.column("T"), cK = t.column("K"), cP = t.column("price"),
               cS = t.column("stderr"), cI = t.column("iv"), cE = t.column("iv_stderr");
    for (const auto& row : t.rows) {
        smile.maturity = row[cT];
        SmilePoint pt;
        pt.strike = row[cK];
        pt.price = row[cP];
        pt.se = row[cS];
        pt.iv = row[cI];
        pt.iv_se = row[cE];
        pt.ok = std::isfinite(pt.iv);
        if (!pt.ok) ++smile.failures;
        smile.points.push_back(pt);
    }
    return smile;
}

// --- stages ----------------------------------------------------------------

inline void cmd_simulate(const PipelineContext& ctx) {
    const auto& c = ctx.cfg;
    fs::create_directories(c.out);
    json meta = load_meta(c.out);
    const std::string h = h_simulate(c);
    if (!ctx.force && artifact_fresh(c.out, meta, "paths.bin", h)) {
        ctx.note("[simulate] paths.bin up to date");
        return;
    }
    SimulationGrid grid;
    grid.horizon = c.horizon;
    grid.steps = c.fit_steps;
    grid.n_paths = c.fit_paths;
    grid.seed = c.seed;
    PathBatch batch;
    batch.horizon = c.horizon;
    simulate_model_paths(c, grid, ctx.threads, batch.spot, batch.increments, false);
    write_path_batch(c.out / "paths.bin", batch);
    meta["artifacts"]["paths.bin"] = h;
    save_meta(c.out, meta);
    ctx.note("[simulate] wrote paths.bin (" + std::to_string(c.fit_paths) + " paths, " +
             std::to_string(c.fit_steps) + " steps)");
}

inline void cmd_fit(const PipelineContext& ctx) {
    const auto& c = ctx.cfg;
    fs::create_directories(c.out);
    json meta = load_meta(c.out);
    const std::string h = h_fit(c);
    if (!ctx.force && artifact_fresh(c.out, meta, "ell.txt", h)) {
        ctx.note("[fit] ell.txt up to date");
        return;
    }
    require_inputs(ctx, meta, {{"paths.bin", h_simulate(c), "simulate"}});
    const PathBatch batch = read_path_batch(c.out / "paths.bin");
    const std::int64_t steps = batch.spot.rows() - 1;
    if (batch.increments.rows() != steps * c.drivers())
        throw std::runtime_error("paths.bin carries " +
                                 std::to_string(batch.increments.rows() / steps) +
                                 " drivers per step but [signature] d implies " +
                                 std::to_string(c.drivers()));
    const double dt = batch.horizon / static_cast<double>(steps);
    const FitResult fit = fit_signature_model(batch.increments, batch.spot, dt, c.d, c.m,
                                              c.fit_lambda, c.fit_split);
    write_functional(c.out / "ell.txt", fit);
    meta["artifacts"]["ell.txt"] = h;
    save_meta(c.out, meta);
    std::ostringstream os;
    os << "[fit] wrote ell.txt (lambda=" << format_double(fit.lambda)
       << ", rmse_train=" << format_double(fit.rmse_train)
       << ", rmse_valid=" << format_double(fit.rmse_valid) << ")";
    ctx.note(os.str());
}

inline void cmd_build(const PipelineContext& ctx) {
    const auto& c = ctx.cfg;
    fs::create_directories(c.out);
    json meta = load_meta(c.out);
    const std::string h = h_build(c);
    if (!ctx.force && artifact_fresh(c.out, meta, "system.txt", h)) {
        ctx.note("[build] system.txt up to date");
        return;
    }
    require_inputs(ctx, meta, {{"ell.txt", h_fit(c), "fit"}});
    const FitResult fit = read_functional(c.out / "ell.txt");
    if (fit.d != c.d || fit.m != c.m)
        throw std::runtime_error("ell.txt was fitted at (d=" + std::to_string(fit.d) + ", m=" +
                                 std::to_string(fit.m) + "), config wants (d=" +
                                 std::to_string(c.d) + ", m=" + std::to_string(c.m) + ")");
    const SignatureSDE sys =
        assemble_system(c.d, c.m, c.noise(), Eigen::MatrixXd(fit.ell.transpose()));
    write_system(c.out / "system.txt", sys);
    meta["artifacts"]["system.txt"] = h;
    save_meta(c.out, meta);
    ctx.note("[build] wrote system.txt (n=" + std::to_string(sys.dim()) + ")");
}

inline void cmd_gramians(const PipelineContext& ctx) {
    const auto& c = ctx.cfg;
    fs::create_directories(c.out);
    json meta = load_meta(c.out);
    const std::string h = h_gramians(c);
    const std::vector<std::string> outs{"P.bin", "Q.bin", "spectra.csv", "sigma.csv"};
    bool fresh = !ctx.force;
    for (const auto& o : outs) fresh = fresh && artifact_fresh(c.out, meta, o, h);
    if (fresh) {
        ctx.note("[gramians] P.bin, Q.bin, spectra.csv, sigma.csv up to date");
        return;
    }
    require_inputs(ctx, meta, {{"system.txt", h_build(c), "build"}});
    const SignatureSDE sys = read_full_system(c.out / "system.txt");
    const GramianPair gp = make_gramians(sys, c.horizon);
    write_gramian(c.out / "P.bin", gp.P, c.horizon);
    write_gramian(c.out / "Q.bin", gp.Q, c.horizon);

    const GramianSpectra sp = gramian_spectra(gp);
    CsvTable spectra;
    spectra.header = {"k", "lambda_k", "mu_k"};
    for (Eigen::Index k = 0; k < sp.lambda.size(); ++k)
        spectra.rows.push_back({static_cast<double>(k + 1), sp.lambda[k], sp.mu[k]});
    write_csv(c.out / "spectra.csv", spectra);

    const Eigen::VectorXd sigma = hankel_spectrum(gp.P, gp.Q);
    CsvTable sig;
    sig.header = {"k", "sigma_k"};
    for (Eigen::Index k = 0; k < sigma.size(); ++k)
        sig.rows.push_back({static_cast<double>(k + 1), sigma[k]});
    write_csv(c.out / "sigma.csv", sig);

    for (const auto& o : outs) meta["artifacts"][o] = h;
    save_meta(c.out, meta);
    ctx.note("[gramians] wrote P.bin, Q.bin, spectra.csv, sigma.csv (horizon=" +
             format_double(c.horizon) + ")");
}

inline void cmd_reduce(const PipelineContext& ctx) {
    const auto& c = ctx.cfg;
    fs::create_directories(c.out);
    json meta = load_meta(c.out);
    if (c.n_list.empty()) {
        ctx.note("[reduce] n_list is empty, nothing to do");
        return;
    }
    bool fresh = !ctx.force;
    for (auto nt : c.n_list) fresh = fresh && artifact_fresh(c.out, meta, reduced_name(nt),
                                                            h_reduced(c, nt));
    if (fresh) {
        ctx.note("[reduce] all reduced systems up to date");
        return;
    }
    const std::string hg = h_gramians(c);
    require_inputs(ctx, meta,
                   {{"system.txt", h_build(c), "build"},
                    {"P.bin", hg, "gramians"},
                    {"Q.bin", hg, "gramians"}});
    const SignatureSDE sys = read_full_system(c.out / "system.txt");
    const GramianFile P = read_gramian(c.out / "P.bin");
    const GramianFile Q = read_gramian(c.out / "Q.bin");
    if (P.M.rows() != sys.dim() || Q.M.rows() != sys.dim())
        throw std::runtime_error("Gramian dimension does not match system.txt");
    const BalancingResult bal = balance(P.M, Q.M, c.rank_tol);
    ctx.note("[reduce] numerical rank r=" + std::to_string(bal.rank) +
             ", sigma1=" + format_double(bal.sigma.size() ? bal.sigma[0] : 0.0));
    for (auto nt : c.n_list) {
        if (nt > static_cast<std::int64_t>(bal.rank))
            throw std::runtime_error("n_list entry " + std::to_string(nt) +
                                     " exceeds the numerical rank r=" +
                                     std::to_string(bal.rank) +
                                     "; lower it or loosen rank_tol");
        const std::string name = reduced_name(nt);
        const std::string h = h_reduced(c, nt);
        if (!ctx.force && artifact_fresh(c.out, meta, name, h)) continue;
        write_system(c.out / name, reduce(sys, bal, nt));
        meta["artifacts"][name] = h;
    }
    save_meta(c.out, meta);
    ctx.note("[reduce] wrote reduced systems for " + std::to_string(c.n_list.size()) +
             " dimensions");
}

inline void cmd_price(const PipelineContext& ctx) {
    const auto& c = ctx.cfg;
    fs::create_directories(c.out);
    json meta = load_meta(c.out);

    std::vector<std::array<std::string, 3>> inputs{{"system.txt", h_build(c), "build"}};
    for (auto nt : c.smile_dims)
        inputs.push_back({reduced_name(nt), h_reduced(c, nt), "reduce"});
    for (auto nt : c.n_list)
        inputs.push_back({reduced_name(nt), h_reduced(c, nt), "reduce"});
    require_inputs(ctx, meta, inputs);

    std::optional<SignatureSDE> full;
    auto ensure_full = [&]() {
        if (!full) full = read_full_system(c.out / "system.txt");
    };

    // Smiles per maturity: the model paths drive the full and reduced systems
    // through their own increments, so all three smiles share one noise
    // sample and the reduction error is not buried under independent MC
    // noise.
    for (std::size_t i = 0; i < c.maturities.size(); ++i) {
        const double T = c.maturities[i];
        bool fresh = !ctx.force &&
                     artifact_fresh(c.out, meta, smile_model_name(i), h_smile_model(c, T)) &&
                     artifact_fresh(c.out, meta, smile_full_name(i), h_smile_full(c, T));
        for (auto nt : c.smile_dims)
            fresh = fresh &&
                    artifact_fresh(c.out, meta, smile_red_name(nt, i), h_smile_red(c, nt, T));
        if (fresh) {
            ctx.note("[price] smiles for T=" + format_double(T) + " up to date");
            continue;
        }
        ensure_full();
        SimulationGrid grid;
        grid.horizon = T;
        grid.steps = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::llround(static_cast<double>(c.steps_per_year) * T)));
        grid.n_paths = c.price_paths;
        grid.seed = c.seed;

        std::vector<ReducedSystem> reds;
        for (auto nt : c.smile_dims) reds.push_back(read_reduced_system(c.out / reduced_name(nt)));

        Eigen::RowVectorXd model_term(grid.n_paths), full_term(grid.n_paths);
        std::vector<Eigen::RowVectorXd> red_term(reds.size(),
                                                 Eigen::RowVectorXd(grid.n_paths));
        auto run_chunks = [&](const auto& sim) {
            const auto plan = sim.prepare(grid);
            parallel_chunks(grid.n_paths, kSimulationChunk, ctx.threads,
                            [&](std::int64_t b, std::int64_t e) {
                                const auto chunk = sim.simulate_chunk(plan, b, e, true, true);
                                model_term.segment(b, e - b) = chunk.spot.row(0);
                                full_term.segment(b, e - b) = terminal_output(
                                    *full, grid.dt(), grid.steps, chunk.increments);
                                for (std::size_t r = 0; r < reds.size(); ++r)
                                    red_term[r].segment(b, e - b) = terminal_output(
                                        reds[r], grid.dt(), grid.steps, chunk.increments);
                            });
        };
        if (c.model_type == "bergomi")
            run_chunks(BergomiSimulator(c.bergomi, 1, c.antithetic));
        else
            run_chunks(RoughBergomiSimulator(c.rough, 1, c.antithetic));

        const auto strikes = strike_grid(T);
        const double spot0 = c.model_type == "bergomi" ? c.bergomi.spot : c.rough.spot;
        auto emit = [&](const std::string& name, const Eigen::RowVectorXd& term,
                        const std::string& hash) {
            const IVSmile smile =
                make_smile(term.transpose(), spot0, T, strikes, c.antithetic);
            write_csv(c.out / name, smile_csv(smile));
            meta["artifacts"][name] = hash;
            if (smile.failures)
                ctx.note("[price] " + name + ": " + std::to_string(smile.failures) +
                         " strikes failed inversion (" + smile.first_failure + ")");
        };
        emit(smile_model_name(i), model_term, h_smile_model(c, T));
        emit(smile_full_name(i), full_term, h_smile_full(c, T));
        for (std::size_t r = 0; r < reds.size(); ++r)
            emit(smile_red_name(c.smile_dims[r], i), red_term[r],
                 h_smile_red(c, c.smile_dims[r], T));
        save_meta(c.out, meta);
        ctx.note("[price] wrote smiles for T=" + format_double(T) + " (" +
                 std::to_string(grid.steps) + " steps, " + std::to_string(grid.n_paths) +
                 " paths)");
    }

    // L2 error curve over the reduction dimensions, full system simulated
    // once and reused as the shared-noise reference.
    if (!c.n_list.empty()) {
        const std::string h = h_l2(c);
        if (!ctx.force && artifact_fresh(c.out, meta, "l2_curve.csv", h)) {
            ctx.note("[price] l2_curve.csv up to date");
            return;
        }
        ensure_full();
        SimulationGrid grid;
        grid.horizon = c.horizon;
        grid.steps = c.l2_steps;
        grid.n_paths = c.l2_paths;
        grid.seed = c.seed;
        const CorrelatedBrownian noise(full->K.K, grid.seed);
        const SimulationResult ref = simulate_linear_sde(*full, grid, &noise, ctx.threads);
        if (!ref.nonfinite_paths.empty())
            ctx.note("[price] warning: " + std::to_string(ref.nonfinite_paths.size()) +
                     " non-finite reference paths");
        CsvTable t;
        t.header = {"nt", "l2_error", "stderr"};
        for (auto nt : c.n_list) {
            const ReducedSystem red = read_reduced_system(c.out / reduced_name(nt));
            const L2Error err = l2_against_reference(ref, red, grid, noise, ctx.threads);
            t.rows.push_back({static_cast<double>(nt), err.relative, err.se_relative});
        }
        write_csv(c.out / "l2_curve.csv", t);
        meta["artifacts"]["l2_curve.csv"] = h;
        save_meta(c.out, meta);
        ctx.note("[price] wrote l2_curve.csv (" + std::to_string(c.n_list.size()) +
                 " dimensions, " + std::to_string(c.l2_paths) + " paths)");
    }
}

inline void cmd_report(const PipelineContext& ctx) {
    const auto& c = ctx.cfg;
    fs::create_directories(c.out);
    json meta = load_meta(c.out);

    std::vector<std::array<std::string, 3>> inputs{
        {"ell.txt", h_fit(c), "fit"}, {"sigma.csv", h_gramians(c), "gramians"}};
    if (!c.n_list.empty()) inputs.push_back({"l2_curve.csv", h_l2(c), "price"});
    for (std::size_t i = 0; i < c.maturities.size(); ++i) {
        const double T = c.maturities[i];
        inputs.push_back({smile_model_name(i), h_smile_model(c, T), "price"});
        inputs.push_back({smile_full_name(i), h_smile_full(c, T), "price"});
        for (auto nt : c.smile_dims)
            inputs.push_back({smile_red_name(nt, i), h_smile_red(c, nt, T), "price"});
    }
    require_inputs(ctx, meta, inputs);

    std::string report_hash_acc;
    for (const auto& in : inputs) report_hash_acc += in[1];
    const std::string h = chain({report_hash_acc, "report"});

    bool fresh = !ctx.force && artifact_fresh(c.out, meta, "summary.json", h) &&
                 artifact_fresh(c.out, meta, "sigma.svg", h) &&
                 (c.n_list.empty() || artifact_fresh(c.out, meta, "l2_curve.svg", h));
    for (std::size_t i = 0; i < c.maturities.size(); ++i)
        fresh = fresh && artifact_fresh(c.out, meta,
                                        "smiles_" + std::to_string(i + 1) + ".svg", h);
    if (fresh) {
        ctx.note("[report] summary.json and charts up to date");
        return;
    }

    json summary;
    summary["model"] = c.model_type;
    summary["d"] = c.d;
    summary["m"] = c.m;
    summary["n"] = dim_truncated(c.d, c.m);
    {
        const FitResult fit = read_functional(c.out / "ell.txt");
        summary["fit"] = {{"lambda", fit.lambda},
                          {"rmse_train", fit.rmse_train},
                          {"rmse_valid", fit.rmse_valid}};
    }

    // sigma spectrum
    {
        const CsvTable t = read_csv(c.out / "sigma.csv");
        const auto ck = t.column("k"), cs = t.column("sigma_k");
        Series s;
        s.label = "sigma_k";
        std::int64_t k_star = 0;
        for (const auto& row : t.rows) {
            s.x.push_back(row[ck]);
            s.y.push_back(row[cs]);
            if (k_star == 0 && row[cs] < 1e-8) k_star = static_cast<std::int64_t>(row[ck]);
        }
        ChartSpec spec;
        spec.title = "Hankel singular values";
        spec.x_label = "k";
        spec.y_label = "sigma_k";
        spec.log_y = true;
        write_text_file(c.out / "sigma.svg", line_chart_svg(spec, {s}));
        meta["artifacts"]["sigma.svg"] = h;
        summary["sigma"] = {{"sigma1", s.y.empty() ? 0.0 : s.y.front()},
                            {"k_star_1e8", k_star}};
    }

    // L2 curve
    if (!c.n_list.empty()) {
        const CsvTable t = read_csv(c.out / "l2_curve.csv");
        const auto cn = t.column("nt"), ce = t.column("l2_error"), cs = t.column("stderr");
        Series s;
        s.label = "relative L2 error";
        json rows = json::array();
        for (const auto& row : t.rows) {
            s.x.push_back(row[cn]);
            s.y.push_back(row[ce]);
            rows.push_back({{"nt", static_cast<std::int64_t>(row[cn])},
                            {"relative", row[ce]},
                            {"se", row[cs]}});
        }
        ChartSpec spec;
        spec.title = "Output error vs reduced dimension";
        spec.x_label = "reduced dimension";
        spec.y_label = "relative L2 error";
        spec.log_y = true;
        write_text_file(c.out / "l2_curve.svg", line_chart_svg(spec, {s}));
        meta["artifacts"]["l2_curve.svg"] = h;
        summary["l2"] = rows;
    }

    // smiles and IV error reports per maturity
    const double spot0 = c.model_type == "bergomi" ? c.bergomi.spot : c.rough.spot;
    json smiles_summary = json::array();
    for (std::size_t i = 0; i < c.maturities.size(); ++i) {
        const IVSmile model = smile_from_csv(read_csv(c.out / smile_model_name(i)), spot0);
        const IVSmile fullsm = smile_from_csv(read_csv(c.out / smile_full_name(i)), spot0);
        std::vector<Series> iv_series;
        auto to_series = [](const IVSmile& sm, const std::string& label) {
            Series s;
            s.label = label;
            for (const auto& pt : sm.points) {
                s.x.push_back(pt.strike);
                s.y.push_back(pt.iv);  // NaN points break the line
            }
            return s;
        };
        iv_series.push_back(to_series(model, c.model_type));
        iv_series.push_back(to_series(fullsm, "signature full"));

        CsvTable errt;
        errt.header = {"T", "K", "nt", "rel_error", "bar"};
        std::vector<Series> err_series;
        json per_nt = json::object();
        for (auto nt : c.smile_dims) {
            const IVSmile red =
                smile_from_csv(read_csv(c.out / smile_red_name(nt, i)), spot0);
            iv_series.push_back(to_series(red, "reduced n=" + std::to_string(nt)));
            const IVErrorReport rep = iv_error_report(fullsm, red);
            Series es;
            es.label = "n=" + std::to_string(nt);
            for (const auto& pt : rep.points) {
                if (!pt.ok) continue;
                errt.rows.push_back(
                    {rep.maturity, pt.strike, static_cast<double>(nt), pt.rel_error, pt.bar});
                es.x.push_back(pt.strike);
                es.y.push_back(pt.rel_error);
            }
            err_series.push_back(std::move(es));
            per_nt[std::to_string(nt)] = {{"max_rel_error", rep.max_rel_error},
                                          {"max_bar", rep.max_bar},
                                          {"skipped", rep.skipped}};
        }

        const std::string idx = std::to_string(i + 1);
        ChartSpec spec;
        spec.title = "Implied volatility, T=" + format_double(c.maturities[i]);
        spec.x_label = "strike";
        spec.y_label = "implied vol";
        write_text_file(c.out / ("smiles_" + idx + ".svg"), line_chart_svg(spec, iv_series));
        meta["artifacts"]["smiles_" + idx + ".svg"] = h;
        if (!c.smile_dims.empty()) {
            write_csv(c.out / ("iv_error_" + idx + ".csv"), errt);
            meta["artifacts"]["iv_error_" + idx + ".csv"] = h;
            ChartSpec espec;
            espec.title = "IV relative error vs full, T=" + format_double(c.maturities[i]);
            espec.x_label = "strike";
            espec.y_label = "relative IV error";
            espec.log_y = true;
            bool plottable = false;
            for (const auto& s : err_series)
                for (double y : s.y) plottable = plottable || y > 0.0;
            if (plottable) {
                write_text_file(c.out / ("iv_error_" + idx + ".svg"),
                                line_chart_svg(espec, err_series));
                meta["artifacts"]["iv_error_" + idx + ".svg"] = h;
            }
        }
        const IVErrorReport fit_gap = iv_error_report(model, fullsm);
        smiles_summary.push_back({{"T", c.maturities[i]},
                                  {"model_vs_full_max_rel_error", fit_gap.max_rel_error},
                                  {"model_vs_full_max_bar", fit_gap.max_bar},
                                  {"reduced_vs_full", per_nt}});
    }
    summary["smiles"] = smiles_summary;

    write_text_file(c.out / "summary.json", summary.dump(2) + "\n");
    meta["artifacts"]["summary.json"] = h;
    save_meta(c.out, meta);
    ctx.note("[report] wrote summary.json and figure SVGs");
}

inline void run_all(const PipelineContext& ctx) {
    cmd_simulate(ctx);
    cmd_fit(ctx);
    cmd_build(ctx);
    cmd_gramians(ctx);
    cmd_reduce(ctx);
    cmd_price(ctx);
    cmd_report(ctx);
}

} // namespace pipeline
} // namespace sigmor
