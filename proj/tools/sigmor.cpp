#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sigmor/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"sigmor: signature-SDE balanced truncation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "pipeline configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "override [io] seed");
    int threads = 1;
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    std::string out_dir;
    app.add_option("--out", out_dir, "override [io] out directory");
    bool force = false;
    app.add_flag("--force", force, "rebuild outputs and accept stale inputs");

    app.add_subcommand("simulate", "simulate model paths for fitting");
    app.add_subcommand("fit", "fit the signature functional to the model paths");
    app.add_subcommand("build", "assemble the full signature system");
    app.add_subcommand("gramians", "compute Gramians and their spectra");
    app.add_subcommand("reduce", "balance and project to the reduced systems");
    app.add_subcommand("price", "price smiles and the L2 error curve");
    app.add_subcommand("report", "emit consolidated CSVs and SVG charts");
    app.add_subcommand("run", "run every stage in order");

    CLI11_PARSE(app, argc, argv);

    try {
        sigmor::PipelineContext ctx;
        ctx.cfg = sigmor::load_config(config_path);
        if (seed) ctx.cfg.seed = *seed;
        if (!out_dir.empty()) ctx.cfg.out = out_dir;
        ctx.threads = threads;
        ctx.force = force;
        ctx.log = &std::cout;

        using namespace sigmor::pipeline;
        if (app.got_subcommand("simulate")) cmd_simulate(ctx);
        else if (app.got_subcommand("fit")) cmd_fit(ctx);
        else if (app.got_subcommand("build")) cmd_build(ctx);
        else if (app.got_subcommand("gramians")) cmd_gramians(ctx);
        else if (app.got_subcommand("reduce")) cmd_reduce(ctx);
        else if (app.got_subcommand("price")) cmd_price(ctx);
        else if (app.got_subcommand("report")) cmd_report(ctx);
        else if (app.got_subcommand("run")) run_all(ctx);
        return 0;
    } catch (const std::exception& err) {
        std::cerr << "sigmor: " << err.what() << "\n";
        return 1;
    }
}
