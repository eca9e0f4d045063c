#include <iostream>

#include "CLI11.hpp"

#include "subtrack/commands.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Carrier trajectory optimization against acoustic targets"};
    app.require_subcommand(1);

    subtrack::cli::CommandOptions opts;
    std::uint64_t seed = 0;
    int workers = 0;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", opts.config, "scenario JSON");
        if (needs_config)
            c->required();
        sub->add_option("--out", opts.out, "output directory")->default_val(".");
        sub->add_option("--seed", seed, "override the master seed");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    };

    common(app.add_subcommand("diagram", "write loss diagrams for each emitter"), true);
    common(app.add_subcommand("quantize", "train grids and transition matrices"), true);
    auto* solve = app.add_subcommand("solve", "backward DP on a stored chain");
    common(solve, true);
    solve->add_option("--chain", opts.chain, "chain archive from quantize")->required();
    auto* run = app.add_subcommand("run", "closed-loop scenario run");
    common(run, true);
    run->add_flag("--baseline", opts.baseline, "zero action after period 1");
    auto* compare = app.add_subcommand("compare", "compare two run logs");
    common(compare, false);
    compare->add_option("--a", opts.log_a, "first log.csv")->required();
    compare->add_option("--b", opts.log_b, "second log.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    auto* sub = app.get_subcommands().front();
    if (sub->count("--seed"))
        opts.seed = seed;
    if (sub->count("--workers"))
        opts.workers = workers;
    return subtrack::cli::dispatch(sub->get_name(), opts, std::cerr);
}
