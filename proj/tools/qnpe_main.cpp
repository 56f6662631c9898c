// Command-line front end. Subcommands: gen (synthetic datasets), run
// (classical or quantum pipeline), compare (two run directories), scaling
// (per-stage query exponents). Exit codes: 0 success, 1 usage, 2 structured
// runtime failure (one JSON object on stderr).
#include <iostream>

#include "CLI11.hpp"
#include "qnpe/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Neighborhood-preserving embedding workbench: exact classical reference and a "
                 "deterministic simulation of the quantum pipeline"};
    app.require_subcommand(1);

    qnpe::HarnessOptions opts;

    CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset CSV plus manifest");
    gen->add_option("--dataset", opts.dataset, "Dataset kind")
        ->check(CLI::IsMember({"swiss-roll", "plane", "clusters", "s-curve"}))
        ->capture_default_str();
    gen->add_option("--m", opts.m, "Number of points")->capture_default_str();
    gen->add_option("--n", opts.n, "Feature count")->capture_default_str();
    gen->add_option("--noise", opts.noise, "Gaussian noise standard deviation")
        ->capture_default_str();
    gen->add_option("--seed", opts.seed, "Generator seed")->capture_default_str();
    gen->add_option("--out-dir", opts.out_dir, "Output directory")->capture_default_str();
    gen->add_flag("--header", opts.header, "Write a header row in dataset.csv");

    CLI::App* run = app.add_subcommand("run", "Run one pipeline on a dataset CSV");
    run->add_option("--dataset", opts.dataset, "Input CSV path")->required();
    run->add_option("--mode", opts.mode, "Pipeline to run")
        ->check(CLI::IsMember({"classical", "quantum"}))
        ->capture_default_str();
    run->add_option("--tier", opts.tier, "Simulation tier for quantum subroutines")
        ->check(CLI::IsMember({"circuit", "spectral"}))
        ->capture_default_str();
    run->add_option("--r", opts.r, "Neighbor radius")->capture_default_str();
    run->add_option("--k", opts.k,
                    "Nearest-neighbor count; a positive value selects the knn rule "
                    "(classical mode only)")
        ->capture_default_str();
    run->add_option("--d", opts.d, "Embedding dimension")->capture_default_str();
    run->add_option("--alpha", opts.alpha,
                    "Ridge parameter (default: 0.01 * mean diagonal of the feature Gram matrix)");
    run->add_option("--eps", opts.eps, "Accuracy budget for the quantum pipeline")
        ->capture_default_str();
    run->add_option("--seed", opts.seed, "Simulation seed")->capture_default_str();
    run->add_option("--out-dir", opts.out_dir, "Output directory")->capture_default_str();
    run->add_flag("--dump-states", opts.dump_states,
                  "Also write stores.json with store summaries (quantum mode)");
    run->add_flag("--header", opts.header, "Input CSV has a header row");

    CLI::App* cmp = app.add_subcommand("compare", "Compare two run output directories");
    cmp->add_option("--a", opts.compare_a, "First run directory")->required();
    cmp->add_option("--b", opts.compare_b, "Second run directory")->required();
    cmp->add_option("--out-dir", opts.out_dir, "Output directory")->capture_default_str();

    CLI::App* sca = app.add_subcommand("scaling", "Measure per-stage query scaling along one axis");
    sca->add_option("--axis", opts.axis, "Axis to sweep")
        ->check(CLI::IsMember({"m", "n", "k", "d"}))
        ->capture_default_str();
    sca->add_option("--sizes", opts.sizes,
                    "Axis sizes (at least four, strictly increasing; default depends on axis)");
    sca->add_option("--eps", opts.eps, "Accuracy budget per measured run")->capture_default_str();
    sca->add_option("--tier", opts.tier, "Simulation tier")
        ->check(CLI::IsMember({"circuit", "spectral"}))
        ->capture_default_str();
    sca->add_option("--alpha", opts.alpha, "Ridge parameter override");
    sca->add_option("--seed", opts.seed, "Simulation seed")->capture_default_str();
    sca->add_option("--out-dir", opts.out_dir, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the usage error
        return code == 0 ? 0 : 1;
    }

    if (gen->parsed()) return qnpe::cmd_gen(opts, std::cerr);
    if (run->parsed()) return qnpe::cmd_run(opts, std::cerr);
    if (cmp->parsed()) return qnpe::cmd_compare(opts, std::cerr);
    return qnpe::cmd_scaling(opts, std::cerr);
}
