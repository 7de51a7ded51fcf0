#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "capfuzz/cli.hpp"

namespace {

using capfuzz::app::Command;
using capfuzz::app::OutputFormat;
using capfuzz::app::RunConfig;

struct Flags {
    std::string data;
    std::uint64_t seed_data = 0;
    std::string format = "json";
    std::string out;
    std::string points;
};

void add_common(CLI::App* sub, RunConfig& config, Flags& flags, bool with_data) {
    if (with_data) {
        sub->add_option("--data", flags.data, "input CSV");
        sub->add_option("--seed-data", flags.seed_data, "use the synthetic generator with this seed");
        sub->add_option("--weights-column", config.weights_column, "CSV column holding point weights");
        sub->add_option("--labels-column", config.labels_column, "CSV column holding true labels");
    }
    sub->add_option("--g", config.g, "number of clusters");
    sub->add_option("--capacities", config.capacities, "equal | comma list | @file");
    sub->add_option("--algo", config.algorithm, "capacitated | fcm | equibalanced");
    sub->add_option("--m", config.m, "fuzzifier (fcm only)");
    sub->add_option("--seed", config.seed, "initialization seed");
    sub->add_option("--tol", config.tolerances.convergence_tol, "convergence tolerance");
    sub->add_option("--max-iter", config.tolerances.max_iterations, "iteration cap");
    sub->add_option("--restarts", config.restarts, "seeded restarts, best objective kept");
    sub->add_flag("--normalize", config.normalize, "z-score the features");
    sub->add_option("--out", flags.out, "output path (default stdout)");
    sub->add_option("--format", flags.format, "json | csv")->check(CLI::IsMember({"json", "csv"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fuzzy clustering with generalized capacity constraints"};
    app.require_subcommand(1);

    RunConfig config;
    Flags flags;

    auto* fit = app.add_subcommand("fit", "fit one algorithm to a dataset");
    add_common(fit, config, flags, true);
    auto* compare = app.add_subcommand("compare", "run fcm, equibalanced and capacitated side by side");
    add_common(compare, config, flags, true);
    compare->add_flag("--parallel", config.parallel, "run the three fits concurrently");
    auto* synth = app.add_subcommand("synth", "three-blob synthetic experiment");
    add_common(synth, config, flags, false);
    synth->add_option("--seed-data", flags.seed_data, "generator seed");
    synth->add_option("--points", flags.points, "plot-ready per-point CSV");
    auto* wine = app.add_subcommand("wine", "wine comparison (UCI layout file)");
    add_common(wine, config, flags, false);
    wine->add_option("--data", flags.data, "wine.data path")->required();
    wine->add_flag("--no-normalize", "keep raw features");
    wine->add_flag("--parallel", config.parallel, "run the three fits concurrently");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << nlohmann::json{{"error", "InvalidArgument"}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }

    CLI::App* active = app.get_subcommands().front();
    if (active == fit) config.command = Command::Fit;
    if (active == compare) config.command = Command::Compare;
    if (active == synth) config.command = Command::Synth;
    if (active == wine) {
        config.command = Command::Wine;
        config.normalize = wine->count("--no-normalize") == 0;
        if (wine->count("--restarts") == 0) config.restarts = 10;
    }
    if (!flags.data.empty()) config.data_path = flags.data;
    if (active != wine && active->count("--seed-data") > 0) config.data_seed = flags.seed_data;
    if (!flags.out.empty()) config.out = flags.out;
    if (!flags.points.empty()) config.points_out = flags.points;
    config.format = flags.format == "csv" ? OutputFormat::Csv : OutputFormat::Json;

    return capfuzz::app::dispatch(config);
}
