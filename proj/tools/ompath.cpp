#include <iostream>

#include "CLI11.hpp"
#include "ompath/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Onsager-Machlup most probable paths for jump-diffusion SDEs"};
    app.require_subcommand(1);

    ompath::cli::CommandOptions opt;
    std::string config, out, path;
    std::uint64_t seed = 0;

    const char* names[] = {"validate", "solve", "simulate", "action", "benchmark"};
    const char* help[] = {"check the bounded-variation gate, noise nondegeneracy and Poincare symmetry",
                          "solve the transition BVP by shooting and by direct action minimization",
                          "simulate a sample-path ensemble and its coverage band",
                          "evaluate the action of a path CSV (--path)",
                          "run the built-in Maier-Stein experiment"};
    for (int i = 0; i < 5; ++i) {
        auto* sub = app.add_subcommand(names[i], help[i]);
        auto* c = sub->add_option("--config", config, "TOML or JSON run configuration");
        if (i != 4) {
            c->required();
        }
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "base seed for simulation");
        if (i == 3) {
            sub->add_option("--path", path, "path CSV with header t,x1..xd")->required();
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return ompath::cli::input_error;
    }

    auto* sub = app.get_subcommands().front();
    if (!config.empty()) opt.config = config;
    if (!out.empty()) opt.out = out;
    if (sub->count("--seed")) opt.seed = seed;
    if (!path.empty()) opt.path = path;
    return ompath::cli::run_command(sub->get_name(), opt, std::cout, std::cerr);
}
