#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "com/cli/script.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Concept-oriented data engine"};
    app.require_subcommand(1);

    com::cli::ScriptOptions options;
    std::string script;
    std::string output_dir;
    auto* run = app.add_subcommand("run", "Execute a transformation script");
    run->add_option("script", script, "Script file (.coscript)")->required()->check(CLI::ExistingFile);
    run->add_flag("--strict-links", options.strict_links, "Treat unresolved links as errors");
    run->add_flag("--verbose", options.verbose, "Report timings");
    run->add_option("--seed", options.seed, "Seed for sampling (unused by the core statements)");
    run->add_option("--output-dir", output_dir, "Directory for EXPORT files (default: script directory)");
    run->add_option("--threads", options.threads, "Worker threads for column evaluation")
        ->check(CLI::Range(1U, 256U));

    std::string schema;
    auto* validate = app.add_subcommand("validate", "Check a schema file");
    validate->add_option("schema", schema, "Schema file (.cos)")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    if (run->parsed()) {
        if (!output_dir.empty()) {
            options.output_dir = output_dir;
        }
        return com::cli::run_script(script, options, std::cout, std::cerr);
    }
    return com::cli::validate_schema_file(schema, std::cout, std::cerr);
}
