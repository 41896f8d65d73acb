// Copyright 2026 The bqpe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command line runner: `bqpe run <config>` and `bqpe list-experiments`.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bqpe/experiments.hpp"

namespace {

int fail(const std::string &kind, const std::string &message, int code) {
    std::cerr << bqpe::error_json(kind, message, code).dump() << "\n";
    return code;
}

void list_experiments(bool as_json) {
    if (as_json) {
        bqpe::json out = bqpe::json::array();
        for (const auto &e : bqpe::experiment_registry()) {
            out.push_back({{"name", e.name}, {"figure", e.figure}, {"description", e.description}});
        }
        std::cout << out.dump(2) << "\n";
        return;
    }
    for (const auto &e : bqpe::experiment_registry()) {
        std::printf("%-16s %s [%s]\n", e.name, e.description, e.figure);
    }
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Adaptive phase estimation for bosonic error detection"};
    app.require_subcommand(1);

    int workers = bqpe::default_workers();
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
    bool extended = false;
    std::string config_path;
    CLI::App *run = app.add_subcommand("run", "Run an experiment config and write its result bundle");
    run->add_option("config", config_path, "Path to a JSON experiment config")->required();
    run->add_option("--workers", workers, "Parallel workers (results do not depend on this)")
        ->check(CLI::PositiveNumber);
    run->add_option("--seed", seed, "Override sampling.seed");
    run->add_flag("--dry-run", dry_run, "Print the derived schedule and exit");
    run->add_flag("--extended", extended, "Allow configs marked extended");

    bool as_json = false;
    CLI::App *list = app.add_subcommand("list-experiments", "Print the experiment registry");
    list->add_flag("--json", as_json, "Machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(bqpe::ExitCode::config);
    }

    if (list->parsed()) {
        list_experiments(as_json);
        return 0;
    }

    try {
        bqpe::ExperimentConfig cfg = bqpe::ExperimentConfig::load(config_path);
        if (seed) {
            cfg.set_seed(*seed);
        }
        if (dry_run) {
            std::cout << bqpe::dry_run_text(cfg);
            return 0;
        }
        if (cfg.extended() && !extended) {
            throw bqpe::ConfigError("config '" + cfg.name() + "' is marked extended; pass --extended to run it");
        }
        bqpe::ResultBundle b = bqpe::run_experiment(cfg, bqpe::RunContext{workers});
        auto dir = bqpe::output_directory(cfg);
        for (const auto &f : bqpe::write_bundle(b, cfg, dir)) {
            std::cout << f.string() << "\n";
        }
    } catch (const bqpe::Error &e) {
        return fail(e.kind(), e.what(), static_cast<int>(e.exit_code()));
    } catch (const std::exception &e) {
        return fail("internal", e.what(), 1);
    }
    return 0;
}
