// mpe: stage runner for venue demand prediction under public events.
//
//   mpe <stage|all> --config cfg.json [--output-dir DIR] [--backend live|mock|cache|heuristic]
//                   [--mock-script FILE] [--ablation NAME] [--dry-run]
//   mpe synth --out DIR [--seed N] [--scale X]
//
// Exit codes: 0 ok, 1 other failure, 2 configuration, 3 stage precondition,
// 4 backend, 5 parse-fallback budget exceeded.

#include "mpe/mpe.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kPrecondition = 3, kBackend = 4, kBudget = 5 };

int run_stages(const std::string& stage_name, const std::string& config_path, const std::string& output_dir,
               const std::string& backend_kind, const std::string& mock_script, const std::string& ablation,
               bool dry_run) {
    namespace fs = std::filesystem;
    auto config = mpe::PipelineConfig::load(config_path);
    if (!output_dir.empty()) config.output_dir = fs::absolute(output_dir);
    if (!backend_kind.empty()) config.backend.kind = backend_kind;
    if (!mock_script.empty()) config.backend.mock_script = fs::absolute(mock_script);
    if (!ablation.empty()) config.ablation = mpe::AblationConfig::parse(ablation);
    config.validate();

    std::optional<mpe::Stage> only;
    if (stage_name != "all") only = mpe::parse_stage(stage_name);

    mpe::Pipeline pipeline(config);
    if (dry_run) {
        std::cout << pipeline.plan(only);
        return kOk;
    }
    std::vector<mpe::Stage> stages;
    if (only)
        stages.push_back(*only);
    else
        stages.assign(mpe::kAllStages.begin(), mpe::kAllStages.end());
    for (auto s : stages) {
        auto outcome = pipeline.run(s);
        std::cout << mpe::to_string(s) << ": "
                  << (outcome.skipped ? std::string("up to date")
                                      : "wrote " + std::to_string(outcome.outputs.size()) + " file(s)")
                  << "\n";
    }
    if (auto cache = pipeline.cache())
        std::cout << "cache: " << cache->hits() << " hit(s), " << cache->misses() << " miss(es)\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Daily venue travel demand prediction under public events"};
    app.require_subcommand(1);

    std::string config_path, output_dir, backend_kind, mock_script, ablation;
    bool dry_run = false;
    std::string stage_name;
    std::vector<std::string> stage_names{"ingest", "format_events", "decompose", "predict",
                                         "evaluate", "ablate", "report", "all"};
    for (const auto& name : stage_names) {
        auto* sub = app.add_subcommand(name, name == "all" ? "Run every stage in order" : "Run the " + name + " stage");
        sub->add_option("--config", config_path, "Pipeline configuration (JSON)")->required();
        sub->add_option("--output-dir", output_dir, "Override output_dir");
        sub->add_option("--backend", backend_kind, "Override backend kind")
            ->check(CLI::IsMember({"live", "mock", "cache", "heuristic"}));
        sub->add_option("--mock-script", mock_script, "Override the mock script path");
        sub->add_option("--ablation", ablation, "Override the feature configuration, e.g. c_t+r_i");
        sub->add_flag("--dry-run", dry_run, "Print the plan and exit");
        sub->callback([&stage_name, name] { stage_name = name; });
    }

    std::string synth_out;
    std::uint64_t seed = 20140701;
    double scale = 0.1;
    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset with config and recorded mock script");
    synth->add_option("--out", synth_out, "Target directory")->required();
    synth->add_option("--seed", seed, "Random seed");
    synth->add_option("--scale", scale, "Count multiplier")->check(CLI::PositiveNumber);
    synth->callback([&stage_name] { stage_name = "synth"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (stage_name == "synth") {
            mpe::SyntheticDatasetSpec spec;
            spec.world.start = mpe::Date{2014, 3, 1};
            spec.world.days = 122;
            spec.world.seed = seed;
            spec.world.scale = scale;
            mpe::write_synthetic_dataset(synth_out, spec);
            std::cout << "wrote synthetic dataset to " << synth_out << "\n";
            return kOk;
        }
        return run_stages(stage_name, config_path, output_dir, backend_kind, mock_script, ablation, dry_run);
    } catch (const mpe::PreconditionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kPrecondition;
    } catch (const mpe::FallbackBudgetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBudget;
    } catch (const mpe::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kConfig;
    } catch (const mpe::SchemaError& e) {
        std::cerr << "input schema error: " << e.what() << "\n";
        return kConfig;
    } catch (const mpe::MissingScriptError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kBackend;
    } catch (const mpe::TransportError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kBackend;
    } catch (const mpe::ProtocolError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kBackend;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOther;
    }
}
