#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vloc/errors.hpp"
#include "vloc/pipeline.hpp"
#include "vloc/version.hpp"

namespace fs = std::filesystem;
using namespace vloc;

int main(int argc, char** argv) {
    CLI::App app{"Vertebra centroid localization: synthetic data, network training, message passing, "
                 "sparse shape refinement and evaluation."};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<fs::path> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> out_dir;
    std::vector<std::string> overrides;
    bool dump = false;
    app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    app.add_option("--set", overrides, "extra key=value overrides, applied last")->take_all();
    app.add_flag("--dump-config", dump, "print the effective config before running");
    app.set_version_flag("--version", [] {
        return "vloc " + std::string(VLOC_VERSION) + "\nformats:\n" + pipeline::format_versions();
    });

    auto* synth = app.add_subcommand("synth", "generate a synthetic train/test dataset");
    auto* train = app.add_subcommand("train", "train the network on the train manifest");
    auto* kernels = app.add_subcommand("learn-kernels", "learn displacement kernels and shape dictionaries");
    auto* infer = app.add_subcommand("infer", "heatmaps and landmarks for one volume");
    auto* refine = app.add_subcommand("refine", "sparse shape refinement of a landmark CSV");
    auto* eval = app.add_subcommand("eval", "stage-wise evaluation on the test manifest");

    fs::path volume, landmarks;
    std::optional<fs::path> predictions;
    infer->add_option("volume", volume, "input .svh volume")->required();
    refine->add_option("landmarks", landmarks, "landmark CSV")->required();
    eval->add_option("--predictions", predictions, "CSV 'prediction,ground_truth' of landmark files to score");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return pipeline::kConfigFailure;
    }

    try {
        PipelineConfig cfg;
        if (config_path) cfg = load_config(*config_path);
        if (seed) cfg.seed = *seed;
        if (out_dir) cfg.out_dir = *out_dir;
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        cfg.validate();
        if (dump) std::cout << dump_config(cfg);

        if (*synth) {
            pipeline::cmd_synth(cfg);
        } else if (*train) {
            pipeline::cmd_train(cfg);
        } else if (*kernels) {
            pipeline::cmd_learn_kernels(cfg);
        } else if (*infer) {
            const auto r = pipeline::cmd_infer(cfg, volume);
            const auto& final = cfg.message_passing ? r.mp : r.net;
            for (const auto& lm : final.entries())
                if (lm.present)
                    std::cout << lm.label << ' ' << lm.position.x << ' ' << lm.position.y << ' ' << lm.position.z
                              << '\n';
        } else if (*refine) {
            pipeline::cmd_refine(cfg, landmarks);
        } else if (*eval) {
            for (const auto& rep : pipeline::cmd_eval(cfg, predictions)) {
                const auto& all = rep.region(Region::All);
                std::cout << rep.method << ": mean " << (all.mean_mm ? std::to_string(*all.mean_mm) : "NA")
                          << " mm, id_rate " << (all.id_rate ? std::to_string(*all.id_rate) : "NA") << '\n';
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "vloc: " << e.what() << '\n';
        return pipeline::exit_code_for(e);
    }
    return pipeline::kOk;
}
