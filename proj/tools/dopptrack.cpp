// Command-line front end: run a config, score a reconstruction, or dump
// IQ fixtures for a config.

#include "dopptrack/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

namespace {

int fail(const std::string& stage, const std::string& msg) {
    std::cerr << "error [" << stage << "]: " << msg << '\n';
    return 1;
}

void print_report(const dopptrack::ErrorReport& r) {
    std::printf("p50 %.4f m  p90 %.4f m  max %.4f m\n", r.p50, r.p90, r.max);
    for (std::size_t j = 0; j < r.doppler_rmse.size(); ++j)
        std::printf("rx%zu  doppler residual rmse %.4f Hz\n", j + 1, r.doppler_rmse[j]);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"passive multistatic Doppler tracker"};
    app.require_subcommand(1);

    std::string config_path, out_dir, recon_path, truth_path;

    auto* run = app.add_subcommand("run", "run the pipeline described by a JSON config");
    run->add_option("config", config_path, "config file")->required();
    run->add_option("--out", out_dir, "output directory (overrides the config)");

    auto* score = app.add_subcommand("score", "score a reconstructed trajectory against ground truth");
    score->add_option("recon", recon_path, "reconstructed trajectory csv")->required();
    score->add_option("truth", truth_path, "ground-truth trajectory csv")->required();

    auto* synth = app.add_subcommand("synth", "write reference/surveillance IQ fixtures for a config");
    synth->add_option("config", config_path, "config file")->required();
    synth->add_option("--out", out_dir, "fixture directory")->required();

    CLI11_PARSE(app, argc, argv);

    using namespace dopptrack;
    try {
        if (*run) {
            RunConfig cfg;
            try {
                cfg = load_run_config(config_path);
            } catch (const std::exception& e) {
                return fail("config", e.what());
            }
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            const PipelineResult res = run_pipeline(cfg);
            write_artifacts(cfg, res);
            print_report(res.report);
            for (std::size_t j = 0; j < res.clutter_suppression_db.size(); ++j)
                std::printf("rx%zu  suppression %.1f dB  track rmse %.3f Hz\n", j + 1, res.clutter_suppression_db[j],
                            res.track_rmse_hz[j]);
            std::printf("wrote %s\n", cfg.output_dir.string().c_str());
        } else if (*score) {
            ErrorReport r;
            try {
                r = dopptrack::score(read_trajectory_csv(recon_path).trajectory, read_trajectory_csv(truth_path).trajectory);
            } catch (const std::exception& e) {
                return fail("score", e.what());
            }
            print_report(r);
        } else if (*synth) {
            RunConfig cfg;
            try {
                cfg = load_run_config(config_path);
            } catch (const std::exception& e) {
                return fail("config", e.what());
            }
            write_fixtures(cfg, out_dir);
            std::printf("wrote %s\n", out_dir.c_str());
        }
    } catch (const StageError& e) {
        return fail(e.stage(), e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}
