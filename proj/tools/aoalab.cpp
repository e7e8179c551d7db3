// Pipeline driver.  All real work lives in the library's command layer; this
// file only maps arguments onto those calls and exceptions onto exit codes
// (0 ok, 2 configuration, 3 data/IO, 4 numerical, 1 unexpected).

#include <aoalab/commands.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"angle-of-arrival localization pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    app.add_option("--config", config_path, "experiment configuration (JSON)");
    auto* seed_opt = app.add_option("--seed", seed, "override the root seed");
    app.add_option("--output", out_dir, "run directory (default: $AOALAB_OUTPUT_ROOT or runs)");

    auto* sim = app.add_subcommand("simulate", "synthesize channel tracks");
    sim->fallthrough();

    std::vector<std::string> csi_paths;
    auto* ext = app.add_subcommand("extract", "windowed feature extraction from channel files");
    ext->fallthrough();
    ext->add_option("--csi", csi_paths, "channel files (default: <output>/csi/*.bin)");

    std::string offline_task = "train";
    std::string features_csv;
    std::string model_path;
    std::size_t trials = 32;
    std::size_t folds = 5;
    std::size_t batches = 5;
    std::size_t retrain_trials = 5;
    auto* off = app.add_subcommand("offline", "batch classifiers: train, eval, tune, retrain-exp");
    off->fallthrough();
    off->add_option("--task", offline_task, "train | eval | tune | retrain-exp");
    off->add_option("--features", features_csv, "feature table (CSV)");
    off->add_option("--model", model_path, "stored model to evaluate");
    off->add_option("--trials", trials, "random-search trials (tune)");
    off->add_option("--folds", folds, "cross-validation folds (tune)");
    off->add_option("--batches", batches, "arrival batches (retrain-exp)");
    off->add_option("--retrain-trials", retrain_trials, "repetitions per batch (retrain-exp)");

    auto* str = app.add_subcommand("stream", "prequential run of the incremental learners");
    str->fallthrough();
    str->add_option("--features", features_csv, "feature table (CSV)");

    std::string fewshot_mode = "standard";
    std::vector<std::size_t> shots;
    std::size_t fewshot_trials = 1;
    auto* few = app.add_subcommand("fewshot", "episodic embedding experiments");
    few->fallthrough();
    few->add_option("--features", features_csv, "feature table (CSV)");
    few->add_option("--mode", fewshot_mode, "standard | continual");
    few->add_option("--shots", shots, "support sizes to sweep (default: config shot)");
    few->add_option("--trials", fewshot_trials, "independent repetitions per support size");

    std::string augment_task = "train";
    std::string generator_path;
    std::string classifier_path;
    std::string synthetic_csv;
    std::string buffer_csv;
    std::size_t per_class = 100;
    std::size_t target_per_class = 100;
    auto* aug = app.add_subcommand("augment", "generator: train, sample, eval, upsample");
    aug->fallthrough();
    aug->add_option("--task", augment_task, "train | sample | eval | upsample");
    aug->add_option("--features", features_csv, "feature table for generator training (CSV)");
    aug->add_option("--generator", generator_path, "stored generator artifact");
    aug->add_option("--classifier", classifier_path, "stored classifier for scoring (eval)");
    aug->add_option("--synthetic", synthetic_csv, "generated feature table to score (eval)");
    aug->add_option("--buffer", buffer_csv, "replay-buffer feature table (upsample)");
    aug->add_option("--per-class", per_class, "rows to draw per class (sample)");
    aug->add_option("--target", target_per_class, "rows per class after top-up (upsample)");

    auto* rep = app.add_subcommand("report", "collate a run directory into report.md");
    rep->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        aoalab::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = aoalab::load_experiment_config(config_path);
        if (seed_opt->count() > 0) cfg.seed = seed;
        if (out_dir.empty()) out_dir = aoalab::default_output_root();

        const auto need = [](const std::string& value, const char* what) {
            if (value.empty())
                throw aoalab::ConfigError(std::string("missing required option ") + what);
        };

        if (sim->parsed()) {
            const auto res = aoalab::cmd_simulate(cfg, out_dir);
            std::cout << "wrote " << res.csi_paths.size() << " channel files under " << out_dir
                      << "/csi\n";
        } else if (ext->parsed()) {
            const auto res = aoalab::cmd_extract(cfg, out_dir, csi_paths);
            for (std::size_t i = 0; i < res.csv_paths.size(); ++i)
                std::cout << "wrote " << res.csv_paths[i] << " (" << res.row_counts[i]
                          << " rows)\n";
        } else if (off->parsed()) {
            if (offline_task == "train") {
                need(features_csv, "--features");
                const auto res = aoalab::cmd_offline_train(cfg, out_dir, features_csv);
                std::cout << "holdout accuracy: gate " << res.stage1_accuracy << ", los "
                          << res.stage2_los_accuracy << ", nlos " << res.stage2_nlos_accuracy
                          << "; model at " << res.model_path << "\n";
            } else if (offline_task == "eval") {
                need(features_csv, "--features");
                need(model_path, "--model");
                const auto res = aoalab::cmd_offline_eval(cfg, out_dir, model_path, features_csv);
                std::cout << "accuracy " << res.report.accuracy << "; report at "
                          << res.report_path << "\n";
            } else if (offline_task == "tune") {
                need(features_csv, "--features");
                const auto res =
                    aoalab::cmd_offline_tune(cfg, out_dir, features_csv, trials, folds);
                std::cout << res.trials << " trials; best score " << res.best_score
                          << "; tuned model at " << res.artifact_path << "\n";
            } else if (offline_task == "retrain-exp") {
                need(features_csv, "--features");
                const auto res = aoalab::cmd_offline_retrain(cfg, out_dir, features_csv, batches,
                                                             retrain_trials);
                std::cout << "retraining curves at " << res.csv_path << "\n";
            } else {
                throw aoalab::ConfigError("offline task must be train, eval, tune, or "
                                          "retrain-exp (got '" +
                                          offline_task + "')");
            }
        } else if (str->parsed()) {
            need(features_csv, "--features");
            const auto res = aoalab::cmd_stream(cfg, out_dir, features_csv);
            std::cout << res.report_paths.size() << " learners; comparison at "
                      << res.comparison_csv << "\n";
        } else if (few->parsed()) {
            need(features_csv, "--features");
            const auto res = aoalab::cmd_fewshot(cfg, out_dir, features_csv, fewshot_mode, shots,
                                                 fewshot_trials);
            std::cout << res.run_paths.size() << " run files; aggregate at " << res.aggregate_csv
                      << "\n";
        } else if (aug->parsed()) {
            if (augment_task == "train") {
                need(features_csv, "--features");
                const auto res = aoalab::cmd_augment_train(cfg, out_dir, features_csv);
                std::cout << res.steps << " optimizer steps; generator at " << res.artifact_path
                          << "\n";
            } else if (augment_task == "sample") {
                need(generator_path, "--generator");
                const auto res =
                    aoalab::cmd_augment_sample(cfg, out_dir, generator_path, per_class);
                std::cout << res.rows << " synthetic rows at " << res.csv_path << "\n";
            } else if (augment_task == "eval") {
                need(classifier_path, "--classifier");
                need(synthetic_csv, "--synthetic");
                const auto res =
                    aoalab::cmd_augment_eval(cfg, out_dir, classifier_path, synthetic_csv);
                std::cout << "accuracy " << res.metrics.accuracy << ", f1 " << res.metrics.f1
                          << "; metrics at " << res.report_path << "\n";
            } else if (augment_task == "upsample") {
                need(generator_path, "--generator");
                need(buffer_csv, "--buffer");
                const auto res = aoalab::cmd_augment_upsample(cfg, out_dir, generator_path,
                                                              buffer_csv, target_per_class);
                std::cout << res.rows << " rows at " << res.csv_path << "\n";
            } else {
                throw aoalab::ConfigError(
                    "augment task must be train, sample, eval, or upsample (got '" +
                    augment_task + "')");
            }
        } else if (rep->parsed()) {
            const auto res = aoalab::cmd_report(out_dir);
            std::cout << "report at " << res.path << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return aoalab::exit_code_for(e);
    }
}
