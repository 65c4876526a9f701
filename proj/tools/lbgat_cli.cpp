// Command-line entry points: train, eval, transfer, report.
//
// Exit codes: 0 success, 2 config validation, 3 numeric failure (NaN), 4 I/O.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lbgat/error.hpp"
#include "lbgat/experiment.hpp"

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kConfig = 2, kNumeric = 3, kIo = 4 };

void print_record(const lbgat::MetricsRecord& r) {
    std::cout << "acc_natural " << r.acc_natural << '\n';
    for (const auto& [name, value] : r.robust) std::cout << "acc_" << name << ' ' << value << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Boundary-guided adversarial training and robustness evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "JSON experiment config")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--set", overrides, "Override a config field, e.g. objective.alpha=2");
    };

    auto* train = app.add_subcommand("train", "Train a robust model (and teacher) from a config");
    add_config(train);

    std::string checkpoint;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint under the config's eval protocol");
    add_config(eval);
    eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();

    std::string source, target;
    auto* transfer = app.add_subcommand("transfer", "Black-box transfer attack from source onto target");
    add_config(transfer);
    transfer->add_option("--source", source, "Checkpoint used to craft perturbations")->required();
    transfer->add_option("--target", target, "Checkpoint under evaluation")->required();

    std::string run_dir;
    auto* report = app.add_subcommand("report", "Aggregate metrics.csv into plotdata.csv");
    report->add_option("run_dir", run_dir, "Directory holding metrics.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (train->parsed()) {
            const auto config = lbgat::load_config(config_path, overrides);
            const auto artifacts = lbgat::run_train(config);
            std::cout << "run " << config.run_id() << " -> " << config.output_dir().string() << '\n';
            std::cout << "robust checkpoint " << artifacts.robust_checkpoint.string() << '\n';
            if (!artifacts.teacher_checkpoint.empty()) {
                std::cout << "teacher checkpoint " << artifacts.teacher_checkpoint.string() << '\n';
            }
            print_record(artifacts.records.back());
        } else if (eval->parsed()) {
            const auto config = lbgat::load_config(config_path, overrides);
            print_record(lbgat::run_eval(checkpoint, config));
        } else if (transfer->parsed()) {
            const auto config = lbgat::load_config(config_path, overrides);
            print_record(lbgat::run_transfer(source, target, config));
        } else if (report->parsed()) {
            lbgat::run_report(run_dir, std::cout);
        }
    } catch (const lbgat::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const lbgat::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const lbgat::IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const lbgat::FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kOk;
}
