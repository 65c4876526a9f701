#ifndef LBGAT_EXPERIMENT_HPP
#define LBGAT_EXPERIMENT_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lbgat/data.hpp"
#include "lbgat/eval.hpp"
#include "lbgat/model.hpp"
#include "lbgat/training.hpp"

namespace lbgat {

// Environment variable that, when set, prefixes relative output directories.
inline constexpr const char* kOutputRootEnv = "LBGAT_OUTPUT_ROOT";

struct DatasetSection {
    std::string kind = "moons";  // moons | gaussians | idx | csv
    std::size_t train_size = 2000;
    std::size_t test_size = 1000;
    double noise = 0.1;
    std::uint64_t seed = 0;
    std::filesystem::path train_images, train_labels, test_images, test_labels;  // idx
    std::filesystem::path train_csv, test_csv;                                   // csv
    AugmentationSpec augmentation;
};

struct ModelSection {
    Arch arch = Arch::mlp;
    std::size_t hidden = kDefaultHidden;
    std::uint64_t seed = 0;
    // Pre-trained natural models; several form a mean-of-logits ensemble (bgat* only).
    std::vector<std::filesystem::path> teacher_checkpoints;
    // Natural pre-training epochs for a bgat* teacher when no checkpoint is given.
    std::size_t teacher_epochs = 0;
};

struct OutputSection {
    std::filesystem::path dir = "runs/default";
    bool wall_clock = false;
    std::size_t checkpoint_every = 0;  // 0: final checkpoints only
    bool eval_each_epoch = false;
};

/// Everything a run needs, mirrored one-to-one by the JSON config document.
struct ExperimentConfig {
    DatasetSection dataset;
    ModelSection model;
    TrainConfig train;  // includes the objective section
    EvalProtocol eval;
    OutputSection output;

    void validate() const;
    // Deterministic identifier derived from the canonical JSON echo.
    std::string run_id() const;
    // Output directory after applying LBGAT_OUTPUT_ROOT.
    std::filesystem::path output_dir() const;
};

/// Parses a config document, rejecting unknown keys with their dotted path.
ExperimentConfig parse_config(const nlohmann::json& doc);
// Full canonical echo: parse_config(config_to_json(c)) reproduces c.
nlohmann::json config_to_json(const ExperimentConfig& config);

// Applies "a.b.c=value" overrides; value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

std::pair<Dataset, Dataset> load_datasets(const DatasetSection& section);

struct TrainArtifacts {
    std::filesystem::path robust_checkpoint;
    std::filesystem::path teacher_checkpoint;  // empty when no teacher is written
    std::vector<MetricsRecord> records;        // per-epoch rows then the final evaluation
};

/// Train per config; writes robust.ckpt (+ teacher.ckpt when the teacher was
/// trained here), metrics.csv and runs.jsonl into the output directory.
TrainArtifacts run_train(const ExperimentConfig& config);

/// Evaluates a checkpoint on the test split with the eval protocol and
/// appends one "final" row to metrics.csv and runs.jsonl.
MetricsRecord run_eval(const std::filesystem::path& checkpoint, const ExperimentConfig& config);

/// Transfer attack from `source` onto `target`; appends a row with acc_blackbox.
MetricsRecord run_transfer(const std::filesystem::path& source, const std::filesystem::path& target,
                           const ExperimentConfig& config);

/// Final row per run from run_dir/metrics.csv -> run_dir/plotdata.csv, plus a table on `out`.
std::vector<PlotPoint> run_report(const std::filesystem::path& run_dir, std::ostream& out);

}  // namespace lbgat

#endif  // LBGAT_EXPERIMENT_HPP
