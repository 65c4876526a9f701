#ifndef LBGAT_METRICS_HPP
#define LBGAT_METRICS_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lbgat {

/// One row of metrics.csv: an epoch of training or a final evaluation.
struct MetricsRecord {
    std::string run_id;
    std::optional<std::size_t> epoch;  // nullopt renders as "final"
    std::string objective;
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    double acc_natural = 0.0;
    // Keyed by column suffix: "pgd", "fgsm", "cw", "blackbox".
    std::map<std::string, double> robust;
    // Mean loss components (sidecar only, not part of the CSV row).
    std::map<std::string, double> losses;
    double eps = 0.0;
    std::size_t steps = 0;
    double step_size = 0.0;
    double seconds = 0.0;
    std::string blackbox_source;  // sidecar only

    friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

inline constexpr const char* kMetricsHeader =
    "run_id,epoch,objective,alpha,beta,seed,acc_natural,acc_pgd,acc_fgsm,acc_cw,acc_blackbox,eps,"
    "steps,step_size,seconds";
inline constexpr const char* kPlotDataHeader = "method,acc_natural,acc_robust";

// Robust-accuracy columns of metrics.csv in header order.
inline constexpr const char* kRobustColumns[] = {"pgd", "fgsm", "cw", "blackbox"};

// Shortest text that parses back to the identical double.
std::string format_double(double value);

std::string metrics_row(const MetricsRecord& record);
// Parses one data row; throws FormatError mentioning `line_no`.
MetricsRecord parse_metrics_row(const std::string& line, std::size_t line_no);

// Overwrites `path` with header + rows.
void write_metrics_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path);
// Appends rows, writing the header first when the file is new or empty.
void append_metrics_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path);
// Throws IoError when missing, FormatError (with line number) when corrupt.
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

struct PlotPoint {
    std::string method;
    double acc_natural = 0.0;
    std::optional<double> acc_robust;

    friend bool operator==(const PlotPoint&, const PlotPoint&) = default;
};

// One point per record: (objective, acc_natural, acc_pgd).
std::vector<PlotPoint> plot_points(std::span<const MetricsRecord> records);
// Final record of every run, in order of first appearance ("final" beats the highest epoch).
std::vector<MetricsRecord> final_records(std::span<const MetricsRecord> records);
void write_plotdata(std::span<const PlotPoint> points, const std::filesystem::path& path);
std::vector<PlotPoint> read_plotdata(const std::filesystem::path& path);

// metrics.csv and plotdata.csv under `dir`. Throws IoError for an unwritable sink.
void emit_report(std::span<const MetricsRecord> records, const std::filesystem::path& dir);

}  // namespace lbgat

#endif  // LBGAT_METRICS_HPP
