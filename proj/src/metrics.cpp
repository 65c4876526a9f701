#include "lbgat/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "lbgat/error.hpp"

namespace lbgat {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto cut = line.find(',', start);
        fields.push_back(line.substr(start, cut == std::string::npos ? std::string::npos : cut - start));
        if (cut == std::string::npos) break;
        start = cut + 1;
    }
    return fields;
}

[[noreturn]] void bad_row(std::size_t line_no, const std::string& why) {
    throw FormatError("metrics line " + std::to_string(line_no) + ": " + why);
}

double parse_double(const std::string& text, std::size_t line_no, const char* column) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        bad_row(line_no, std::string("bad ") + column + " value '" + text + "'");
    }
    return value;
}

template <class Int>
Int parse_int(const std::string& text, std::size_t line_no, const char* column) {
    Int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        bad_row(line_no, std::string("bad ") + column + " value '" + text + "'");
    }
    return value;
}

void check_text_field(const std::string& text, const char* column) {
    if (text.find_first_of(",\n\r") != std::string::npos) {
        throw FormatError(std::string("metrics: ") + column + " must not contain commas or newlines");
    }
}

void check_fraction(double v, std::size_t line_no, const char* column) {
    if (!(v >= 0.0 && v <= 1.0)) bad_row(line_no, std::string(column) + " outside [0, 1]");
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
    std::ofstream out(path, mode);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) throw std::logic_error("format_double: buffer too small");
    return {buf, ptr};
}

std::string metrics_row(const MetricsRecord& r) {
    check_text_field(r.run_id, "run_id");
    check_text_field(r.objective, "objective");
    std::string row = r.run_id + ',' + (r.epoch ? std::to_string(*r.epoch) : "final") + ',' +
                      r.objective + ',' + format_double(r.alpha) + ',' + format_double(r.beta) +
                      ',' + std::to_string(r.seed) + ',' + format_double(r.acc_natural);
    for (const char* col : kRobustColumns) {
        row += ',';
        if (auto it = r.robust.find(col); it != r.robust.end()) row += format_double(it->second);
    }
    row += ',' + format_double(r.eps) + ',' + std::to_string(r.steps) + ',' +
           format_double(r.step_size) + ',' + format_double(r.seconds);
    return row;
}

MetricsRecord parse_metrics_row(const std::string& line, std::size_t line_no) {
    const auto f = split_commas(line);
    if (f.size() != 15) {
        bad_row(line_no, "expected 15 fields, found " + std::to_string(f.size()));
    }
    MetricsRecord r;
    r.run_id = f[0];
    if (r.run_id.empty()) bad_row(line_no, "empty run_id");
    if (f[1] != "final") r.epoch = parse_int<std::size_t>(f[1], line_no, "epoch");
    r.objective = f[2];
    r.alpha = parse_double(f[3], line_no, "alpha");
    r.beta = parse_double(f[4], line_no, "beta");
    r.seed = parse_int<std::uint64_t>(f[5], line_no, "seed");
    r.acc_natural = parse_double(f[6], line_no, "acc_natural");
    check_fraction(r.acc_natural, line_no, "acc_natural");
    for (std::size_t i = 0; i < 4; ++i) {
        if (f[7 + i].empty()) continue;
        const double v = parse_double(f[7 + i], line_no, kRobustColumns[i]);
        check_fraction(v, line_no, kRobustColumns[i]);
        r.robust[kRobustColumns[i]] = v;
    }
    r.eps = parse_double(f[11], line_no, "eps");
    r.steps = parse_int<std::size_t>(f[12], line_no, "steps");
    r.step_size = parse_double(f[13], line_no, "step_size");
    r.seconds = parse_double(f[14], line_no, "seconds");
    return r;
}

void write_metrics_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path) {
    auto out = open_out(path, std::ios::trunc);
    out << kMetricsHeader << '\n';
    for (const auto& r : records) out << metrics_row(r) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

void append_metrics_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path) {
    std::error_code ec;
    const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
    auto out = open_out(path, std::ios::app);
    if (fresh) out << kMetricsHeader << '\n';
    for (const auto& r : records) out << metrics_row(r) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metrics file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("metrics line 1: missing header");
    if (line != kMetricsHeader) throw FormatError("metrics line 1: unexpected header");
    std::vector<MetricsRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        records.push_back(parse_metrics_row(line, line_no));
    }
    return records;
}

std::vector<PlotPoint> plot_points(std::span<const MetricsRecord> records) {
    std::vector<PlotPoint> points;
    for (const auto& r : records) {
        PlotPoint p{r.objective, r.acc_natural, std::nullopt};
        if (auto it = r.robust.find("pgd"); it != r.robust.end()) p.acc_robust = it->second;
        points.push_back(std::move(p));
    }
    return points;
}

std::vector<MetricsRecord> final_records(std::span<const MetricsRecord> records) {
    std::vector<std::string> order;
    std::map<std::string, MetricsRecord> best;
    for (const auto& r : records) {
        auto it = best.find(r.run_id);
        if (it == best.end()) {
            order.push_back(r.run_id);
            best.emplace(r.run_id, r);
            continue;
        }
        const auto& held = it->second;
        // A later "final" row supersedes an earlier one (re-evaluation).
        const bool replace = !r.epoch || (held.epoch && *r.epoch >= *held.epoch);
        if (replace) it->second = r;
    }
    std::vector<MetricsRecord> out;
    for (const auto& id : order) out.push_back(best.at(id));
    return out;
}

void write_plotdata(std::span<const PlotPoint> points, const std::filesystem::path& path) {
    auto out = open_out(path, std::ios::trunc);
    out << kPlotDataHeader << '\n';
    for (const auto& p : points) {
        check_text_field(p.method, "method");
        out << p.method << ',' << format_double(p.acc_natural) << ','
            << (p.acc_robust ? format_double(*p.acc_robust) : std::string()) << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<PlotPoint> read_plotdata(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open plot data " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kPlotDataHeader) {
        throw FormatError("plotdata line 1: unexpected header");
    }
    std::vector<PlotPoint> points;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_commas(line);
        if (f.size() != 3) bad_row(line_no, "expected 3 fields");
        PlotPoint p{f[0], parse_double(f[1], line_no, "acc_natural"), std::nullopt};
        if (!f[2].empty()) p.acc_robust = parse_double(f[2], line_no, "acc_robust");
        points.push_back(std::move(p));
    }
    return points;
}

void emit_report(std::span<const MetricsRecord> records, const std::filesystem::path& dir) {
    if (records.empty()) throw std::invalid_argument("emit_report: no records");
    write_metrics_csv(records, dir / "metrics.csv");
    const auto points = plot_points(records);
    write_plotdata(points, dir / "plotdata.csv");
}

}  // namespace lbgat
