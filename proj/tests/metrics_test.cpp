#include <gtest/gtest.h>

#include <fstream>
#include <limits>

#include "lbgat/error.hpp"
#include "lbgat/metrics.hpp"
#include "testing.hpp"

using namespace lbgat;
using lbgat::testing::read_file;
using lbgat::testing::TempDir;

namespace {

MetricsRecord record(const std::string& id, std::optional<std::size_t> epoch, const std::string& objective,
                     double nat, std::optional<double> pgd) {
    MetricsRecord r;
    r.run_id = id;
    r.epoch = epoch;
    r.objective = objective;
    r.alpha = 0.5;
    r.beta = 1.0;
    r.seed = 42;
    r.acc_natural = nat;
    if (pgd) r.robust["pgd"] = *pgd;
    r.eps = 0.1;
    r.steps = 20;
    r.step_size = 0.01;
    return r;
}

std::vector<MetricsRecord> fixture() {
    auto a = record("a", std::nullopt, "lbgat", 0.91, 0.78);
    a.robust["fgsm"] = 0.8;
    a.robust["cw"] = 0.77;
    auto b = record("b", 3, "vanilla-at", 0.1 + 0.2, 1.0 / 3.0);
    auto c = record("c", std::nullopt, "natural", 1.0, std::nullopt);
    c.robust["blackbox"] = 0.5;
    return {a, b, c};
}

}  // namespace

TEST(Metrics, HeaderIsFixed) {
    EXPECT_STREQ(kMetricsHeader,
                 "run_id,epoch,objective,alpha,beta,seed,acc_natural,acc_pgd,acc_fgsm,acc_cw,"
                 "acc_blackbox,eps,steps,step_size,seconds");
}

TEST(Metrics, RowLayout) {
    EXPECT_EQ(metrics_row(fixture()[0]), "a,final,lbgat,0.5,1,42,0.91,0.78,0.8,0.77,,0.1,20,0.01,0");
    EXPECT_EQ(metrics_row(fixture()[2]), "c,final,natural,0.5,1,42,1,,,,0.5,0.1,20,0.01,0");
}

TEST(Metrics, RowsRoundTripLosslessly) {
    for (const auto& r : fixture()) {
        MetricsRecord back = parse_metrics_row(metrics_row(r), 2);
        EXPECT_EQ(back, r);
    }
    auto odd = record("x", 7, "trades", std::nextafter(0.5, 1.0), 1e-300);
    odd.seconds = 123.456789012345;
    odd.seed = std::numeric_limits<std::uint64_t>::max();
    EXPECT_EQ(parse_metrics_row(metrics_row(odd), 2), odd);
}

TEST(Metrics, TextFieldsMayNotBreakTheFormat) {
    auto r = record("bad,id", 0, "lbgat", 0.5, 0.5);
    EXPECT_THROW(metrics_row(r), FormatError);
}

TEST(Metrics, MalformedRowsNameTheLine) {
    TempDir dir("metrics-bad");
    std::ofstream(dir / "m.csv") << kMetricsHeader << "\n"
                                 << metrics_row(fixture()[0]) << "\n"
                                 << "a,final,lbgat,0.5\n";
    try {
        read_metrics_csv(dir / "m.csv");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_metrics_row("a,x,lbgat,0.5,1,42,0.9,,,,,0.1,20,0.01,0", 5), FormatError);
    EXPECT_THROW(parse_metrics_row("a,0,lbgat,0.5,1,42,1.5,,,,,0.1,20,0.01,0", 5), FormatError);
    EXPECT_THROW(read_metrics_csv(dir / "none.csv"), IoError);
}

TEST(Report, OneRecordOneRow) {
    TempDir dir("report-one");
    const std::vector<MetricsRecord> one{fixture()[0]};
    emit_report(one, dir.path());
    EXPECT_EQ(read_file(dir / "metrics.csv"),
              std::string(kMetricsHeader) + "\n" + metrics_row(one[0]) + "\n");
    EXPECT_EQ(read_file(dir / "plotdata.csv"), "method,acc_natural,acc_robust\nlbgat,0.91,0.78\n");
}

TEST(Report, ReEmitIsByteIdentical) {
    TempDir a("report-a"), b("report-b");
    emit_report(fixture(), a.path());
    emit_report(fixture(), b.path());
    EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
    EXPECT_EQ(read_file(a / "plotdata.csv"), read_file(b / "plotdata.csv"));
    emit_report(fixture(), a.path());
    EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
}

TEST(Report, PlotDataMatchesRecordsFieldForField) {
    TempDir dir("report-three");
    const auto records = fixture();
    emit_report(records, dir.path());
    const auto points = read_plotdata(dir / "plotdata.csv");
    ASSERT_EQ(points.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(points[i].method, records[i].objective);
        EXPECT_EQ(points[i].acc_natural, records[i].acc_natural);
        const auto it = records[i].robust.find("pgd");
        EXPECT_EQ(points[i].acc_robust.has_value(), it != records[i].robust.end());
        if (it != records[i].robust.end()) EXPECT_EQ(*points[i].acc_robust, it->second);
    }
    EXPECT_EQ(read_metrics_csv(dir / "metrics.csv"), records);
    EXPECT_THROW(emit_report(std::span<const MetricsRecord>{}, dir.path()), std::invalid_argument);
}

TEST(Report, FinalRecordsPickLastRowPerRun) {
    std::vector<MetricsRecord> rows{record("r1", 0, "lbgat", 0.5, std::nullopt),
                                    record("r2", 0, "natural", 0.6, std::nullopt),
                                    record("r1", 1, "lbgat", 0.7, std::nullopt),
                                    record("r1", std::nullopt, "lbgat", 0.8, 0.6),
                                    record("r2", 1, "natural", 0.9, std::nullopt)};
    const auto finals = final_records(rows);
    ASSERT_EQ(finals.size(), 2u);
    EXPECT_EQ(finals[0].run_id, "r1");
    EXPECT_EQ(finals[0].acc_natural, 0.8);
    EXPECT_EQ(finals[1].acc_natural, 0.9);
}

TEST(Report, AppendAddsHeaderOnce) {
    TempDir dir("append");
    const auto recs = fixture();
    append_metrics_csv(std::span(recs).first(1), dir / "m.csv");
    append_metrics_csv(std::span(recs).subspan(1), dir / "m.csv");
    EXPECT_EQ(read_metrics_csv(dir / "m.csv"), recs);
}
