#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "check_helpers.hpp"
#include "dpuconfig/evaluator.hpp"

using namespace dpuconfig;

namespace {

struct DefaultWorld {
    CalibrationParams calibration;
    std::vector<ModelProfile> models = default_model_set();
    MeasurementTable table = generate_corpus(models, calibration);

    const ModelProfile& model(const std::string& id) const {
        for (const auto& m : models) {
            if (m.variant_id() == id) return m;
        }
        throw std::out_of_range(id);
    }
};

const DefaultWorld& world() {
    static const DefaultWorld w;
    return w;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("oracle with exactly one feasible configuration") {
    std::mt19937_64 rng(1);
    auto recs = checks::random_records(rng);
    for (auto& r : recs) r.fps = 10;
    recs[9].fps = 31;
    recs[9].telemetry.p_fpga = 100;  // worst PPW, but the only feasible one
    const auto choice = oracle_best(checks::pointers(recs), 30);
    CHECK(choice.action == 9);
    CHECK(choice.feasible);
}

TEST_CASE("oracle with no constraint is the global PPW argmax") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        const auto recs = checks::random_records(rng);
        double best = 0;
        for (const auto& r : recs) best = std::max(best, r.fps / r.telemetry.p_fpga);
        const auto choice = oracle_best(checks::pointers(recs), 0.0);
        CHECK(choice.ppw == best);
        CHECK(choice.feasible);
    }
}

TEST_CASE("oracle flags infeasible tables and returns the max-PPW config") {
    std::mt19937_64 rng(3);
    auto recs = checks::random_records(rng);
    for (auto& r : recs) r.fps = 5;
    recs[20].telemetry.p_fpga = 0.5;
    const auto choice = oracle_best(checks::pointers(recs), 30);
    CHECK_FALSE(choice.feasible);
    CHECK(choice.action == 20);
}

TEST_CASE("oracle tie-breaks by instances then architecture") {
    std::mt19937_64 rng(4);
    auto recs = checks::random_records(rng);
    for (auto& r : recs) {
        r.fps = 60;
        r.telemetry.p_fpga = 6;
    }
    // B1600_2 (13), B512_4 (1) and B1024_3 (7) tie on PPW 20 with B800_1 (3) and B2304_1 (16).
    for (std::size_t i : {13, 1, 7, 3, 16}) recs[i].telemetry.p_fpga = 3;
    CHECK(oracle_best(checks::pointers(recs), 30).config.label() == "B800_1");
    recs[3].telemetry.p_fpga = 6;
    CHECK(oracle_best(checks::pointers(recs), 30).config.label() == "B2304_1");
    recs[16].telemetry.p_fpga = 6;
    CHECK(oracle_best(checks::pointers(recs), 30).config.label() == "B1600_2");
}

TEST_CASE("oracle agrees with an exhaustive re-scan on random tables") {
    std::mt19937_64 rng(5);
    int infeasible = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto recs = checks::random_records(rng);
        bool feasible = false;
        const auto expected = checks::rescan_oracle(recs, 30, feasible);
        const auto got = oracle_best(checks::pointers(recs), 30);
        CHECK(got.action == expected);
        CHECK(got.feasible == feasible);
        if (!feasible) ++infeasible;
    }
    CHECK(infeasible > 0);
}

TEST_CASE("oracle on the default corpus") {
    const auto& w = world();
    // Compute-heavy model in the unloaded state: the largest architecture.
    const auto r152_n = oracle_best(w.table, w.model("ResNet152_PR0"), WorkloadState::N, 30);
    CHECK(r152_n.config.arch.name == "B4096");
    CHECK(r152_n.feasible);
    // Under memory contention a single instance is best.
    const auto r152_m = oracle_best(w.table, w.model("ResNet152_PR0"), WorkloadState::M, 30);
    CHECK(r152_m.config.label() == "B4096_1");

    // No feasible configuration has higher PPW than the oracle choice.
    for (const auto& m : w.models) {
        for (auto s : kAllWorkloads) {
            const auto o = oracle_best(w.table, m, s, 30);
            for (const auto* r : w.table.action_records(m.variant_id(), s)) {
                if (o.feasible && r->fps >= 30) CHECK(r->fps / r->telemetry.p_fpga <= o.ppw);
                if (!o.feasible) CHECK(r->fps < 30);
            }
        }
    }
}

TEST_CASE("oracle reports missing records") {
    const auto& w = world();
    ModelProfile ghost = w.models.front();
    ghost.name = "Ghost";
    CHECK_THROWS_AS(oracle_best(w.table, ghost, WorkloadState::N, 30), std::out_of_range);
}

TEST_CASE("baseline policies") {
    const auto& w = world();
    CHECK(baseline_policy(w.table, w.model("ResNet152_PR0"), WorkloadState::N, BaselineKind::MaxFps).label() ==
          "B4096_3");
    for (const auto& m : w.models) {
        for (auto s : kAllWorkloads) {
            CHECK(baseline_policy(w.table, m, s, BaselineKind::MinPower).label() == "B512_1");
        }
    }

    std::mt19937_64 rng(6);
    auto recs = checks::random_records(rng);
    for (auto& r : recs) r.fps = 10;
    recs[4].fps = 99;
    recs[18].fps = 99;
    CHECK(baseline_action(checks::pointers(recs), BaselineKind::MaxFps) == 4);
    for (auto& r : recs) r.telemetry.p_fpga = 5;
    recs[12].telemetry.p_fpga = 1;
    recs[2].telemetry.p_fpga = 1;
    CHECK(baseline_action(checks::pointers(recs), BaselineKind::MinPower) == 2);
}

TEST_CASE("an oracle-mimicking policy scores 1 everywhere") {
    const auto& w = world();
    const auto split = split_train_test(w.models);
    const Chooser oracle = [&](const ModelProfile& m, WorkloadState s) { return oracle_best(w.table, m, s, 30).action; };
    const auto report = evaluate_chooser(oracle, "oracle", w.table, split.test, kEvaluationWorkloads, 30);
    const auto rows = report.rows_for("oracle");
    CHECK(rows.size() == 18);
    for (const auto& r : rows) CHECK(r.normalized_ppw == 1.0);
    CHECK(report.summary("oracle", WorkloadState::C).mean_normalized_ppw == 1.0);
    CHECK(report.rows.size() == 54);

    // Feasible baseline choices never beat the oracle.
    for (const auto& r : report.rows) {
        if (r.constraint_satisfied) {
            CHECK(r.normalized_ppw <= 1.0);
            CHECK(r.normalized_ppw > 0.0);
        }
    }
    // Max-FPS under memory contention is well below optimal.
    CHECK(report.summary("max_fps", WorkloadState::M).mean_normalized_ppw <= 0.7);
}

TEST_CASE("summary statistics on a small fixture") {
    // Three rows: feasible optimum, feasible sub-optimum, constraint miss.
    const auto base = reference_models().back();  // ResNet152: small DPUs miss 30 fps
    auto table = generate_corpus({base}, CalibrationParams{});
    const auto& records = table.action_records(base.variant_id(), WorkloadState::N);
    const auto oracle = oracle_best(records, 30);
    std::size_t slow = 0;
    std::size_t other = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i]->fps < 30) slow = i;
        if (records[i]->fps >= 30 && i != oracle.action) other = i;
    }
    REQUIRE(records[slow]->fps < 30);

    int call = 0;
    const std::size_t picks[] = {oracle.action, other, slow};
    const Chooser chooser = [&](const ModelProfile&, WorkloadState) { return picks[call++]; };
    const std::vector<ModelProfile> three{base, base, base};
    const auto report = evaluate_chooser(chooser, "fixture", table, three,
                                         std::array<WorkloadState, 1>{WorkloadState::N}, 30);
    const auto& s = report.summary("fixture", WorkloadState::N);
    CHECK(s.rows == 3);
    CHECK(s.constraint_rate == doctest::Approx(2.0 / 3.0));
    const auto rows = report.rows_for("fixture");
    CHECK(rows[0].normalized_ppw == 1.0);
    CHECK(rows[1].normalized_ppw == doctest::Approx(records[other]->fps / records[other]->telemetry.p_fpga / oracle.ppw));
    CHECK(rows[2].normalized_ppw == 0.0);
    CHECK(s.mean_normalized_ppw == doctest::Approx((1.0 + rows[1].normalized_ppw) / 3.0));
}

TEST_CASE("evaluate with an untrained agent") {
    const auto& w = world();
    const auto split = split_train_test(w.models);
    const auto report =
        evaluate(PolicyParameters::zeros(), w.table, split.test, kEvaluationWorkloads, 30, w.calibration);
    // Uniform policy: greedy picks action 0 everywhere.
    for (const auto& r : report.rows_for("agent")) CHECK(r.chosen.label() == "B512_1");
    CHECK(report.summaries.size() == 6);
}

TEST_CASE("report files") {
    const auto& w = world();
    const auto split = split_train_test(w.models);
    const auto report =
        evaluate(PolicyParameters::zeros(), w.table, split.test, kEvaluationWorkloads, 30, w.calibration);
    const auto dir = std::filesystem::temp_directory_path() / "dpuconfig_eval_files";
    std::filesystem::create_directories(dir);
    write_report_csv(report, dir / "report.csv");
    write_summary_csv(report, dir / "summary.csv");
    write_plot_data(report, dir / "plot.json");

    const auto csv = slurp(dir / "report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 54);
    CHECK(csv.rfind("policy,model,workload,chosen", 0) == 0);
    const auto plot = nlohmann::json::parse(slurp(dir / "plot.json"));
    CHECK(plot["groups"].size() == 2);
    CHECK(plot["groups"][0]["workload"] == "C");
    CHECK(plot["groups"][0]["models"].size() == 9);
    CHECK(plot["groups"][0]["normalized_ppw"]["agent"].size() == 9);
    CHECK(plot["groups"][1]["normalized_ppw"]["max_fps"].size() == 9);

    const auto oracle_rows = oracle_table(w.table, w.models, kAllWorkloads, 30);
    CHECK(oracle_rows.size() == 99);
    write_oracle_csv(oracle_rows, dir / "oracle.csv");
    const auto ocsv = slurp(dir / "oracle.csv");
    CHECK(std::count(ocsv.begin(), ocsv.end(), '\n') == 100);
    std::filesystem::remove_all(dir);
}
