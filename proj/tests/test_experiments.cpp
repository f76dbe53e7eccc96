#include <gtest/gtest.h>

#include <sstream>

#include "pdnet/experiments.hpp"
#include "test_support.hpp"

using namespace pdnet;

namespace {

SourceClass sc(const std::string& s) { return SourceClass::parse(s); }

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::Io;
}

/// Base classes, the holdout and two additions, in two short orders.
ExperimentPlan tiny_plan() {
    auto kv = KvConfig::parse_string(
        "base = Pa-1, Pa+1, Pr-2, Pr+2\n"
        "holdout = Pa+1.5\n"
        "order1 = Pa+1.25, Pa-3\n"
        "order2 = Pa-3, Pa+1.25\n"
        "schemes = Tr, Me\n");
    return parse_plan(kv);
}

const Dataset& tiny_data() {
    static const Dataset d =
        pdtest::synth_classes({"Pa-1", "Pa+1", "Pr-2", "Pr+2", "Pa+1.5", "Pa+1.25", "Pa-3"}, 10, 2000, 4);
    return d;
}

TrainConfig tiny_train() {
    auto c = TrainConfig::desk();
    c.epochs = 2;
    c.n_seeds = 2;
    c.batch_size = 16;
    return c;
}

}  // namespace

TEST(Plan, PaperDefaultLayout) {
    auto p = ExperimentPlan::paper_default();
    EXPECT_EQ(p.base_classes, (std::vector<SourceClass>{sc("Pa-1"), sc("Pa+1"), sc("Pr-2"), sc("Pr+2")}));
    EXPECT_EQ(p.holdout, sc("Pa+1.5"));
    ASSERT_EQ(p.orders.size(), 2u);
    EXPECT_EQ(p.orders[0].classes, (std::vector<SourceClass>{sc("Pa-1.5"), sc("Pa-3"), sc("Pa+1.25"), sc("Pr-3")}));
    auto reversed = p.orders[0].classes;
    std::reverse(reversed.begin(), reversed.end());
    EXPECT_EQ(p.orders[1].classes, reversed);
    EXPECT_EQ(p.schemes.size() * p.domains.size(), 6u);
    EXPECT_NO_THROW(p.validate());
}

TEST(Plan, EveryTableOneClassIsUsedExactlyOnce) {
    auto p = ExperimentPlan::paper_default();
    for (const auto& order : p.orders) {
        std::set<SourceClass> used(p.base_classes.begin(), p.base_classes.end());
        used.insert(p.holdout);
        used.insert(order.classes.begin(), order.classes.end());
        EXPECT_EQ(used.size(), table1().size());
    }
}

TEST(Plan, HoldoutMayNotBeTrainedOn) {
    auto p = ExperimentPlan::paper_default();
    p.orders[0].classes.push_back(p.holdout);
    EXPECT_EQ(kind_of([&] { p.validate(); }), ErrorKind::Usage);
    p = ExperimentPlan::paper_default();
    p.base_classes.push_back(p.holdout);
    EXPECT_EQ(kind_of([&] { p.validate(); }), ErrorKind::Usage);
}

TEST(Plan, DuplicatesAndBaseClassesInOrdersAreRejected) {
    auto p = ExperimentPlan::paper_default();
    p.orders[1].classes.push_back(p.orders[1].classes.front());
    EXPECT_THROW(p.validate(), Error);
    p = ExperimentPlan::paper_default();
    p.orders[0].classes.push_back(p.base_classes.front());
    EXPECT_THROW(p.validate(), Error);
}

TEST(Plan, ParsedFromConfigText) {
    auto p = tiny_plan();
    ASSERT_EQ(p.orders.size(), 2u);
    EXPECT_EQ(p.orders[0].name, "O1");
    EXPECT_EQ(p.orders[1].classes.front(), sc("Pa-3"));
    EXPECT_EQ(p.schemes, (std::vector<NormScheme>{NormScheme::Trainset, NormScheme::Measurement}));
    EXPECT_EQ(p.domains.size(), 2u);
    EXPECT_THROW(parse_plan(KvConfig::parse_string("holdout = Pr+1\n")), Error);
    EXPECT_THROW(parse_plan(KvConfig::parse_string("schemes = Tr, Zz\n")), Error);
    EXPECT_THROW(parse_plan(KvConfig::parse_string("holdout = Pa-1\n")), Error);
}

TEST(Baseline, MissingBaseClassIsReported) {
    auto d = pdtest::synth_classes({"Pa-1", "Pa+1", "Pr-2"}, 5, 1000);
    EXPECT_EQ(kind_of([&] { run_baseline(ExperimentPlan::paper_default(), d, tiny_train(), 1); }),
              ErrorKind::MissingClass);
    EXPECT_EQ(kind_of([&] { run_transfer(tiny_plan(), d, tiny_train(), 1); }), ErrorKind::MissingClass);
}

TEST(Baseline, GridHasOneCellPerSchemeAndDomain) {
    auto plan = ExperimentPlan::paper_default();
    auto cfg = tiny_train();
    cfg.epochs = 1;
    cfg.n_seeds = 1;
    auto grid = run_baseline(plan, tiny_data(), cfg, 1);
    ASSERT_EQ(grid.cells.size(), 6u);
    for (auto s : plan.schemes)
        for (auto d : plan.domains) {
            const auto& cell = grid.at(s, d);
            EXPECT_EQ(cell.report.runs.size(), 1u);
            EXPECT_EQ(cell.report.present, (std::array<bool, 4>{true, true, true, true}));
            EXPECT_GE(cell.report.mean_a, 0.0);
            EXPECT_LE(cell.report.mean_a, 1.0);
        }
    std::ostringstream out;
    write_grid_csv(out, grid);
    EXPECT_EQ(out.str().rfind("scheme,domain,run,Pa-,Pa+,Pr-,Pr+,A_bar\n", 0), 0u);
}

TEST(Transfer, CurveHasBaselinePlusOnePointPerAddition) {
    auto plan = tiny_plan();
    auto res = run_transfer(plan, tiny_data(), tiny_train(), 1);
    ASSERT_EQ(res.curves.size(), plan.schemes.size() * plan.orders.size());
    for (const auto& curve : res.curves) {
        const auto& order = curve.order == "O1" ? plan.orders[0] : plan.orders[1];
        ASSERT_EQ(curve.points.size(), order.classes.size() + 1);
        EXPECT_EQ(curve.points.front().added, "base");
        EXPECT_EQ(curve.points.front().train_classes, plan.base_classes);
        for (std::size_t k = 0; k < curve.points.size(); ++k) {
            const auto& pt = curve.points[k];
            EXPECT_EQ(pt.step, k);
            EXPECT_EQ(pt.train_classes.size(), plan.base_classes.size() + k);
            EXPECT_EQ(std::count(pt.train_classes.begin(), pt.train_classes.end(), plan.holdout), 0);
            ASSERT_TRUE(pt.report.g.has_value());
            EXPECT_GE(*pt.report.g, 0.0);
            EXPECT_LE(*pt.report.g, 1.0);
            ASSERT_TRUE(pt.report.a_tilde.has_value());
        }
    }
    // Both orders end on the same class set, which is trained once and shared.
    EXPECT_EQ(res.at(NormScheme::Trainset, "O1").points.back().report.g,
              res.at(NormScheme::Trainset, "O2").points.back().report.g);
}

TEST(Transfer, HoldoutIsExcludedFromTraining) {
    const auto& d = tiny_data();
    auto cfg = tiny_train();
    cfg.epochs = 1;
    auto run = transfer_run(d, {sc("Pa-1"), sc("Pa+1"), sc("Pr-2"), sc("Pr+2")}, sc("Pa+1.5"), cfg, 3);
    EXPECT_EQ(run.n_holdout, 2u);
    EXPECT_EQ(run.n_test, 8u);
    EXPECT_EQ(kind_of([&] { transfer_run(d, {sc("Pa-1"), sc("Pa+1.5")}, sc("Pa+1.5"), cfg, 3); }),
              ErrorKind::LeakageDetected);
}

TEST(Transfer, ClassSchemeScoresTheHoldoutWithItsOwnStatistics) {
    auto cfg = with_preprocess(tiny_train(), NormScheme::Class, Domain::Time);
    cfg.epochs = 1;
    EXPECT_NO_THROW(transfer_run(tiny_data(), {sc("Pa-1"), sc("Pr+2")}, sc("Pa+1.5"), cfg, 3));
}

TEST(Transfer, CsvIsByteIdenticalAcrossRunsAndWorkerCounts) {
    auto plan = tiny_plan();
    auto render = [&](std::size_t jobs) {
        auto res = run_transfer(plan, tiny_data(), tiny_train(), 5, jobs);
        std::ostringstream out;
        for (const auto& c : res.curves) write_transfer_csv(out, c);
        write_final_csv(out, res.curves.front(), plan.holdout);
        return out.str();
    };
    const auto a = render(1);
    EXPECT_EQ(a, render(1));
    EXPECT_EQ(a, render(2));
    EXPECT_EQ(a.rfind("step,added,n_classes,run,G,A_bar,A_tilde\n", 0), 0u);
}

TEST(Scale, DeskAndPaperSettings) {
    auto paper = scale_settings("paper", 1);
    EXPECT_EQ(paper.grid_data.total(), 33000u);
    EXPECT_EQ(paper.grid_data.signal.length, 20002u);
    EXPECT_EQ(paper.grid_train.n_seeds, 15u);
    EXPECT_EQ(paper.transfer_train.batch_size, 64u);
    auto desk = scale_settings("desk", 1);
    EXPECT_EQ(desk.grid_data.signal.length, 2000u);
    for (const auto& [cls, n] : desk.grid_data.counts) EXPECT_EQ(n, 400u) << cls.name();
    EXPECT_EQ(desk.grid_train.n_seeds, 5u);
    EXPECT_EQ(desk.grid_train.arch, Architecture::Standard);
    EXPECT_EQ(desk.transfer_train.arch, Architecture::Compact);
    EXPECT_EQ(desk.transfer_train.n_seeds, 2u);
    EXPECT_THROW(scale_settings("huge", 1), Error);
}
