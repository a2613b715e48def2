#include "support/oracles.hpp"

#include "ocmp/order.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

using namespace ocmp;

namespace {

constexpr auto D = StageKind::Distill;
constexpr auto P = StageKind::Prune;
constexpr auto Q = StageKind::Quantize;
constexpr auto E = StageKind::EarlyExit;

ParetoPoint pt(double acc, double cr, std::string id = "") { return {acc, cr, 1.0, std::move(id), ""}; }

std::string planning_error(const std::vector<PrecedenceEdge>& edges) {
    try {
        build_dag({}, edges);
    } catch (const PlanningError& e) {
        return e.what();
    }
    return "no error";
}

}  // namespace

TEST(Pareto, DominanceIsStrictInOneObjective) {
    EXPECT_TRUE(dominates(pt(90, 4), pt(90, 2)));
    EXPECT_TRUE(dominates(pt(91, 2), pt(90, 2)));
    EXPECT_FALSE(dominates(pt(90, 2), pt(90, 2)));
    EXPECT_FALSE(dominates(pt(91, 1), pt(90, 2)));
}

TEST(Pareto, SmallFront) {
    const auto f = pareto_front({pt(90, 2, "a"), pt(95, 1, "b"), pt(85, 8, "c"), pt(80, 4, "d"), pt(90, 2, "e")});
    ASSERT_EQ(f.size(), 3u);
    EXPECT_EQ(f[0].config_id, "b");
    EXPECT_EQ(f[1].config_id, "a");  // duplicate "e" collapses onto the first seen
    EXPECT_EQ(f[2].config_id, "c");
    EXPECT_THROW(pareto_front({}), ValidationError);
}

TEST(Pareto, MatchesBruteForceOnRandomSets) {
    for (uint64_t trial = 0; trial < 100; ++trial) {
        const auto pts = oracle::random_points(1000, trial, trial % 2 == 1);
        ASSERT_TRUE(oracle::same_front(pareto_front(pts), oracle::brute_force_front(pts))) << "trial " << trial;
    }
}

TEST(Hypervolume, StaircaseArea) {
    const ReferencePoint ref{25.0, 0.0};
    // Points (95, 2^1), (85, 2^3): 10*1 + 60*3 = 190
    EXPECT_DOUBLE_EQ(hypervolume({pt(95, 2), pt(85, 8)}, ref), 190.0);
    // A dominated point adds nothing.
    EXPECT_DOUBLE_EQ(hypervolume({pt(95, 2), pt(85, 8), pt(80, 4)}, ref), 190.0);
    EXPECT_DOUBLE_EQ(hypervolume({}, ref), 0.0);
    EXPECT_THROW(hypervolume({pt(20, 2)}, ref), ValidationError);
    EXPECT_THROW(hypervolume({pt(90, 0.5)}, ref), ValidationError);

    std::vector<ParetoPoint> pts{pt(20, 2), pt(90, 0.5), pt(90, 2)};
    EXPECT_EQ(clip_to_reference(pts, ref), 2u);
    EXPECT_EQ(pts.size(), 1u);
}

TEST(CompareOrders, MarginDecides) {
    const ReferencePoint ref{25.0, 0.0};
    const OrderFront big{{pt(95, 4)}, ref};    // 70 * 2 = 140
    const OrderFront small{{pt(95, 2)}, ref};  // 70
    const OrderFront close{{pt(93, 4)}, ref};  // 68 * 2 = 136, within 5% of 140
    auto c = compare_orders(big, small);
    EXPECT_EQ(c.decision, EdgeDecision::XBeforeY);
    EXPECT_DOUBLE_EQ(c.margin, 1.0);
    EXPECT_EQ(compare_orders(small, big).decision, EdgeDecision::YBeforeX);
    c = compare_orders(big, close);
    EXPECT_EQ(c.decision, EdgeDecision::Inconclusive);
    EXPECT_EQ(compare_orders(big, close, 0.01).decision, EdgeDecision::XBeforeY);
    const OrderFront other_ref{{pt(95, 2)}, ReferencePoint{10.0, 0.0}};
    EXPECT_THROW(compare_orders(big, other_ref), ValidationError);
    EXPECT_EQ(compare_orders(big, OrderFront{{}, ref}).margin, INFINITY);
}

TEST(Planner, PairwiseLawGivesDpqe) {
    const auto start = std::chrono::steady_clock::now();
    const auto g = build_dag({}, {{D, P}, {D, Q}, {D, E}, {P, Q}, {P, E}, {Q, E}});
    const auto t = toposort(g);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    EXPECT_EQ(t.order, (std::vector<StageKind>{D, P, Q, E}));
    EXPECT_TRUE(t.unique);
    EXPECT_EQ(sequence_string(t.order), "D P Q E");
    EXPECT_LT(ms, 1.0);
}

TEST(Planner, EdgeInputOrderDoesNotMatter) {
    const auto a = toposort(build_dag({}, {{Q, E}, {P, E}, {D, E}, {P, Q}, {D, Q}, {D, P}}));
    EXPECT_EQ(a.order, (std::vector<StageKind>{D, P, Q, E}));
}

TEST(Planner, AmbiguityIsReportedAndBrokenByPriority) {
    const auto t = toposort(build_dag({}, {{D, E}, {P, E}, {Q, E}}));
    EXPECT_EQ(t.order, (std::vector<StageKind>{D, P, Q, E}));
    EXPECT_FALSE(t.unique);
    ASSERT_EQ(t.ambiguities.size(), 2u);
    EXPECT_EQ(t.ambiguities[0], "step 1: {D, P, Q} -> D");
    const auto iso = toposort(build_dag({E, D}, {}));
    EXPECT_EQ(iso.order, (std::vector<StageKind>{D, E}));
}

TEST(Planner, CyclesAndInconsistentInputRejected) {
    EXPECT_EQ(planning_error({{P, Q}, {Q, P}}), "precedence cycle: P->Q->P");
    EXPECT_NE(planning_error({{D, P}, {P, Q}, {Q, D}}).find("precedence cycle: D->P->Q->D"), std::string::npos);
    EXPECT_NE(planning_error({{D, P}, {D, P}}).find("inconsistent input"), std::string::npos);
    EXPECT_NE(planning_error({{D, D}}).find("self-edge"), std::string::npos);
}
