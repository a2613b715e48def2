#pragma once

#include "ocmp/compress.hpp"

#include <string>
#include <vector>

namespace ocmp {

// Raised for precedence cycles and contradictory edge input.
class PlanningError : public Error {
   public:
    using Error::Error;
};

struct ParetoPoint {
    double accuracy = 0.0;  // percent
    double bitops_cr = 1.0;
    double cr = 1.0;
    std::string config_id;
    std::string pipeline_tag;

    void validate() const;
};

bool dominates(const ParetoPoint& a, const ParetoPoint& b);

// Non-dominated subset, accuracy descending (ties: higher bitops_cr first).
// Points equal in both objectives collapse to the first one seen.
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points);

struct ReferencePoint {
    double accuracy = 0.0;
    double log_cr = 0.0;  // log2 of bitops_cr

    bool operator==(const ReferencePoint&) const = default;
};

// Area dominated by the points in (accuracy, log2 bitops_cr) space above `ref`.
double hypervolume(const std::vector<ParetoPoint>& front, const ReferencePoint& ref);

// Drops points that do not weakly dominate the reference; returns how many were dropped.
size_t clip_to_reference(std::vector<ParetoPoint>& points, const ReferencePoint& ref);

enum class EdgeDecision { XBeforeY, YBeforeX, Inconclusive };

std::string to_string(EdgeDecision d);

struct OrderFront {
    std::vector<ParetoPoint> points;
    ReferencePoint ref;
};

struct OrderComparison {
    EdgeDecision decision = EdgeDecision::Inconclusive;
    double hv_xy = 0.0;
    double hv_yx = 0.0;
    // hv(winner) / hv(loser) - 1; +inf when the loser has no area, 0 when inconclusive by equality.
    double margin = 0.0;
};

constexpr double kDefaultEdgeMargin = 0.05;

OrderComparison compare_orders(const OrderFront& xy, const OrderFront& yx, double epsilon = kDefaultEdgeMargin);

struct PrecedenceEdge {
    StageKind before;
    StageKind after;
    double margin = 0.0;
};

struct PrecedenceGraph {
    std::vector<StageKind> nodes;  // sorted by kind priority
    std::vector<PrecedenceEdge> edges;
};

// Nodes are `nodes` plus every edge endpoint. Throws PlanningError on self-edges,
// two edges over one pair, or a cycle (the message lists it, e.g. "P->Q->P").
PrecedenceGraph build_dag(const std::vector<StageKind>& nodes, const std::vector<PrecedenceEdge>& edges);

struct TopoOrder {
    std::vector<StageKind> order;
    bool unique = true;
    // One line per step where several nodes were ready, e.g. "step 1: {P, Q} -> P".
    std::vector<std::string> ambiguities;
};

// Kahn's algorithm; ties go to the lower kind (D < P < Q < E).
TopoOrder toposort(const PrecedenceGraph& g);

std::string sequence_string(const std::vector<StageKind>& order);

}  // namespace ocmp
